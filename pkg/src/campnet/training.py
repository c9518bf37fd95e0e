"""Loss, the optimization loop, the mask-ratio sweep, and speaker adaptation.

Both decoders regress against the same target: the true frames inside
the mask span and the (zero) mask token everywhere else. The loss is the
sum of mean absolute errors of the coarse and the fine prediction.
Training is deterministic for a given (seed, config, corpus) when run in
the default single-process mode.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import torch

from .corpus import FeatureSequence, Utterance
from .errors import AdaptError, TrainError
from .masking import MaskSpan, apply_mask, sample_mask_span
from .model import CampNet, DecoderOutputs, ModelConfig, build_model, forward


@dataclass(frozen=True)
class TrainConfig:
    """Optimization hyperparameters; defaults mirror the full-scale run."""

    steps: int
    lr: float = 1e-3
    batch_size: int = 16
    mask_ratio: float = 0.12
    betas: tuple[float, float] = (0.9, 0.999)
    seed: int = 0
    grad_clip: float = 1.0
    mask_only_loss: bool = False
    coarse_weight: float = 1.0
    fine_weight: float = 1.0
    adapt_epochs: int = 5

    def __post_init__(self) -> None:
        if self.steps < 0:
            raise TrainError("steps must be non-negative")
        if self.lr <= 0:
            raise TrainError("learning rate must be positive")
        if not 0.0 < self.mask_ratio < 1.0:
            raise TrainError(f"mask_ratio must lie in (0,1), got {self.mask_ratio}")
        if self.batch_size < 1:
            raise TrainError("batch_size must be at least 1")
        if self.adapt_epochs < 0:
            raise TrainError("adapt_epochs must be non-negative")


@dataclass(frozen=True)
class LossReport:
    """Per-step loss decomposition; total = coarse_term + fine_term."""

    total: float
    coarse_term: float
    fine_term: float
    masked_frame_count: int


def build_target(y: FeatureSequence | np.ndarray, span: MaskSpan) -> np.ndarray:
    """Regression target: true frames inside the span, mask token outside."""
    values = y.values if isinstance(y, FeatureSequence) else np.asarray(y)
    T = values.shape[0]
    if span.end > T:
        raise TrainError(f"span [{span.start},{span.end}) exceeds length {T}")
    target = np.zeros_like(values)
    target[span.start : span.end] = values[span.start : span.end]
    return target


def loss(
    outputs: DecoderOutputs,
    target: np.ndarray,
    spans: Optional[Sequence[MaskSpan]] = None,
    coarse_weight: float = 1.0,
    fine_weight: float = 1.0,
) -> LossReport:
    """Mean-absolute-error loss of both decoders against the shared target."""
    target = np.asarray(target)
    if outputs.coarse.shape != target.shape or outputs.fine.shape != target.shape:
        raise TrainError(
            f"shape mismatch: coarse {outputs.coarse.shape}, "
            f"fine {outputs.fine.shape}, target {target.shape}"
        )
    coarse_term = coarse_weight * float(np.abs(outputs.coarse - target).mean())
    fine_term = fine_weight * float(np.abs(outputs.fine - target).mean())
    masked = sum(len(s) for s in spans) if spans else 0
    return LossReport(
        total=coarse_term + fine_term,
        coarse_term=coarse_term,
        fine_term=fine_term,
        masked_frame_count=masked,
    )


# ---------------------------------------------------------------------------
# Batched training internals


def _collate(
    batch: Sequence[Utterance],
    spans: Sequence[MaskSpan],
    pad_id: int,
    dtype: torch.dtype,
) -> dict:
    B = len(batch)
    t_lens = [len(u.features) for u in batch]
    m_lens = [len(u.phonemes) for u in batch]
    Tmax, Mmax = max(t_lens), max(m_lens)
    ids = torch.full((B, Mmax), pad_id, dtype=torch.long)
    text_pad = torch.ones(B, Mmax, dtype=torch.bool)
    values = torch.zeros(B, Tmax, batch[0].features.values.shape[1], dtype=dtype)
    flags = torch.zeros(B, Tmax, dtype=torch.bool)
    target = torch.zeros_like(values)
    frame_pad = torch.ones(B, Tmax, dtype=torch.bool)
    for i, (u, span) in enumerate(zip(batch, spans)):
        M, T = m_lens[i], t_lens[i]
        ids[i, :M] = torch.tensor(u.phonemes.ids, dtype=torch.long)
        text_pad[i, :M] = False
        masked = apply_mask(u.features, [span])
        values[i, :T] = torch.as_tensor(masked.values, dtype=dtype)
        flags[i, :T] = torch.as_tensor(masked.mask_flag)
        target[i, :T] = torch.as_tensor(build_target(u.features, span), dtype=dtype)
        frame_pad[i, :T] = False
    return {
        "ids": ids,
        "text_pad": text_pad,
        "values": values,
        "flags": flags,
        "target": target,
        "frame_pad": frame_pad,
    }


def _weighted_mae(pred: torch.Tensor, target: torch.Tensor, w: torch.Tensor):
    per_frame = (pred - target).abs().mean(dim=-1)
    return (per_frame * w).sum() / w.sum()


def _train_step(
    model: CampNet,
    optimizer: torch.optim.Optimizer,
    batch: dict,
    cfg: TrainConfig,
    trainable: list[torch.nn.Parameter],
) -> LossReport:
    out = model.run(
        batch["ids"],
        batch["values"],
        batch["flags"],
        text_padding=batch["text_pad"],
        frame_padding=batch["frame_pad"],
    )
    if cfg.mask_only_loss:
        w = batch["flags"].to(batch["values"].dtype)
    else:
        w = (~batch["frame_pad"]).to(batch["values"].dtype)
    coarse_term = cfg.coarse_weight * _weighted_mae(out["coarse"], batch["target"], w)
    fine_term = cfg.fine_weight * _weighted_mae(out["fine"], batch["target"], w)
    total = coarse_term + fine_term
    optimizer.zero_grad()
    total.backward()
    if cfg.grad_clip > 0:
        torch.nn.utils.clip_grad_norm_(trainable, cfg.grad_clip)
    optimizer.step()
    return LossReport(
        total=float(total.detach()),
        coarse_term=float(coarse_term.detach()),
        fine_term=float(fine_term.detach()),
        masked_frame_count=int(batch["flags"].sum()),
    )


def _run_steps(
    model: CampNet,
    draw_batch,
    steps: int,
    cfg: TrainConfig,
    trainable: list[torch.nn.Parameter],
    step_offset: int = 0,
) -> list[LossReport]:
    optimizer = torch.optim.Adam(trainable, lr=cfg.lr, betas=cfg.betas)
    dtype = next(model.parameters()).dtype
    pad_id = model.config.vocab_size
    curve: list[LossReport] = []
    for step in range(steps):
        batch_utts, spans = draw_batch(step)
        batch = _collate(batch_utts, spans, pad_id, dtype)
        report = _train_step(model, optimizer, batch, cfg, trainable)
        if not math.isfinite(report.total):
            raise TrainError(f"loss diverged at step {step_offset + step}")
        curve.append(report)
    return curve


def train(
    corpus: Sequence[Utterance], model: CampNet, cfg: TrainConfig
) -> tuple[CampNet, list[LossReport]]:
    """Train in place; returns the model and the per-step loss curve.

    Each step samples ``batch_size`` utterances with replacement and one
    fresh mask span per utterance at ``cfg.mask_ratio``.
    """
    if not corpus:
        raise TrainError("cannot train on an empty corpus")
    if cfg.steps == 0:
        return model, []
    rng = np.random.default_rng(cfg.seed)
    torch.manual_seed(cfg.seed)
    model.train()

    def draw_batch(step: int):
        idx = rng.integers(0, len(corpus), size=cfg.batch_size)
        batch = [corpus[int(i)] for i in idx]
        spans = [
            sample_mask_span(len(u.features), cfg.mask_ratio, rng) for u in batch
        ]
        return batch, spans

    trainable = [p for p in model.parameters() if p.requires_grad]
    curve = _run_steps(model, draw_batch, cfg.steps, cfg, trainable)
    model.eval()
    return model, curve


@dataclass(frozen=True)
class SweepRow:
    ratio: float
    final_loss: float
    model: Optional[CampNet] = field(default=None, compare=False, repr=False)
    curve: Optional[list[LossReport]] = field(default=None, compare=False, repr=False)


def mask_ratio_sweep(
    corpus: Sequence[Utterance],
    ratios: Sequence[float],
    cfg: TrainConfig,
    config: ModelConfig,
) -> list[SweepRow]:
    """Train one fresh model per mask ratio with shared seed and steps.

    The reported final loss is the mean total loss over the trailing
    ``min(25, steps)`` steps, which damps single-step noise. Each row
    also carries its trained model and loss curve (excluded from row
    equality).
    """
    for r in ratios:
        if not 0.0 < r < 1.0:
            raise TrainError(f"sweep ratio {r} outside (0,1)")
    rows: list[SweepRow] = []
    for r in ratios:
        model = build_model(config, seed=cfg.seed)
        _, curve = train(corpus, model, replace(cfg, mask_ratio=r))
        tail = curve[-min(25, len(curve)) :] if curve else []
        final = float(np.mean([c.total for c in tail])) if tail else float("nan")
        rows.append(
            SweepRow(ratio=float(r), final_loss=final, model=model, curve=curve)
        )
    return rows


# ---------------------------------------------------------------------------
# Speaker adaptation


def _adapt_steps(model: CampNet, draw_batch, steps: int, cfg: TrainConfig) -> None:
    """Run fine-tuning steps with the encoder frozen bit-exactly."""
    saved_flags = {n: p.requires_grad for n, p in model.named_parameters()}
    for p in model.encoder.parameters():
        p.requires_grad_(False)
    model.train()
    model.encoder.eval()  # freeze batch-norm statistics as well
    try:
        trainable = list(model.parameters_of("theta_p", "theta_d"))
        _run_steps(model, draw_batch, steps, cfg, trainable)
    finally:
        for n, p in model.named_parameters():
            p.requires_grad_(saved_flags[n])
        model.eval()


def adapt_few_shot(
    model: CampNet, speaker_utts: Sequence[Utterance], cfg: TrainConfig
) -> CampNet:
    """Fine-tune prenet and decoders on a small set of one speaker.

    Runs ``cfg.adapt_epochs`` passes over the adaptation set; the
    encoder group theta_e is left bit-identical.
    """
    if not speaker_utts:
        raise AdaptError("adaptation set is empty")
    if cfg.adapt_epochs == 0:
        return model
    rng = np.random.default_rng(cfg.seed)
    torch.manual_seed(cfg.seed)
    bs = min(cfg.batch_size, len(speaker_utts))
    schedule: list[list[int]] = []
    for _ in range(cfg.adapt_epochs):
        order = rng.permutation(len(speaker_utts))
        for lo in range(0, len(order), bs):
            schedule.append([int(i) for i in order[lo : lo + bs]])

    def draw_batch(step: int):
        batch = [speaker_utts[i] for i in schedule[step]]
        spans = [
            sample_mask_span(len(u.features), cfg.mask_ratio, rng) for u in batch
        ]
        return batch, spans

    _adapt_steps(model, draw_batch, len(schedule), cfg)
    return model


def adapt_one_shot(model: CampNet, utt: Utterance, cfg: TrainConfig) -> CampNet:
    """Fine-tune on a single utterance, drawing a fresh mask every step.

    The random mask positions act as data augmentation over the lone
    utterance. One epoch is ceil(1 / mask_ratio) steps: the number of
    ratio-sized spans needed to cover the utterance once, so the default
    five epochs see every region about five times. Longer schedules
    measurably overfit the single utterance and degrade the model on the
    rest of the speaker's speech.
    """
    if cfg.adapt_epochs == 0:
        return model
    rng = np.random.default_rng(cfg.seed)
    torch.manual_seed(cfg.seed)
    T = len(utt.features)
    steps = cfg.adapt_epochs * math.ceil(1.0 / cfg.mask_ratio)

    def draw_batch(step: int):
        return [utt], [sample_mask_span(T, cfg.mask_ratio, rng)]

    _adapt_steps(model, draw_batch, steps, cfg)
    return model


# ---------------------------------------------------------------------------
# Evaluation helpers and artifacts


def masked_region_mae(
    model: CampNet,
    utts: Sequence[Utterance],
    mask_ratio: float,
    seed: int = 0,
) -> float:
    """Mean absolute error of the fine prediction inside sampled spans."""
    rng = np.random.default_rng(seed)
    errors: list[float] = []
    for u in utts:
        span = sample_mask_span(len(u.features), mask_ratio, rng)
        masked = apply_mask(u.features, [span])
        out = forward(u.phonemes, masked, model)
        diff = out.fine[span.start : span.end] - u.features.values[span.start : span.end]
        errors.append(float(np.abs(diff).mean()))
    return float(np.mean(errors))


def write_loss_csv(curve: Sequence[LossReport], path: Path) -> None:
    """Emit the loss curve as step,total,coarse,fine."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "total", "coarse", "fine"])
        for i, rep in enumerate(curve):
            writer.writerow([i, rep.total, rep.coarse_term, rep.fine_term])
