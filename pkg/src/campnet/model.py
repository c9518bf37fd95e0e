"""The mask-prediction network: text encoder, prenet, coarse and fine decoders.

The network predicts the acoustic frames of a masked region from the
edited phoneme sequence and the surrounding unmasked speech. Decoding is
non-autoregressive and two-stage: a coarse decoder cross-attends from
the masked speech to the text and emits every frame in one parallel
pass; a fine decoder then refines the sum of the coarse prediction and
the masked input, fusing speech context into the final output.

Parameters are partitioned into three named groups: ``theta_e`` (phoneme
embedding, convolution stack, encoder blocks), ``theta_p`` (prenet and
mask embedding), and ``theta_d`` (both decoders and their output
projections). Speaker adaptation freezes ``theta_e``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import torch
import torch.nn as nn

from .corpus import FEATURE_DIM
from .errors import ModelError
from .masking import MaskedFeatures, MaskSpan
from .transcript import PhonemeSequence

CHECKPOINT_VERSION = 1
PARTITION_NAMES = ("theta_e", "theta_p", "theta_d")


@dataclass(frozen=True)
class ModelConfig:
    """Architecture hyperparameters.

    Defaults follow the full-scale setup (256-wide transformer, 3 encoder
    blocks, 6 coarse blocks, 3 fine blocks, 3-layer text convolution).
    ``vocab_size`` is the phoneme inventory size of the target corpus.
    """

    vocab_size: int
    hidden_dim: int = 256
    encoder_blocks: int = 3
    coarse_blocks: int = 6
    fine_blocks: int = 3
    conv_layers: int = 3
    conv_channels: int = 256
    conv_kernel: int = 5
    phoneme_embed_dim: int = 256
    heads: int = 4
    dropout: float = 0.1
    feature_dim: int = FEATURE_DIM
    ffn_dim: int = 1024

    def __post_init__(self) -> None:
        counts = {
            "vocab_size": self.vocab_size,
            "hidden_dim": self.hidden_dim,
            "encoder_blocks": self.encoder_blocks,
            "coarse_blocks": self.coarse_blocks,
            "fine_blocks": self.fine_blocks,
            "conv_layers": self.conv_layers,
            "conv_channels": self.conv_channels,
            "phoneme_embed_dim": self.phoneme_embed_dim,
            "heads": self.heads,
            "feature_dim": self.feature_dim,
            "ffn_dim": self.ffn_dim,
        }
        for name, value in counts.items():
            if value < 1:
                raise ModelError(f"{name} must be >= 1, got {value}")
        if self.hidden_dim % self.heads != 0:
            raise ModelError(
                f"hidden_dim {self.hidden_dim} not divisible by heads {self.heads}"
            )
        if not 0.0 <= self.dropout < 1.0:
            raise ModelError(f"dropout must lie in [0,1), got {self.dropout}")
        if self.conv_kernel % 2 != 1:
            raise ModelError("conv_kernel must be odd for same-length padding")


def sinusoidal_encoding(length: int, dim: int, device, dtype) -> torch.Tensor:
    """Fixed sin/cos positional table of shape (length, dim)."""
    position = torch.arange(length, device=device, dtype=dtype).unsqueeze(1)
    half = torch.arange(0, dim, 2, device=device, dtype=dtype)
    div = torch.exp(half * (-math.log(10000.0) / dim))
    pe = torch.zeros(length, dim, device=device, dtype=dtype)
    pe[:, 0::2] = torch.sin(position * div)
    pe[:, 1::2] = torch.cos(position * div[: pe[:, 1::2].shape[1]])
    return pe


class TransformerBlock(nn.Module):
    """Pre-norm block: self-attention, optional cross-attention, FFN."""

    def __init__(self, cfg: ModelConfig, cross_attention: bool):
        super().__init__()
        d, h, p = cfg.hidden_dim, cfg.heads, cfg.dropout
        self.self_attn = nn.MultiheadAttention(d, h, dropout=p, batch_first=True)
        self.norm_self = nn.LayerNorm(d)
        self.cross_attn = (
            nn.MultiheadAttention(d, h, dropout=p, batch_first=True)
            if cross_attention
            else None
        )
        self.norm_cross = nn.LayerNorm(d) if cross_attention else None
        self.ffn = nn.Sequential(
            nn.Linear(d, cfg.ffn_dim), nn.ReLU(), nn.Linear(cfg.ffn_dim, d)
        )
        self.norm_ffn = nn.LayerNorm(d)
        self.drop = nn.Dropout(p)

    def forward(
        self,
        x: torch.Tensor,
        key_padding_mask: Optional[torch.Tensor] = None,
        memory: Optional[torch.Tensor] = None,
        memory_key_padding_mask: Optional[torch.Tensor] = None,
        need_cross_weights: bool = False,
    ) -> tuple[torch.Tensor, Optional[torch.Tensor]]:
        q = self.norm_self(x)
        attn, _ = self.self_attn(
            q, q, q, key_padding_mask=key_padding_mask, need_weights=False
        )
        x = x + self.drop(attn)
        weights = None
        if self.cross_attn is not None:
            assert memory is not None
            attn, weights = self.cross_attn(
                self.norm_cross(x),
                memory,
                memory,
                key_padding_mask=memory_key_padding_mask,
                need_weights=need_cross_weights,
                average_attn_weights=False,
            )
            x = x + self.drop(attn)
        x = x + self.drop(self.ffn(self.norm_ffn(x)))
        return x, weights


class TextEncoder(nn.Module):
    """Phoneme embedding + positional encoding + conv stack + transformer."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        self.embedding = nn.Embedding(cfg.vocab_size + 1, cfg.phoneme_embed_dim)
        self.pad_id = cfg.vocab_size
        convs = []
        in_ch = cfg.phoneme_embed_dim
        for _ in range(cfg.conv_layers):
            convs.append(
                nn.Sequential(
                    nn.Conv1d(
                        in_ch,
                        cfg.conv_channels,
                        cfg.conv_kernel,
                        padding=cfg.conv_kernel // 2,
                    ),
                    nn.BatchNorm1d(cfg.conv_channels),
                    nn.ReLU(),
                    nn.Dropout(cfg.dropout),
                )
            )
            in_ch = cfg.conv_channels
        self.convs = nn.ModuleList(convs)
        self.proj = (
            nn.Linear(cfg.conv_channels, cfg.hidden_dim)
            if cfg.conv_channels != cfg.hidden_dim
            else nn.Identity()
        )
        self.blocks = nn.ModuleList(
            TransformerBlock(cfg, cross_attention=False)
            for _ in range(cfg.encoder_blocks)
        )
        self.norm_out = nn.LayerNorm(cfg.hidden_dim)

    def forward(
        self, ids: torch.Tensor, key_padding_mask: Optional[torch.Tensor] = None
    ) -> torch.Tensor:
        x = self.embedding(ids)
        x = x + sinusoidal_encoding(x.shape[1], x.shape[2], x.device, x.dtype)
        x = x.transpose(1, 2)
        for conv in self.convs:
            x = conv(x)
        x = self.proj(x.transpose(1, 2))
        for block in self.blocks:
            x, _ = block(x, key_padding_mask=key_padding_mask)
        return self.norm_out(x)


class Prenet(nn.Module):
    """Two FC+ReLU layers projecting frames into the hidden space.

    Masked positions have their content erased before projection and a
    learned mask embedding added after it, so the network can tell a
    masked frame from a frame that is genuinely zero.
    """

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.fc1 = nn.Linear(cfg.feature_dim, cfg.hidden_dim)
        self.fc2 = nn.Linear(cfg.hidden_dim, cfg.hidden_dim)
        self.mask_embedding = nn.Parameter(torch.randn(cfg.hidden_dim) * 0.02)

    def forward(self, values: torch.Tensor, mask_flag: torch.Tensor) -> torch.Tensor:
        flag = mask_flag.unsqueeze(-1).to(values.dtype)
        x = values * (1.0 - flag)
        x = torch.relu(self.fc1(x))
        x = torch.relu(self.fc2(x))
        x = x + flag * self.mask_embedding
        return x + sinusoidal_encoding(x.shape[1], x.shape[2], x.device, x.dtype)


class CoarseDecoder(nn.Module):
    """Parallel decoder: self-attention over speech, cross-attention to text."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.blocks = nn.ModuleList(
            TransformerBlock(cfg, cross_attention=True)
            for _ in range(cfg.coarse_blocks)
        )
        self.norm_out = nn.LayerNorm(cfg.hidden_dim)
        self.out = nn.Linear(cfg.hidden_dim, cfg.feature_dim)

    def forward(
        self,
        h: torch.Tensor,
        memory: torch.Tensor,
        key_padding_mask: Optional[torch.Tensor] = None,
        memory_key_padding_mask: Optional[torch.Tensor] = None,
        collect_attention: bool = False,
    ) -> tuple[torch.Tensor, list[torch.Tensor]]:
        x = h
        maps: list[torch.Tensor] = []
        for block in self.blocks:
            x, weights = block(
                x,
                key_padding_mask=key_padding_mask,
                memory=memory,
                memory_key_padding_mask=memory_key_padding_mask,
                need_cross_weights=collect_attention,
            )
            if collect_attention and weights is not None:
                maps.append(weights)
        return self.out(self.norm_out(x)), maps


class FineDecoder(nn.Module):
    """Self-attention refiner over the coarse prediction + masked input."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.inp = nn.Linear(cfg.feature_dim, cfg.hidden_dim)
        self.blocks = nn.ModuleList(
            TransformerBlock(cfg, cross_attention=False)
            for _ in range(cfg.fine_blocks)
        )
        self.norm_out = nn.LayerNorm(cfg.hidden_dim)
        self.out = nn.Linear(cfg.hidden_dim, cfg.feature_dim)

    def forward(
        self, summed: torch.Tensor, key_padding_mask: Optional[torch.Tensor] = None
    ) -> torch.Tensor:
        x = self.inp(summed)
        x = x + sinusoidal_encoding(x.shape[1], x.shape[2], x.device, x.dtype)
        for block in self.blocks:
            x, _ = block(x, key_padding_mask=key_padding_mask)
        return self.out(self.norm_out(x))


class CampNet(nn.Module):
    """Full network; see the module docstring for the dataflow."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        self.encoder = TextEncoder(config)
        self.prenet = Prenet(config)
        self.coarse = CoarseDecoder(config)
        self.fine = FineDecoder(config)
        self.coarse_invocations = 0
        self.fine_invocations = 0

    def reset_counters(self) -> None:
        self.coarse_invocations = 0
        self.fine_invocations = 0

    def param_partition(self) -> dict[str, str]:
        """Map every parameter name to theta_e / theta_p / theta_d."""
        groups = {"encoder": "theta_e", "prenet": "theta_p",
                  "coarse": "theta_d", "fine": "theta_d"}
        partition = {}
        for name, _ in self.named_parameters():
            top = name.split(".", 1)[0]
            partition[name] = groups[top]
        return partition

    def parameters_of(self, *group_names: str):
        partition = self.param_partition()
        for name, p in self.named_parameters():
            if partition[name] in group_names:
                yield p

    def run(
        self,
        ids: torch.Tensor,
        values: torch.Tensor,
        mask_flag: torch.Tensor,
        text_padding: Optional[torch.Tensor] = None,
        frame_padding: Optional[torch.Tensor] = None,
        collect_attention: bool = False,
    ) -> dict:
        """Tensor-level forward pass over a (possibly padded) batch.

        ``ids`` is (B, M) int64, ``values`` (B, T, 32), ``mask_flag``
        (B, T) bool. Padding masks follow the torch convention (True =
        ignore). Returns coarse/fine predictions and, when requested,
        per-block cross-attention weights of shape (B, heads, T, M).
        """
        memory = self.encoder(ids, key_padding_mask=text_padding)
        h = self.prenet(values, mask_flag)
        y_coarse, maps = self.coarse(
            h,
            memory,
            key_padding_mask=frame_padding,
            memory_key_padding_mask=text_padding,
            collect_attention=collect_attention,
        )
        self.coarse_invocations += 1
        y_fine = self.fine(y_coarse + values, key_padding_mask=frame_padding)
        self.fine_invocations += 1
        return {"coarse": y_coarse, "fine": y_fine, "attention": maps}


@dataclass
class DecoderOutputs:
    """Single-utterance outputs: both decoder predictions and attention.

    ``attention`` holds one (heads, T, M) array per coarse block; every
    attention row is a distribution over phoneme positions.
    """

    coarse: np.ndarray
    fine: np.ndarray
    attention: list[np.ndarray] = field(default_factory=list)


def build_model(config: ModelConfig, seed: int = 0) -> CampNet:
    """Construct a model with reproducible initialization."""
    torch.manual_seed(seed)
    return CampNet(config)


def _check_ids(x: PhonemeSequence, model: CampNet) -> torch.Tensor:
    if max(x.ids) >= model.config.vocab_size:
        raise ModelError(
            f"phoneme id {max(x.ids)} outside embedding table of size "
            f"{model.config.vocab_size}"
        )
    return torch.tensor(x.ids, dtype=torch.long).unsqueeze(0)


def _model_dtype(model: CampNet) -> torch.dtype:
    return next(model.parameters()).dtype


def encode(x: PhonemeSequence, model: CampNet) -> np.ndarray:
    """Encode the (edited) phoneme sequence into an (M, hidden) matrix."""
    ids = _check_ids(x, model)
    was_training = model.training
    model.eval()
    with torch.no_grad():
        out = model.encoder(ids)[0]
    model.train(was_training)
    return out.cpu().numpy()


def prenet(y_mask: MaskedFeatures, model: CampNet) -> np.ndarray:
    """Project masked features into the hidden space, (T, hidden)."""
    if not np.all(np.isfinite(y_mask.values)):
        raise ModelError("masked features contain non-finite values")
    values = torch.as_tensor(y_mask.values, dtype=_model_dtype(model)).unsqueeze(0)
    flag = torch.as_tensor(y_mask.mask_flag, dtype=torch.bool).unsqueeze(0)
    was_training = model.training
    model.eval()
    with torch.no_grad():
        out = model.prenet(values, flag)[0]
    model.train(was_training)
    return out.cpu().numpy()


def coarse_decode(
    h: np.ndarray, m: np.ndarray, model: CampNet
) -> tuple[np.ndarray, list[np.ndarray]]:
    """One parallel coarse pass; returns (T, 32) and per-block attention."""
    ht = torch.as_tensor(h, dtype=_model_dtype(model)).unsqueeze(0)
    mt = torch.as_tensor(m, dtype=_model_dtype(model)).unsqueeze(0)
    was_training = model.training
    model.eval()
    with torch.no_grad():
        y, maps = model.coarse(ht, mt, collect_attention=True)
    model.coarse_invocations += 1
    model.train(was_training)
    return y[0].cpu().numpy(), [w[0].cpu().numpy() for w in maps]


def fine_input(y_coarse: np.ndarray, y_mask: MaskedFeatures) -> np.ndarray:
    """The fine decoder's input: elementwise sum of prediction and context."""
    if y_coarse.shape != y_mask.values.shape:
        raise ModelError(
            f"shape mismatch: coarse {y_coarse.shape}, masked {y_mask.values.shape}"
        )
    return y_coarse + y_mask.values


def fine_decode(
    y_coarse: np.ndarray, y_mask: MaskedFeatures, model: CampNet
) -> np.ndarray:
    """Refine the coarse prediction using the unmasked speech context."""
    summed = torch.as_tensor(
        fine_input(y_coarse, y_mask), dtype=_model_dtype(model)
    ).unsqueeze(0)
    was_training = model.training
    model.eval()
    with torch.no_grad():
        y = model.fine(summed)
    model.fine_invocations += 1
    model.train(was_training)
    return y[0].cpu().numpy()


def forward(
    x: PhonemeSequence, y_mask: MaskedFeatures, model: CampNet
) -> DecoderOutputs:
    """Full eval-mode pass: encode, prenet, coarse decode, fine decode."""
    ids = _check_ids(x, model)
    if not np.all(np.isfinite(y_mask.values)):
        raise ModelError("masked features contain non-finite values")
    dtype = _model_dtype(model)
    values = torch.as_tensor(y_mask.values, dtype=dtype).unsqueeze(0)
    flag = torch.as_tensor(y_mask.mask_flag, dtype=torch.bool).unsqueeze(0)
    was_training = model.training
    model.eval()
    with torch.no_grad():
        out = model.run(ids, values, flag, collect_attention=True)
    model.train(was_training)
    return DecoderOutputs(
        coarse=out["coarse"][0].cpu().numpy(),
        fine=out["fine"][0].cpu().numpy(),
        attention=[w[0].cpu().numpy() for w in out["attention"]],
    )


def extract_alignment(
    outputs: DecoderOutputs, span: MaskSpan, edited_phonemes: tuple[int, int]
) -> float:
    """Attention mass that masked-frame queries place on edited text.

    Averages over the heads of the final coarse block and the query rows
    inside ``span``; the mass is the summed attention over the edited
    phoneme columns ``[a, b)``. Uniform attention over M phonemes with
    ``b - a = k`` edited gives k/M; a perfectly focused model gives 1.
    """
    if not outputs.attention:
        raise ModelError("decoder outputs carry no attention maps")
    a, b = edited_phonemes
    final = outputs.attention[-1]  # (heads, T, M)
    T, M = final.shape[1], final.shape[2]
    if not (0 <= span.start < span.end <= T):
        raise ModelError(f"span [{span.start},{span.end}) outside [0,{T})")
    if not (0 <= a < b <= M):
        raise ModelError(f"edited phoneme range [{a},{b}) outside [0,{M})")
    rows = final[:, span.start : span.end, :]
    return float(rows[:, :, a:b].sum(axis=2).mean())


# ---------------------------------------------------------------------------
# Checkpoints


def save_checkpoint(model: CampNet, path: Path) -> None:
    """Write a versioned checkpoint: config, parameters, partition map."""
    payload = {
        "format": "campnet-checkpoint",
        "version": CHECKPOINT_VERSION,
        "config": asdict(model.config),
        "state": model.state_dict(),
        "partition": model.param_partition(),
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    torch.save(payload, path)


def load_checkpoint(path: Path) -> CampNet:
    """Reconstruct a model bit-exactly from a checkpoint file."""
    payload = torch.load(Path(path), map_location="cpu", weights_only=True)
    if payload.get("format") != "campnet-checkpoint":
        raise ModelError(f"{path} is not a campnet checkpoint")
    if payload.get("version") != CHECKPOINT_VERSION:
        raise ModelError(f"unsupported checkpoint version {payload.get('version')}")
    config = ModelConfig(**payload["config"])
    model = CampNet(config)
    model.load_state_dict(payload["state"])
    expected = model.param_partition()
    if payload["partition"] != expected:
        raise ModelError(f"{path}: checkpoint partition does not match architecture")
    return model
