"""Command-line surface: gen, train, sweep, adapt, edit, eval, serve.

Every subcommand resolves its configuration from (lowest to highest
precedence) built-in defaults, an optional JSON config file, command
line flags, and the CAMPNET_SEED environment variable for the seed.
The fully resolved configuration is written as ``run_config.json`` next
to the outputs so any run can be reproduced from its artifacts.

Exit codes: 0 success, 2 usage/config error, 3 training error,
4 data/edit error.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import warnings
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .corpus import (
    FeatureSequence,
    SyntheticCorpusSpec,
    generate_synthetic,
    load_corpus,
    read_features,
    save_corpus,
    write_features,
)
from .editing import (
    DEFAULT_EXPANSION,
    MaskLengthWarning,
    fit_duration_model,
    result_to_json,
    run_edit,
)
from .errors import (
    AdaptError,
    CampNetError,
    EditError,
    FormatError,
    IngestError,
    MetricError,
    ModelError,
    TrainError,
)
from .metrics import dtw, f0_corr, f0_rmse, mcd, vuv_error, voicing_flags
from .model import ModelConfig, build_model, load_checkpoint, save_checkpoint
from .training import (
    TrainConfig,
    adapt_few_shot,
    adapt_one_shot,
    mask_ratio_sweep,
    train,
    write_loss_csv,
)
from .transcript import EditScript

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_TRAIN = 3
EXIT_DATA = 4

SEED_ENV_VAR = "CAMPNET_SEED"


def _load_config_file(path: Optional[str]) -> dict:
    if path is None:
        return {}
    try:
        with open(path, "r", encoding="utf-8") as fh:
            obj = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise FormatError(f"cannot read config file {path}: {exc}") from exc
    if not isinstance(obj, dict):
        raise FormatError(f"config file {path} must hold a JSON object")
    return obj


def _resolve(args: argparse.Namespace, defaults: dict) -> dict:
    """Merge defaults < config file < flags < CAMPNET_SEED."""
    merged = dict(defaults)
    merged.update(_load_config_file(getattr(args, "config", None)))
    for key in defaults:
        value = getattr(args, key, None)
        if value is not None:
            merged[key] = value
    env_seed = os.environ.get(SEED_ENV_VAR)
    if env_seed is not None and "seed" in merged:
        try:
            merged["seed"] = int(env_seed)
        except ValueError as exc:
            raise FormatError(f"{SEED_ENV_VAR} must be an integer") from exc
    return merged


def _write_run_config(out_dir: Path, command: str, resolved: dict) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "run_config.json", "w", encoding="utf-8") as fh:
        json.dump({"command": command, **resolved}, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _model_config_from(resolved: dict, vocab_size: int) -> ModelConfig:
    return ModelConfig(
        vocab_size=vocab_size,
        hidden_dim=resolved["hidden_dim"],
        heads=resolved["heads"],
        dropout=resolved["dropout"],
        conv_channels=resolved["conv_channels"],
        phoneme_embed_dim=resolved["embed_dim"],
        ffn_dim=resolved["ffn_dim"],
    )


def _train_config_from(resolved: dict) -> TrainConfig:
    return TrainConfig(
        steps=resolved["steps"],
        lr=resolved["lr"],
        batch_size=resolved["batch_size"],
        mask_ratio=resolved["mask_ratio"],
        seed=resolved["seed"],
        mask_only_loss=resolved["mask_only_loss"],
        adapt_epochs=resolved.get("epochs", 5),
    )


_MODEL_DEFAULTS = {
    "hidden_dim": 256,
    "heads": 4,
    "dropout": 0.1,
    "conv_channels": 256,
    "embed_dim": 256,
    "ffn_dim": 1024,
}

_TRAIN_DEFAULTS = {
    "steps": 1000,
    "lr": 1e-3,
    "batch_size": 16,
    "mask_ratio": 0.12,
    "seed": 0,
    "mask_only_loss": False,
    **_MODEL_DEFAULTS,
}


def _add_model_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--hidden-dim", dest="hidden_dim", type=int)
    p.add_argument("--heads", type=int)
    p.add_argument("--dropout", type=float)
    p.add_argument("--conv-channels", dest="conv_channels", type=int)
    p.add_argument("--embed-dim", dest="embed_dim", type=int)
    p.add_argument("--ffn-dim", dest="ffn_dim", type=int)


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--steps", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--mask-ratio", dest="mask_ratio", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument(
        "--mask-only-loss",
        dest="mask_only_loss",
        action="store_const",
        const=True,
        default=None,
    )
    _add_model_flags(p)


# ---------------------------------------------------------------------------
# Subcommands


def cmd_gen(args: argparse.Namespace) -> int:
    defaults = {
        "vocab": 10,
        "utts": 100,
        "phonemes_min": 6,
        "phonemes_max": 10,
        "frames_min": 6,
        "frames_max": 10,
        "speakers": 1,
        "seed": 0,
    }
    resolved = _resolve(args, defaults)
    spec = SyntheticCorpusSpec(
        vocab_size=resolved["vocab"],
        utterance_count=resolved["utts"],
        phonemes_per_utt=(resolved["phonemes_min"], resolved["phonemes_max"]),
        frames_per_phoneme=(resolved["frames_min"], resolved["frames_max"]),
        seed=resolved["seed"],
        speakers=resolved["speakers"],
    )
    utts = generate_synthetic(spec)
    out = Path(args.output)
    save_corpus(utts, out)
    _write_run_config(out, "gen", resolved)
    print(f"wrote {len(utts)} utterances to {out}")
    return EXIT_OK


def cmd_train(args: argparse.Namespace) -> int:
    resolved = _resolve(args, _TRAIN_DEFAULTS)
    utts = load_corpus(Path(args.corpus))
    if not utts:
        raise IngestError(f"corpus {args.corpus} is empty")
    vocab_size = len(utts[0].phonemes.vocab)
    config = _model_config_from(resolved, vocab_size)
    cfg = _train_config_from(resolved)
    model = build_model(config, seed=cfg.seed)
    model, curve = train(utts, model, cfg)
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    save_checkpoint(model, out / "checkpoint.pt")
    write_loss_csv(curve, out / "loss.csv")
    _write_run_config(out, "train", resolved)
    final = curve[-1].total if curve else float("nan")
    print(f"trained {cfg.steps} steps, final loss {final:.6f}; wrote {out}")
    return EXIT_OK


def cmd_sweep(args: argparse.Namespace) -> int:
    resolved = _resolve(args, {**_TRAIN_DEFAULTS, "ratios": "6,12,16"})
    try:
        raw = [float(tok) for tok in str(resolved["ratios"]).split(",") if tok]
    except ValueError as exc:
        raise FormatError(f"bad --ratios list: {exc}") from exc
    ratios = [r / 100.0 if r > 1.0 else r for r in raw]
    utts = load_corpus(Path(args.corpus))
    if not utts:
        raise IngestError(f"corpus {args.corpus} is empty")
    config = _model_config_from(resolved, len(utts[0].phonemes.vocab))
    cfg = _train_config_from(resolved)
    rows = mask_ratio_sweep(utts, ratios, cfg, config)
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    for row in rows:
        tag = f"ratio{int(round(row.ratio * 100)):02d}"
        save_checkpoint(row.model, out / f"checkpoint_{tag}.pt")
        write_loss_csv(row.curve or [], out / f"loss_{tag}.csv")
    with open(out / "summary.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["ratio", "final_loss"])
        for row in rows:
            writer.writerow([row.ratio, row.final_loss])
    _write_run_config(out, "sweep", resolved)
    for row in rows:
        print(f"ratio {row.ratio:.2f}: final loss {row.final_loss:.6f}")
    return EXIT_OK


def cmd_adapt(args: argparse.Namespace) -> int:
    resolved = _resolve(args, {**_TRAIN_DEFAULTS, "epochs": 5})
    utts = load_corpus(Path(args.corpus))
    model = load_checkpoint(Path(args.checkpoint))
    cfg = _train_config_from(resolved)
    if args.mode == "one-shot":
        if not args.utt:
            raise FormatError("--mode one-shot needs --utt ID")
        matching = [u for u in utts if u.id == args.utt]
        if not matching:
            raise IngestError(f"utterance {args.utt} not found in corpus")
        model = adapt_one_shot(model, matching[0], cfg)
    else:
        if not args.speaker:
            raise FormatError("--mode few-shot needs --speaker NAME")
        speaker_utts = [u for u in utts if u.speaker == args.speaker]
        if not speaker_utts:
            raise AdaptError(f"no utterances for speaker {args.speaker}")
        model = adapt_few_shot(model, speaker_utts, cfg)
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    save_checkpoint(model, out / "checkpoint.pt")
    _write_run_config(out, "adapt", resolved)
    print(f"adapted ({args.mode}); wrote {out / 'checkpoint.pt'}")
    return EXIT_OK


def cmd_edit(args: argparse.Namespace) -> int:
    resolved = _resolve(args, {"epsilon": DEFAULT_EXPANSION, "seed": 0})
    if resolved["epsilon"] < 0:
        raise FormatError("--epsilon must be non-negative")
    utts = load_corpus(Path(args.corpus))
    matching = [u for u in utts if u.id == args.utt]
    if not matching:
        raise IngestError(f"utterance {args.utt} not found in corpus")
    utt = matching[0]
    try:
        script_text = Path(args.script).read_text(encoding="utf-8")
    except OSError as exc:
        raise FormatError(f"cannot read script {args.script}: {exc}") from exc
    script = EditScript.from_json(script_text)
    model = load_checkpoint(Path(args.checkpoint))
    dm = fit_duration_model(utts)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", MaskLengthWarning)
        result = run_edit(
            model,
            utt,
            script,
            expansion=resolved["epsilon"],
            dm=dm,
            word_level=args.word_level,
            use_duration_model_delete=args.duration_guided_delete,
        )
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    write_features(out / f"{utt.id}_edited.campf", result.features.values)
    sidecar = result_to_json(result)
    sidecar["op"] = script.op
    sidecar["epsilon"] = resolved["epsilon"]
    sidecar["word_level"] = bool(args.word_level)
    with open(out / f"{utt.id}_edited.json", "w", encoding="utf-8") as fh:
        json.dump(sidecar, fh, indent=2)
        fh.write("\n")
    _write_run_config(out, "edit", resolved)
    for i, plan_spans in enumerate(sidecar["spans"]):
        for s in plan_spans:
            print(f"iteration {i}: mask span [{s[0]},{s[1]})")
    for w in caught:
        if issubclass(w.category, MaskLengthWarning):
            print(f"warning: {w.message}")
    print(
        f"edited {utt.id}: {len(utt.features)} -> {sidecar['final_length']} frames, "
        f"{sidecar['iterations']} iteration(s)"
    )
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    refs = {u.id: u for u in load_corpus(Path(args.ref))}
    edited_dir = Path(args.edited)
    edited_files = sorted(edited_dir.glob("*.campf"))
    if not edited_files:
        raise IngestError(f"no .campf files under {edited_dir}")
    pairs = []
    missing = []
    for f in edited_files:
        utt_id = f.stem.removesuffix("_edited")
        if utt_id in refs:
            pairs.append((utt_id, f))
        else:
            missing.append(utt_id)
    if missing:
        raise IngestError(
            f"edited files without reference utterances: {', '.join(missing)}"
        )
    rows = []
    for utt_id, f in pairs:
        ref = refs[utt_id]
        edited = FeatureSequence(read_features(f))
        path = dtw(ref.features, edited)
        ref_v = voicing_flags(ref.features)
        ed_v = voicing_flags(edited)
        # Log-F0 metrics are undefined when a model emits non-positive
        # pitch on a voiced frame; record NaN instead of failing the batch.
        try:
            rmse = f0_rmse(ref.features.pitch, edited.pitch, ref_v, ed_v, path=path)
            corr = f0_corr(ref.features.pitch, edited.pitch, ref_v, ed_v, path=path)
        except MetricError:
            rmse, corr = float("nan"), float("nan")
        rows.append(
            [
                utt_id,
                mcd(ref.features, edited, path=path),
                rmse,
                vuv_error(ref_v, ed_v, path=path),
                corr,
            ]
        )
    out_path = Path(args.output) if args.output else None
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        mean = ["mean"] + [float(np.nanmean([r[i] for r in rows])) for i in range(1, 5)]
    header = ["utterance_id", "mcd_db", "f0_rmse", "vuv_error_pct", "f0_corr"]
    lines = [header] + rows + [mean]
    if out_path:
        out_path.parent.mkdir(parents=True, exist_ok=True)
        with open(out_path, "w", newline="") as fh:
            csv.writer(fh).writerows(lines)
    writer = csv.writer(sys.stdout)
    writer.writerows(lines)
    return EXIT_OK


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .service import create_app

    utts = load_corpus(Path(args.corpus))
    model = load_checkpoint(Path(args.checkpoint))
    app = create_app(
        utts, model, vocoder_cmd=args.vocoder_cmd, ui_dir=args.ui
    )
    uvicorn.run(app, host=args.host, port=args.port)
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="campnet",
        description="Text-based speech editing over acoustic feature sequences",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic corpus")
    p.add_argument("--config")
    p.add_argument("--vocab", type=int)
    p.add_argument("--utts", type=int)
    p.add_argument("--phonemes-min", dest="phonemes_min", type=int)
    p.add_argument("--phonemes-max", dest="phonemes_max", type=int)
    p.add_argument("--frames-min", dest="frames_min", type=int)
    p.add_argument("--frames-max", dest="frames_max", type=int)
    p.add_argument("--speakers", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("train", help="train a model on a corpus")
    p.add_argument("--config")
    p.add_argument("--corpus", required=True)
    p.add_argument("-o", "--output", required=True)
    _add_train_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sweep", help="train one model per mask ratio")
    p.add_argument("--config")
    p.add_argument("--corpus", required=True)
    p.add_argument("--ratios")
    p.add_argument("-o", "--output", required=True)
    _add_train_flags(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("adapt", help="speaker-adapt a trained checkpoint")
    p.add_argument("--config")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--mode", choices=["one-shot", "few-shot"], required=True)
    p.add_argument("--utt")
    p.add_argument("--speaker")
    p.add_argument("--epochs", type=int)
    p.add_argument("-o", "--output", required=True)
    _add_train_flags(p)
    p.set_defaults(func=cmd_adapt)

    p = sub.add_parser("edit", help="apply an edit script to an utterance")
    p.add_argument("--config")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--utt", required=True)
    p.add_argument("--script", required=True)
    p.add_argument("--epsilon", type=int)
    p.add_argument("--word-level", dest="word_level", action="store_true")
    p.add_argument(
        "--duration-guided-delete",
        dest="duration_guided_delete",
        action="store_true",
        help="size the delete-junction re-mask from adjacent phoneme durations",
    )
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_edit)

    p = sub.add_parser("eval", help="score edited features against references")
    p.add_argument("--ref", required=True)
    p.add_argument("--edited", required=True)
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("serve", help="start the HTTP editing service")
    p.add_argument("--corpus", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--vocoder-cmd", dest="vocoder_cmd")
    p.add_argument("--ui")
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_USAGE
    try:
        return args.func(args)
    except FormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except TrainError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_TRAIN
    except (IngestError, EditError, ModelError, MetricError, AdaptError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except CampNetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
