"""seglat command line: synth, preprocess, train, eval, profile, sweep, presets.

Exit codes: 0 success, 1 runtime failure (training abort, failed
preprocessing files), 2 usage or configuration errors.
"""

from __future__ import annotations

import argparse
import logging
import sys
from collections.abc import Sequence
from pathlib import Path
from typing import Any

import numpy as np
from pydantic import ValidationError

from seglat.checkpoint import load_checkpoint
from seglat.config import RunConfig, build_run_config, format_config, log_level_from_env
from seglat.dataset import (
    MANIFEST_NAME,
    DatasetManifest,
    dataset_checksum,
    generate_synthetic_dataset,
)
from seglat.errors import (
    ConfigurationError,
    DataError,
    FormatError,
    SeglatError,
    TrainingAborted,
    UsageError,
)
from seglat.experiments import render_mean_accuracy, run_sweep
from seglat.metrics import render_metrics
from seglat.model import init_model
from seglat.pipeline import example_input, output_dir, preprocess_manifest
from seglat.presets import PRESETS, SweepSpec, get_preset, list_presets
from seglat.profiler import benchmark, build_cost_report, render_table, write_csv
from seglat.reports import write_jsonl
from seglat.train import BEST_NAME, encode_split, evaluate, lr_at_epoch, train_from_manifest

logger = logging.getLogger("seglat.cli")

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2

USAGE_ERRORS = (ConfigurationError, FormatError, UsageError, DataError, ValidationError)

CLASS_NAMES = ("no_pain", "low_pain", "high_pain")


def configure_logging(level: str | None) -> None:
    name = (level or log_level_from_env()).upper()
    numeric = logging.getLevelName(name)
    if not isinstance(numeric, int):
        raise UsageError(f"unknown log level {name!r}")
    logging.basicConfig(level=numeric, format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    logging.getLogger("seglat").setLevel(numeric)


def _run_config(args: argparse.Namespace, **extra: Any) -> RunConfig:
    preset = get_preset(args.preset).config if args.preset else None
    if args.seed is not None:
        extra["seed"] = args.seed
    extra = {k: v for k, v in extra.items() if v is not None}
    return build_run_config(
        preset=preset, config_file=args.config, overrides=args.overrides or (), extra=extra
    )


def _processed_manifest_path(cfg: RunConfig, explicit: str | None) -> Path:
    if explicit:
        return Path(explicit)
    return output_dir(Path(cfg.data_dir) / MANIFEST_NAME, cfg.representation) / MANIFEST_NAME


def _load_processed(cfg: RunConfig, path: Path) -> DatasetManifest:
    manifest = DatasetManifest.load(path)
    if manifest.representation != cfg.representation:
        raise ConfigurationError(
            f"{path} holds {manifest.representation} inputs, config asks for {cfg.representation}"
        )
    if len(manifest) == 0:
        raise ConfigurationError(f"{path} has no entries")
    cfg.check_input(manifest.load_input(manifest.entries[0]).shape)
    return manifest


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_synth(args: argparse.Namespace) -> int:
    cfg = _run_config(args)
    out = Path(args.out or cfg.data_dir)
    if args.n_per_class < 1:
        raise UsageError(f"--n-per-class must be >= 1, got {args.n_per_class}")
    try:
        generate_synthetic_dataset(
            out,
            args.n_per_class,
            channels=args.channels,
            length=args.length,
            sample_rate_hz=args.sample_rate,
            seed=cfg.seed,
        )
    except OSError as exc:
        logger.error("Cannot write dataset to %s: %s", out, exc)
        return EXIT_USAGE
    manifest_path = out / MANIFEST_NAME
    print(manifest_path)
    print(f"sha256 {dataset_checksum(manifest_path)}")
    return EXIT_OK


def cmd_preprocess(args: argparse.Namespace) -> int:
    cfg = _run_config(args, representation=args.representation)
    source = Path(args.manifest or Path(cfg.data_dir) / MANIFEST_NAME)
    result = preprocess_manifest(source, cfg, out_dir=args.out, force=args.force)
    print(result.manifest_path)
    if result.skipped:
        return EXIT_OK
    if result.shape is not None:
        print(f"shape {list(result.shape)} channels {result.shape[-1]}")
    for path, reason in sorted(result.failures.items()):
        print(f"failed {path}: {reason}", file=sys.stderr)
    return EXIT_OK if result.ok else EXIT_FAILURE


def cmd_train(args: argparse.Namespace) -> int:
    cfg = _run_config(args, run_dir=args.run_dir)
    manifest = _load_processed(cfg, _processed_manifest_path(cfg, args.manifest))
    shape = manifest.load_input(manifest.entries[0]).shape
    params = init_model(cfg.model, cfg.token_width(shape), cfg.seed)
    train_cfg = cfg.train
    warm, last = train_cfg.epochs_warmup, train_cfg.epochs_total - 1
    print(
        f"lr schedule: {lr_at_epoch(train_cfg, 0):g} -> {train_cfg.base_lr:g} (epoch {warm}) "
        f"-> {lr_at_epoch(train_cfg, last):g} (epoch {last})"
    )
    run_dir = Path(cfg.run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    (run_dir / "config.txt").write_text(format_config(cfg), encoding="utf-8")
    result = train_from_manifest(
        params,
        manifest,
        cfg.tokenizer,
        cfg.effective_segments,
        train_cfg,
        run_dir=run_dir,
        metadata={
            "representation": cfg.representation,
            "segments": cfg.effective_segments,
            "seed": cfg.seed,
        },
    )
    best = result.history[result.best_epoch]
    print(
        f"best epoch {best.epoch}: val accuracy {best.val.accuracy:.4f} "
        f"F1 {best.val.macro_f1:.4f}"
    )
    print(run_dir)
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    cfg = _run_config(args, run_dir=args.run_dir)
    manifest = _load_processed(cfg, _processed_manifest_path(cfg, args.manifest))
    if args.untrained:
        shape = manifest.load_input(manifest.entries[0]).shape
        params = init_model(cfg.model, cfg.token_width(shape), cfg.seed)
        tokenizer, n_segments = cfg.tokenizer, cfg.effective_segments
    else:
        path = Path(args.checkpoint or Path(cfg.run_dir) / BEST_NAME)
        if not path.is_file():
            raise ConfigurationError(f"checkpoint {path} does not exist")
        ckpt = load_checkpoint(path)
        params, tokenizer = ckpt.params, ckpt.tokenizer
        n_segments = int(ckpt.metadata.get("segments", cfg.effective_segments))
    data = encode_split(manifest, args.split, params, tokenizer, n_segments)
    metrics = evaluate(params, data, cfg.train.batch_size)
    print(f"split {args.split} ({len(data)} samples)")
    print(render_metrics(metrics, CLASS_NAMES[: params.cfg.n_classes]))
    if args.out:
        Path(args.out).write_text(metrics.model_dump_json(indent=2) + "\n", encoding="utf-8")
    return EXIT_OK


def cmd_profile(args: argparse.Namespace) -> int:
    cfg = _run_config(args, workers=args.workers)
    if args.manifest:
        manifest = _load_processed(cfg, Path(args.manifest))
        data = manifest.load_input(manifest.entries[0])
    else:
        data = example_input(cfg)
    params = init_model(cfg.model, cfg.token_width(np.shape(data)), cfg.seed)
    n_segments = cfg.effective_segments
    latency = None
    if args.iters > 0:
        latency = benchmark(
            params,
            data,
            cfg.tokenizer,
            n_segments,
            warmup_iters=args.warmup,
            timed_iters=args.iters,
            workers=cfg.workers,
        )
    report = build_cost_report(params, data, cfg.tokenizer, n_segments, latency=latency)
    text = report.model_dump_json(indent=2)
    print(text)
    print(render_table([report]))
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    return EXIT_OK


def _parse_segments(raw: str) -> list[int | None]:
    out: list[int | None] = []
    for item in raw.split(","):
        item = item.strip().lower()
        if item in ("none", "null", "-"):
            out.append(None)
        elif item.isdigit() and int(item) >= 1:
            out.append(int(item))
        else:
            raise UsageError(f"bad segment value {item!r} in --segments")
    return out


def cmd_sweep(args: argparse.Namespace) -> int:
    cfg = _run_config(args, workers=args.workers)
    preset = PRESETS.get(args.preset) if args.preset else None
    spec = preset.sweep if preset is not None and preset.sweep is not None else SweepSpec()
    update: dict[str, Any] = {}
    if args.segments:
        update["segments"] = _parse_segments(args.segments)
    if args.representations:
        update["representations"] = [r.strip() for r in args.representations.split(",")]
    spec = SweepSpec.model_validate({**spec.model_dump(), **update})

    result = run_sweep(
        cfg,
        spec,
        data_root=args.data,
        train_models=args.train,
        warmup_iters=args.warmup,
        timed_iters=args.iters,
    )
    print(render_table(result.reports))
    summary = render_mean_accuracy(result)
    if summary:
        print(summary)
    if args.csv:
        write_csv(args.csv, result.reports)
        print(args.csv)
    if args.out:
        write_jsonl(args.out, result.reports)
    return EXIT_OK


def cmd_presets(args: argparse.Namespace) -> int:
    width = max(len(name) for name in PRESETS)
    for name in list_presets():
        print(f"{name:<{width}}  {PRESETS[name].description}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def _common_options() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="Key-value config file (dotted keys)")
    common.add_argument("--preset", choices=list_presets(), help="Start from a bundled preset")
    common.add_argument("--seed", type=int, help="Run seed (overrides config)")
    common.add_argument(
        "--log-level", help="Logging level (default: $SEGLAT_LOG_LEVEL or INFO)"
    )
    common.add_argument(
        "--set",
        dest="overrides",
        action="append",
        metavar="KEY=VALUE",
        help="Config override, e.g. --set model.depth=2 (repeatable)",
    )
    return common


def build_parser() -> argparse.ArgumentParser:
    common = _common_options()
    parser = argparse.ArgumentParser(
        prog="seglat", description="Segmented-latent transformer for multichannel signals"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common], help="Generate the synthetic 3-class dataset")
    p.add_argument("--out", help="Output directory (default: data_dir)")
    p.add_argument("--n-per-class", type=int, default=100, help="Trials per class (default: 100)")
    p.add_argument("--channels", type=int, default=24, help="Channels (default: 24)")
    p.add_argument("--length", type=int, default=512, help="Samples per trial (default: 512)")
    p.add_argument("--sample-rate", type=float, default=10.0, help="Hz (default: 10)")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("preprocess", parents=[common], help="Build model inputs from recordings")
    p.add_argument("--manifest", help="Raw manifest (default: data_dir/manifest.json)")
    p.add_argument("--representation", choices=("wave", "psd", "stack"), help="Input kind")
    p.add_argument("--out", help="Output directory (default: <manifest dir>/<representation>)")
    p.add_argument("--force", action="store_true", help="Rebuild existing outputs")
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("train", parents=[common], help="Train a model")
    p.add_argument("--manifest", help="Processed manifest (default: data_dir/<representation>)")
    p.add_argument("--run-dir", help="Output directory for history and checkpoints")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", parents=[common], help="Evaluate a checkpoint on a split")
    p.add_argument("--manifest", help="Processed manifest (default: data_dir/<representation>)")
    p.add_argument("--run-dir", help="Run directory holding best.ckpt")
    p.add_argument("--checkpoint", help="Checkpoint path (default: <run_dir>/best.ckpt)")
    p.add_argument("--split", choices=("val", "test"), default="test", help="Split (default: test)")
    p.add_argument("--untrained", action="store_true", help="Evaluate a freshly initialized model")
    p.add_argument("--out", help="Write metrics JSON here")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("profile", parents=[common], help="Parameters, FLOPs and latency")
    p.add_argument("--manifest", help="Processed manifest providing the input shape")
    p.add_argument("--iters", type=int, default=100, help="Timed iterations; 0 skips timing")
    p.add_argument("--warmup", type=int, default=10, help="Warmup iterations (default: 10)")
    p.add_argument("--workers", type=int, help="Threads for the throughput run")
    p.add_argument("--out", help="Write the cost report JSON here")
    p.set_defaults(func=cmd_profile)

    p = sub.add_parser("sweep", parents=[common], help="Segment sweep cost table")
    p.add_argument("--segments", help="Comma list, 'none' for unsegmented (e.g. none,2,4,8)")
    p.add_argument(
        "--representations",
        help="Comma list of wave, psd, stack (default: wave,psd; use 'psd' for one row per S)",
    )
    p.add_argument("--data", help="Raw dataset directory (required with --train)")
    p.add_argument("--train", action="store_true", help="Train every setting and report accuracy")
    p.add_argument("--iters", type=int, default=100, help="Timed iterations; 0 skips timing")
    p.add_argument("--warmup", type=int, default=10, help="Warmup iterations (default: 10)")
    p.add_argument("--workers", type=int, help="Threads for the throughput run")
    p.add_argument("--csv", help="Write the sweep as CSV here")
    p.add_argument("--out", help="Write cost reports as JSON lines here")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("presets", parents=[common], help="List bundled presets")
    p.set_defaults(func=cmd_presets)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        configure_logging(args.log_level)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    try:
        return args.func(args)
    except TrainingAborted as exc:
        logger.error("Training aborted: %s", exc)
        return EXIT_FAILURE
    except USAGE_ERRORS as exc:
        logger.error("%s", exc)
        return EXIT_USAGE
    except (SeglatError, OSError) as exc:
        logger.error("%s failed: %s", args.command, exc)
        return EXIT_FAILURE


if __name__ == "__main__":
    raise SystemExit(main())
