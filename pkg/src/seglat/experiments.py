"""Segment sweep: cost (and optionally accuracy) per segment setting and representation."""

from __future__ import annotations

import logging
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from seglat.config import RunConfig
from seglat.dataset import MANIFEST_NAME, DatasetManifest
from seglat.errors import ConfigurationError
from seglat.model import ModelConfig, init_model
from seglat.pipeline import example_input, output_dir, preprocess_manifest
from seglat.presets import SweepSpec
from seglat.profiler import benchmark, build_cost_report
from seglat.reports import CostReport
from seglat.train import encode_split, evaluate, train_from_manifest

logger = logging.getLogger("seglat.experiments")


@dataclass
class SweepResult:
    reports: list[CostReport] = field(default_factory=list)
    #: Segment label -> mean test accuracy across representations (training runs only).
    mean_accuracy: dict[str, float] = field(default_factory=dict)


def sweep_setting(
    model: ModelConfig, segments: int | None, unsegmented_latents: int
) -> tuple[ModelConfig, int]:
    """Model config and segment count for one sweep row."""
    if segments is None:
        return model.model_copy(update={"num_latents": unsegmented_latents}), 1
    return model.model_copy(update={"num_latents": None}), segments


def _processed_manifest(cfg: RunConfig, data_root: Path) -> DatasetManifest:
    raw = data_root / MANIFEST_NAME
    processed = output_dir(raw, cfg.representation) / MANIFEST_NAME
    if not processed.is_file():
        result = preprocess_manifest(raw, cfg)
        if not result.ok:
            raise ConfigurationError(
                f"{len(result.failures)} recording(s) failed to preprocess for {cfg.representation}"
            )
    return DatasetManifest.load(processed)


def run_sweep(
    cfg: RunConfig,
    spec: SweepSpec,
    *,
    data_root: str | Path | None = None,
    train_models: bool = False,
    warmup_iters: int = 10,
    timed_iters: int = 100,
) -> SweepResult:
    """Profile every (representation, segments) setting of *spec*.

    Args:
        cfg: Base run configuration; representation and segmentation are
            replaced per row.
        spec: Segment and representation lists.
        data_root: Directory holding a raw ``manifest.json``. Required for
            training; its first training input also drives profiling.
        train_models: Train each setting and report test metrics of the
            best-validation parameters.
        warmup_iters: Untimed forward passes before measuring.
        timed_iters: Timed forward passes; 0 skips latency measurement.
    """
    if train_models and data_root is None:
        raise ConfigurationError("training in a sweep needs a dataset directory")
    result = SweepResult()
    accuracies: dict[str, list[float]] = defaultdict(list)

    for representation in spec.representations:
        rep_cfg = RunConfig.model_validate(
            {**cfg.model_dump(), "representation": representation}
        )
        manifest = None
        if data_root is not None:
            manifest = _processed_manifest(rep_cfg, Path(data_root))
            data = manifest.load_input(manifest.split("train")[0])
        else:
            data = example_input(rep_cfg)
        width = rep_cfg.token_width(np.shape(data))

        for segments in spec.segments:
            model_cfg, n_segments = sweep_setting(rep_cfg.model, segments, spec.unsegmented_latents)
            label = "-" if segments is None else str(segments)
            params = init_model(model_cfg, width, rep_cfg.seed)
            try:
                report = build_cost_report(
                    params, data, rep_cfg.tokenizer, n_segments, label=f"{representation}:{label}"
                )
            except ConfigurationError as exc:
                logger.warning("Skipping %s S=%s: %s", representation, label, exc)
                continue
            if timed_iters > 0:
                report.latency = benchmark(
                    params,
                    data,
                    rep_cfg.tokenizer,
                    n_segments,
                    warmup_iters=warmup_iters,
                    timed_iters=timed_iters,
                    workers=rep_cfg.workers,
                )
            if train_models and manifest is not None:
                run_dir = Path(rep_cfg.run_dir) / "sweep" / f"{representation}-{label}"
                outcome = train_from_manifest(
                    params,
                    manifest,
                    rep_cfg.tokenizer,
                    n_segments,
                    rep_cfg.train,
                    run_dir=run_dir,
                    metadata={"representation": representation, "segments": segments},
                )
                test = encode_split(manifest, "test", params, rep_cfg.tokenizer, n_segments)
                metrics = evaluate(outcome.best_params, test, rep_cfg.train.batch_size)
                report.accuracy = metrics.accuracy
                report.precision = metrics.macro_precision
                report.f1 = metrics.macro_f1
                accuracies[label].append(metrics.accuracy)
            logger.info(
                "sweep %s S=%s: %.3fM params, %.4f GFLOPs",
                representation,
                label,
                report.params_millions,
                report.gflops,
            )
            result.reports.append(report)

    result.mean_accuracy = {
        label: float(np.mean(values))
        for label, values in accuracies.items()
        if len(values) == len(spec.representations)
    }
    return result


def render_mean_accuracy(result: SweepResult) -> str:
    if not result.mean_accuracy:
        return ""
    lines = ["mean accuracy across representations"]
    for label, value in result.mean_accuracy.items():
        lines.append(f"  S={label:<4} {value:.4f}")
    return "\n".join(lines)
