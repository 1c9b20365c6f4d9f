"""Parameter/FLOP accounting and host latency benchmarking.

``estimate_flops`` follows the operation sequence of
:func:`seglat.model.forward_batch` at batch size 1 under the tensorcore FLOP
convention, so its total matches an instrumented ``count_flops()`` run.
"""

from __future__ import annotations

import csv
import logging
import math
import time
from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from seglat import tensorcore as tc
from seglat.errors import ConfigurationError
from seglat.model import ModelConfig, ModelParams, forward, segment_input
from seglat.reports import CostReport, LatencyStats
from seglat.tokenizer import TokenizerConfig

logger = logging.getLogger("seglat.profiler")

FLOP_CONVENTION = (
    "matmul 2mkn; add/scale/mask 1 per output element; mean 1 per input element; "
    "layer_norm 5, softmax 5, gelu 8 per element; shape ops free; batch 1 forward"
)

FLOP_FORMULA = (
    "per layer: cross = 5*G*nq*d + 5*Nt*C' + 2*G*nq*d*Ic + 4*Nt*C'*Ic + nq*Nt*(4*Ic + 7*Hc) "
    "+ 2*G*nq*Ic*d + 2*G*nq*d + F(G*nq); "
    "self x R = 5*S*d + 6*S*d*Is + S*S*(4*Is + 6*Hs) + 2*S*d + F(S); "
    "F(n) = 5*n*d + 4*n*d*h + 9*n*h + 2*n*d; head = [S*d] + 5*d + 2*d*c + c; "
    "segmented: G=S, nq=1, Nt=S*ceil(N/S); unsegmented: G=1, nq=M, Nt=N"
)


def count_params(cfg: ModelConfig, token_width: int) -> int:
    """Closed-form learnable element count."""
    d, h, cp = cfg.latent_dim, cfg.ffn_hidden, token_width
    ic, is_ = cfg.cross_inner, cfg.self_inner
    ffn = 2 * d + d * h + h + h * d + d
    cross = 2 * d + 2 * cp + d * ic + 2 * cp * ic + ic * d + d + ffn
    self_block = 2 * d + d * is_ + 2 * d * is_ + is_ * d + d + ffn
    head = 2 * d + d * cfg.n_classes + cfg.n_classes
    latents = d if cfg.segmented else (cfg.num_latents or 1) * d
    return latents + cfg.depth * (cross + cfg.self_per_cross * self_block) + head


@dataclass
class FlopEstimate:
    total: int
    breakdown: dict[str, int] = field(default_factory=dict)
    formula: str = FLOP_FORMULA

    @property
    def gflops(self) -> float:
        return self.total / 1e9


def _feedforward_flops(rows: int, d: int, h: int) -> int:
    return 5 * rows * d + 4 * rows * d * h + 9 * rows * h + 2 * rows * d


def estimate_flops(
    cfg: ModelConfig, n_segments: int, n_tokens: int, token_width: int
) -> FlopEstimate:
    """Forward-pass FLOPs for one sample of *n_tokens* tokens split into *n_segments*.

    The breakdown separates the cross-attention work that scales with the
    padded token count (``cross_attention``) from the per-latent work of the
    cross block (``cross_latent``), the inter-segment self-attention, all
    feedforward blocks and the classification head.
    """
    if n_tokens < 1 or token_width < 1:
        raise ConfigurationError(f"need N >= 1 and C' >= 1, got N={n_tokens}, C'={token_width}")
    d, h, cp = cfg.latent_dim, cfg.ffn_hidden, token_width
    if cfg.segmented:
        if not 1 <= n_segments <= n_tokens:
            raise ConfigurationError(f"segment count must satisfy 1 <= S <= N={n_tokens}")
        groups, n_q = n_segments, 1
        n_c = math.ceil(n_tokens / n_segments)
    else:
        groups, n_q, n_c = 1, cfg.num_latents or 1, n_tokens
    rows = groups * n_q
    padded = groups * n_c
    hc, ic = cfg.cross_heads, cfg.cross_inner
    hs, is_ = cfg.self_heads, cfg.self_inner

    cross_attention = (
        5 * padded * cp
        + 2 * 2 * padded * cp * ic
        + 2 * n_q * padded * ic  # scores
        + 2 * hc * n_q * padded  # scale + mask bias
        + 5 * hc * n_q * padded  # softmax
        + 2 * n_q * padded * ic  # weighted sum
    )
    cross_latent = 5 * rows * d + 2 * rows * d * ic + 2 * rows * ic * d + 2 * rows * d
    self_attention = (
        5 * rows * d
        + 3 * 2 * rows * d * is_
        + 2 * rows * rows * is_
        + 6 * hs * rows * rows
        + 2 * rows * rows * is_
        + 2 * rows * is_ * d
        + 2 * rows * d
    )
    ffn = _feedforward_flops(rows, d, h)
    n_self = cfg.depth * cfg.self_per_cross
    head = 5 * d + 2 * d * cfg.n_classes + cfg.n_classes
    if cfg.pooling == "mean":
        head += rows * d

    breakdown = {
        "cross_attention": cfg.depth * cross_attention,
        "cross_latent": cfg.depth * cross_latent,
        "self_attention": n_self * self_attention,
        "feedforward": (cfg.depth + n_self) * ffn,
        "head": head,
    }
    return FlopEstimate(total=sum(breakdown.values()), breakdown=breakdown)


def measure_flops(
    params: ModelParams, data: np.ndarray, tokenizer: TokenizerConfig, n_segments: int
) -> int:
    """FLOPs tallied by tensorcore during one forward pass."""
    seg = segment_input(data, tokenizer, n_segments, params.cfg)
    with tc.no_grad(), tc.count_flops() as counter:
        forward(params, seg)
    return counter.total


# ---------------------------------------------------------------------------
# Latency
# ---------------------------------------------------------------------------


def benchmark(
    params: ModelParams,
    data: np.ndarray,
    tokenizer: TokenizerConfig,
    n_segments: int,
    warmup_iters: int = 10,
    timed_iters: int = 100,
    workers: int = 1,
) -> LatencyStats:
    """Single-sample forward latency, plus a threaded throughput run when ``workers > 1``.

    Tokenization happens once up front; only forward passes are timed.
    """
    if warmup_iters < 0 or timed_iters < 1:
        raise ConfigurationError(
            f"need warmup_iters >= 0 and timed_iters >= 1, got {warmup_iters}/{timed_iters}"
        )
    if workers < 1:
        raise ConfigurationError(f"workers must be >= 1, got {workers}")
    seg = segment_input(data, tokenizer, n_segments, params.cfg)

    def _run() -> None:
        with tc.no_grad():
            forward(params, seg)

    for _ in range(warmup_iters):
        _run()
    timings = np.empty(timed_iters)
    for i in range(timed_iters):
        start = time.perf_counter()
        _run()
        timings[i] = (time.perf_counter() - start) * 1e3

    mean_ms = float(timings.mean())
    stats = LatencyStats(
        mean_ms=mean_ms,
        p50_ms=float(np.percentile(timings, 50)),
        p95_ms=float(np.percentile(timings, 95)),
        samples_per_second=1e3 / mean_ms,
        iterations=timed_iters,
    )
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            start = time.perf_counter()
            list(pool.map(lambda _: _run(), range(timed_iters)))
            elapsed = time.perf_counter() - start
        stats.throughput_workers = workers
        stats.throughput_samples_per_second = timed_iters / elapsed
    logger.debug("benchmark S=%d: mean %.3f ms p95 %.3f ms", n_segments, mean_ms, stats.p95_ms)
    return stats


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------


def segments_label(cfg: ModelConfig, n_segments: int) -> str:
    return str(n_segments) if cfg.segmented else "-"


def build_cost_report(
    params: ModelParams,
    data: np.ndarray,
    tokenizer: TokenizerConfig,
    n_segments: int,
    *,
    label: str | None = None,
    latency: LatencyStats | None = None,
) -> CostReport:
    """Cost report for *params* on inputs shaped like *data*."""
    cfg = params.cfg
    seg = segment_input(data, tokenizer, n_segments, cfg)
    s = n_segments if cfg.segmented else None
    estimate = estimate_flops(cfg, seg.n_segments, seg.n_tokens, params.token_width)
    n_params = count_params(cfg, params.token_width)
    return CostReport(
        label=label or segments_label(cfg, n_segments),
        segments=s,
        input_shape=list(np.shape(data)),
        n_tokens=seg.n_tokens,
        token_width=params.token_width,
        params=n_params,
        params_millions=n_params / 1e6,
        flops=estimate.total,
        gflops=estimate.gflops,
        flop_breakdown=estimate.breakdown,
        flop_convention=FLOP_CONVENTION,
        latency=latency,
        model=cfg.model_dump(mode="json"),
    )


TABLE_COLUMNS = (
    "#Segm.",
    "Params(M)",
    "GFLOPs",
    "Latency (ms) CPU",
    "Samples/s CPU",
    "Accuracy",
    "Precision",
    "F1",
)


def _row(report: CostReport) -> list[str]:
    def _opt(value: float | None, fmt: str) -> str:
        return "-" if value is None else format(value, fmt)

    lat = report.latency
    return [
        report.label,
        f"{report.params_millions:.3f}",
        f"{report.gflops:.4f}",
        _opt(lat.mean_ms if lat else None, ".2f"),
        _opt(lat.samples_per_second if lat else None, ".1f"),
        _opt(report.accuracy, ".4f"),
        _opt(report.precision, ".4f"),
        _opt(report.f1, ".4f"),
    ]


def render_table(reports: Sequence[CostReport]) -> str:
    """Aligned plain-text cost table."""
    rows = [list(TABLE_COLUMNS)] + [_row(r) for r in reports]
    widths = [max(len(r[i]) for r in rows) for i in range(len(TABLE_COLUMNS))]
    lines = ["  ".join(cell.rjust(w) for cell, w in zip(r, widths)) for r in rows]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines)


CSV_FIELDS = (
    "label",
    "segments",
    "n_tokens",
    "token_width",
    "params",
    "gflops",
    "latency_ms",
    "p50_ms",
    "p95_ms",
    "samples_per_second",
    "accuracy",
    "precision",
    "f1",
)


def _csv_row(report: CostReport) -> dict[str, object]:
    lat = report.latency
    row: dict[str, object] = {
        "label": report.label,
        "segments": report.segments,
        "n_tokens": report.n_tokens,
        "token_width": report.token_width,
        "params": report.params,
        "gflops": report.gflops,
        "accuracy": report.accuracy,
        "precision": report.precision,
        "f1": report.f1,
    }
    if lat is not None:
        row.update(
            latency_ms=lat.mean_ms,
            p50_ms=lat.p50_ms,
            p95_ms=lat.p95_ms,
            samples_per_second=lat.samples_per_second,
        )
    return row


def write_csv(path: str | Path, reports: Sequence[CostReport]) -> Path:
    """CSV with a header row; missing values are left empty."""
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=CSV_FIELDS, restval="")
        writer.writeheader()
        for report in reports:
            writer.writerow({k: "" if v is None else v for k, v in _csv_row(report).items()})
    return path
