"""Report records: metrics, training history and cost reports.

All records are pydantic models so they serialize to the JSON / JSON-lines
artifacts written by training, evaluation and profiling.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any

from pydantic import BaseModel, Field

# ---------------------------------------------------------------------------
# Classification metrics
# ---------------------------------------------------------------------------


class ClassMetrics(BaseModel):
    """Per-class precision, recall, F1 and support."""

    precision: float = Field(ge=0.0, le=1.0)
    recall: float = Field(ge=0.0, le=1.0)
    f1: float = Field(ge=0.0, le=1.0)
    support: int = Field(ge=0)


class Metrics(BaseModel):
    """Overall and macro-averaged classification metrics.

    ``balanced_accuracy`` equals ``macro_recall``; both are reported.
    """

    accuracy: float
    balanced_accuracy: float
    macro_precision: float
    macro_recall: float
    macro_f1: float
    per_class: list[ClassMetrics]
    confusion: list[list[int]]


class EpochRecord(BaseModel):
    """One line of ``history.jsonl``."""

    epoch: int
    lr: float
    train_loss: float
    val: Metrics


# ---------------------------------------------------------------------------
# Cost reports
# ---------------------------------------------------------------------------


class LatencyStats(BaseModel):
    """Host latency of single-sample forward passes."""

    mean_ms: float
    p50_ms: float
    p95_ms: float
    samples_per_second: float
    iterations: int
    throughput_workers: int | None = None
    throughput_samples_per_second: float | None = None


class CostReport(BaseModel):
    """Parameter count, analytic FLOPs and measured latency for one setting."""

    label: str
    segments: int | None
    input_shape: list[int]
    n_tokens: int
    token_width: int
    params: int
    params_millions: float
    flops: int
    gflops: float
    flop_breakdown: dict[str, int]
    flop_convention: str
    latency: LatencyStats | None = None
    model: dict[str, Any] = Field(default_factory=dict)
    accuracy: float | None = None
    precision: float | None = None
    f1: float | None = None


def write_jsonl(path: str | Path, records: list[BaseModel]) -> None:
    lines = [r.model_dump_json() for r in records]
    Path(path).write_text("".join(line + "\n" for line in lines), encoding="utf-8")


def append_jsonl(path: str | Path, record: BaseModel) -> None:
    with Path(path).open("a", encoding="utf-8") as fh:
        fh.write(record.model_dump_json() + "\n")


def read_history(path: str | Path) -> list[EpochRecord]:
    text = Path(path).read_text(encoding="utf-8")
    return [EpochRecord.model_validate(json.loads(line)) for line in text.splitlines() if line]
