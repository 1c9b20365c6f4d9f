"""Confusion-matrix metrics with macro averaging."""

from __future__ import annotations

from collections.abc import Sequence

import numpy as np

from seglat.errors import DataError
from seglat.reports import ClassMetrics, Metrics


def confusion_matrix(
    labels: Sequence[int] | np.ndarray, predictions: Sequence[int] | np.ndarray, n_classes: int
) -> np.ndarray:
    """``confusion[true, predicted]`` counts."""
    labels = np.asarray(labels, dtype=np.int64)
    predictions = np.asarray(predictions, dtype=np.int64)
    if labels.shape != predictions.shape:
        raise DataError(f"{labels.size} labels but {predictions.size} predictions")
    for name, arr in (("label", labels), ("prediction", predictions)):
        bad = np.flatnonzero((arr < 0) | (arr >= n_classes))
        if bad.size:
            raise DataError(f"{name} {int(arr[bad[0]])} at index {int(bad[0])} out of range")
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (labels, predictions), 1)
    return cm


def metrics_from_confusion(confusion: np.ndarray | Sequence[Sequence[int]]) -> Metrics:
    """Overall accuracy plus per-class and macro precision/recall/F1.

    Precision is 0 for a class that is never predicted, recall is 0 for a
    class with no support, and F1 is 0 when both are 0.
    """
    cm = np.asarray(confusion, dtype=np.int64)
    if cm.ndim != 2 or cm.shape[0] != cm.shape[1]:
        raise DataError(f"confusion matrix must be square, got {cm.shape}")
    total = int(cm.sum())
    if total == 0:
        raise DataError("confusion matrix is empty")
    tp = np.diag(cm).astype(np.float64)
    predicted = cm.sum(axis=0).astype(np.float64)
    support = cm.sum(axis=1)

    precision = np.divide(tp, predicted, out=np.zeros_like(tp), where=predicted > 0)
    recall = np.divide(tp, support, out=np.zeros_like(tp), where=support > 0)
    denom = precision + recall
    f1 = np.divide(2 * precision * recall, denom, out=np.zeros_like(tp), where=denom > 0)

    per_class = [
        ClassMetrics(precision=float(p), recall=float(r), f1=float(f), support=int(s))
        for p, r, f, s in zip(precision, recall, f1, support)
    ]
    macro_recall = float(recall.mean())
    return Metrics(
        accuracy=float(tp.sum() / total),
        balanced_accuracy=macro_recall,
        macro_precision=float(precision.mean()),
        macro_recall=macro_recall,
        macro_f1=float(f1.mean()),
        per_class=per_class,
        confusion=cm.tolist(),
    )


def compute_metrics(
    labels: Sequence[int] | np.ndarray, predictions: Sequence[int] | np.ndarray, n_classes: int
) -> Metrics:
    return metrics_from_confusion(confusion_matrix(labels, predictions, n_classes))


def render_metrics(metrics: Metrics, class_names: Sequence[str] | None = None) -> str:
    """Plain-text metrics block: summary lines, per-class table, confusion matrix."""
    n = len(metrics.per_class)
    names = list(class_names) if class_names else [f"class {i}" for i in range(n)]
    width = max(len(s) for s in names)
    lines = [
        f"accuracy           {metrics.accuracy:.4f}",
        f"balanced accuracy  {metrics.balanced_accuracy:.4f}",
        f"macro precision    {metrics.macro_precision:.4f}",
        f"macro recall       {metrics.macro_recall:.4f}",
        f"macro F1           {metrics.macro_f1:.4f}",
        "",
        f"{'':<{width}}  precision  recall     f1         support",
    ]
    for name, c in zip(names, metrics.per_class):
        lines.append(
            f"{name:<{width}}  {c.precision:<9.4f}  {c.recall:<9.4f}  {c.f1:<9.4f}  {c.support}"
        )
    lines.append("")
    lines.append("confusion (rows = true, cols = predicted)")
    for name, row in zip(names, metrics.confusion):
        lines.append(f"{name:<{width}}  " + " ".join(f"{v:>6d}" for v in row))
    return "\n".join(lines)
