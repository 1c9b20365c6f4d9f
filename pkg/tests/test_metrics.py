"""Tests for confusion-matrix metrics."""

import numpy as np
import pytest

from seglat.errors import DataError
from seglat.metrics import compute_metrics, confusion_matrix, metrics_from_confusion, render_metrics

EXACT = 1e-12


class TestConfusionMatrix:
    def test_counts(self) -> None:
        cm = confusion_matrix([0, 0, 1, 2, 2], [0, 1, 1, 2, 0], 3)
        np.testing.assert_array_equal(cm, [[1, 1, 0], [0, 1, 0], [1, 0, 1]])

    def test_length_mismatch(self) -> None:
        with pytest.raises(DataError):
            confusion_matrix([0, 1], [0], 3)

    def test_out_of_range_names_index(self) -> None:
        with pytest.raises(DataError, match="index 2"):
            confusion_matrix([0, 1, 3], [0, 1, 1], 3)


class TestMetrics:
    def test_perfect(self) -> None:
        m = metrics_from_confusion(np.eye(3, dtype=int) * 5)
        assert m.accuracy == 1.0
        assert m.macro_precision == 1.0
        assert m.macro_recall == 1.0
        assert m.macro_f1 == 1.0

    def test_unused_class_counts_as_zero(self) -> None:
        m = metrics_from_confusion([[3, 1, 0], [2, 2, 0], [0, 0, 0]])
        assert m.accuracy == pytest.approx(5 / 8, abs=EXACT)
        assert m.per_class[2].precision == 0.0
        assert m.per_class[2].recall == 0.0
        assert m.per_class[2].f1 == 0.0
        assert m.macro_precision == pytest.approx((3 / 5 + 2 / 3) / 3, abs=EXACT)
        assert m.macro_recall == pytest.approx((3 / 4 + 1 / 2) / 3, abs=EXACT)
        assert m.macro_f1 == pytest.approx((2 / 3 + 4 / 7) / 3, abs=EXACT)

    def test_mixed_errors(self) -> None:
        m = metrics_from_confusion([[2, 1, 1], [0, 3, 1], [1, 0, 4]])
        assert m.accuracy == pytest.approx(9 / 13, abs=EXACT)
        assert [c.precision for c in m.per_class] == pytest.approx([2 / 3, 3 / 4, 2 / 3], abs=EXACT)
        assert [c.recall for c in m.per_class] == pytest.approx([1 / 2, 3 / 4, 4 / 5], abs=EXACT)
        assert [c.f1 for c in m.per_class] == pytest.approx([4 / 7, 3 / 4, 8 / 11], abs=EXACT)
        assert m.macro_f1 == pytest.approx((4 / 7 + 3 / 4 + 8 / 11) / 3, abs=EXACT)
        assert m.balanced_accuracy == m.macro_recall
        assert [c.support for c in m.per_class] == [4, 4, 5]

    def test_constant_predictor_on_balanced_classes(self) -> None:
        m = metrics_from_confusion([[4, 0, 0], [4, 0, 0], [4, 0, 0]])
        assert m.accuracy == pytest.approx(1 / 3, abs=EXACT)
        assert [c.f1 for c in m.per_class] == pytest.approx([1 / 2, 0.0, 0.0], abs=EXACT)
        assert m.macro_f1 == pytest.approx(1 / 6, abs=EXACT)
        assert m.macro_recall == pytest.approx(1 / 3, abs=EXACT)

    def test_macro_recall_hand_value(self) -> None:
        m = metrics_from_confusion([[2, 0, 0], [1, 1, 0], [0, 0, 2]])
        assert [c.recall for c in m.per_class] == pytest.approx([1.0, 0.5, 1.0], abs=EXACT)
        assert m.macro_recall == pytest.approx(5 / 6, abs=EXACT)
        assert m.balanced_accuracy == pytest.approx(5 / 6, abs=EXACT)

    def test_from_predictions(self) -> None:
        m = compute_metrics([0, 1, 2, 2], [0, 1, 2, 1], 3)
        assert m.confusion == [[1, 0, 0], [0, 1, 0], [0, 1, 1]]

    def test_empty_rejected(self) -> None:
        with pytest.raises(DataError):
            metrics_from_confusion(np.zeros((3, 3), dtype=int))

    def test_non_square_rejected(self) -> None:
        with pytest.raises(DataError):
            metrics_from_confusion(np.zeros((2, 3), dtype=int))

    def test_render_names_classes(self) -> None:
        text = render_metrics(metrics_from_confusion(np.eye(3, dtype=int)), ["a", "bb", "c"])
        assert "macro F1           1.0000" in text
        assert "bb" in text
        assert text.splitlines()[-1].startswith("c ")
