"""Tests for parameter counting, FLOP estimates, benchmarking and cost tables."""

import csv

import numpy as np
import pytest

from seglat.errors import ConfigurationError
from seglat.model import ModelConfig, init_model
from seglat.profiler import (
    CSV_FIELDS,
    TABLE_COLUMNS,
    benchmark,
    build_cost_report,
    count_params,
    estimate_flops,
    measure_flops,
    render_table,
    write_csv,
)
from seglat.reports import LatencyStats
from seglat.tokenizer import TokenizerConfig

TOY = ModelConfig(
    depth=1,
    latent_dim=8,
    cross_head_dim=4,
    self_heads=2,
    self_head_dim=4,
    self_per_cross=2,
)
TOKENS = TokenizerConfig(bands=2)

CONFIGS = [
    (TOY, 2, (6, 2)),
    (TOY.model_copy(update={"depth": 2, "pooling": "last"}), 3, (20, 3)),
    (TOY.model_copy(update={"cross_heads": 2, "ffn_multiplier": 2}), 7, (31, 1)),
    (TOY.model_copy(update={"num_latents": 4}), 1, (16, 2)),
    (TOY.model_copy(update={"self_per_cross": 0, "depth": 3}), 4, (6, 5, 2)),
]


class TestCountParams:
    @pytest.mark.parametrize(("cfg", "n_segments", "shape"), CONFIGS)
    def test_matches_initialized_model(self, cfg, n_segments, shape) -> None:
        width = TOKENS.token_width(shape[-1], shape[:-1])
        assert count_params(cfg, width) == init_model(cfg, width).n_elements()

    def test_head_only(self) -> None:
        cfg = ModelConfig(depth=0, latent_dim=4)
        assert count_params(cfg, 3) == 4 + (2 * 4 + 4 * 3 + 3)

    def test_reference_defaults(self) -> None:
        cfg = ModelConfig()
        assert count_params(cfg, 153) == init_model(cfg, 153).n_elements()


class TestFlops:
    @pytest.mark.parametrize(("cfg", "n_segments", "shape"), CONFIGS)
    def test_estimate_matches_instrumented_forward(self, cfg, n_segments, shape) -> None:
        data = np.random.default_rng(0).standard_normal(shape)
        width = TOKENS.token_width(shape[-1], shape[:-1])
        params = init_model(cfg, width)
        n_tokens = int(np.prod(shape[:-1]))
        s = n_segments if cfg.segmented else 1
        estimate = estimate_flops(cfg, s, n_tokens, width)
        assert estimate.total == measure_flops(params, data, TOKENS, n_segments)

    def test_token_work_scales_with_tokens(self) -> None:
        a = estimate_flops(TOY, 4, 64, 7)
        b = estimate_flops(TOY, 4, 128, 7)
        assert b.breakdown["cross_attention"] == 2 * a.breakdown["cross_attention"]
        assert b.breakdown["self_attention"] == a.breakdown["self_attention"]

    @pytest.mark.parametrize(
        ("field", "values"),
        [
            ("self_per_cross", [0, 1, 2, 4, 8]),
            ("depth", [0, 1, 2, 3, 6]),
            ("latent_dim", [1, 4, 8, 16, 64]),
        ],
    )
    @pytest.mark.parametrize("num_latents", [None, 8])
    def test_nondecreasing_in_model_size(self, field, values, num_latents) -> None:
        base = TOY.model_copy(update={"num_latents": num_latents})
        n_segments = 4 if num_latents is None else 1
        totals = [
            estimate_flops(base.model_copy(update={field: v}), n_segments, 64, 7).total
            for v in values
        ]
        assert all(b >= a for a, b in zip(totals, totals[1:]))

    @pytest.mark.parametrize("n_segments", [1, 3, 8])
    def test_nondecreasing_in_tokens(self, n_segments) -> None:
        totals = [estimate_flops(TOY, n_segments, n, 7).total for n in range(8, 80)]
        assert all(b >= a for a, b in zip(totals, totals[1:]))

    def test_small_segment_counts_beat_wide_latent_array(self) -> None:
        cfg = ModelConfig()
        width = TokenizerConfig().token_width(24, (512,))
        baseline = estimate_flops(cfg.model_copy(update={"num_latents": 32}), 1, 512, width)
        for s in (2, 4, 8):
            assert estimate_flops(cfg, s, 512, width).total < baseline.total

    def test_padding_is_charged(self) -> None:
        full = estimate_flops(TOY, 4, 12, 7)
        padded = estimate_flops(TOY, 4, 10, 7)
        assert padded.breakdown["cross_attention"] == full.breakdown["cross_attention"]

    def test_invalid_segments(self) -> None:
        with pytest.raises(ConfigurationError):
            estimate_flops(TOY, 13, 12, 7)

    def test_gflops(self) -> None:
        est = estimate_flops(TOY, 2, 6, 7)
        assert est.gflops == est.total / 1e9
        assert sum(est.breakdown.values()) == est.total


class TestBenchmark:
    def test_statistics(self) -> None:
        params = init_model(TOY, 7)
        stats = benchmark(params, np.zeros((6, 2)), TOKENS, 2, warmup_iters=1, timed_iters=5)
        assert stats.iterations == 5
        assert 0 < stats.p50_ms <= stats.p95_ms
        assert stats.samples_per_second == pytest.approx(1e3 / stats.mean_ms)
        assert stats.throughput_workers is None

    def test_threaded_throughput(self) -> None:
        params = init_model(TOY, 7)
        stats = benchmark(
            params, np.zeros((6, 2)), TOKENS, 2, warmup_iters=0, timed_iters=4, workers=2
        )
        assert stats.throughput_workers == 2
        assert stats.throughput_samples_per_second > 0

    @pytest.mark.slow
    def test_four_times_the_tokens_is_not_faster(self) -> None:
        tokens = TokenizerConfig(bands=16)
        params = init_model(TOY, tokens.token_width(2, (2048,)))
        rng = np.random.default_rng(0)
        base = benchmark(params, rng.standard_normal((2048, 2)), tokens, 4, 3, 20)
        larger = benchmark(params, rng.standard_normal((8192, 2)), tokens, 4, 3, 20)
        assert larger.p50_ms >= base.p50_ms

    def test_invalid_iterations(self) -> None:
        with pytest.raises(ConfigurationError):
            benchmark(init_model(TOY, 7), np.zeros((6, 2)), TOKENS, 2, timed_iters=0)


class TestCostReports:
    def _reports(self):
        data = np.zeros((6, 2))
        seg = build_cost_report(init_model(TOY, 7), data, TOKENS, 2)
        base_cfg = TOY.model_copy(update={"num_latents": 4})
        base = build_cost_report(init_model(base_cfg, 7), data, TOKENS, 2)
        seg.latency = LatencyStats(
            mean_ms=1.5, p50_ms=1.4, p95_ms=2.0, samples_per_second=666.7, iterations=3
        )
        return seg, base

    def test_report_fields(self) -> None:
        seg, base = self._reports()
        assert seg.label == "2"
        assert seg.segments == 2
        assert base.label == "-"
        assert base.segments is None
        assert seg.params == init_model(TOY, 7).n_elements()
        assert seg.n_tokens == 6
        assert seg.token_width == 7

    def test_table(self) -> None:
        text = render_table(self._reports())
        lines = text.splitlines()
        for column in TABLE_COLUMNS:
            assert column in lines[0]
        assert set(lines[1]) <= {"-", " "}
        assert "1.50" in lines[2]
        assert lines[3].split()[0] == "-"

    def test_csv(self, tmp_path) -> None:
        path = write_csv(tmp_path / "cost.csv", self._reports())
        with path.open(newline="") as fh:
            rows = list(csv.DictReader(fh))
        assert tuple(rows[0]) == CSV_FIELDS
        assert rows[0]["latency_ms"] == "1.5"
        assert rows[1]["segments"] == ""
        assert rows[1]["latency_ms"] == ""
