"""Tests for the learning-rate schedule, AdamW and the training loop."""

import math

import numpy as np
import pytest
from pydantic import ValidationError

from seglat import tensorcore as tc
from seglat.errors import ConfigurationError, DataError, TrainingAborted, UsageError
from seglat.model import ModelConfig, forward_batch, init_model
from seglat.reports import read_history
from seglat.tokenizer import TokenizerConfig
from seglat.train import (
    BEST_NAME,
    FINAL_NAME,
    HISTORY_NAME,
    EncodedSplit,
    OptState,
    TrainConfig,
    adamw_step,
    decays,
    encode_inputs,
    evaluate,
    lr_at_epoch,
    train,
    train_step,
)

TINY = ModelConfig(
    depth=1,
    latent_dim=8,
    cross_head_dim=4,
    self_heads=2,
    self_head_dim=4,
    self_per_cross=1,
)
TOKENS = TokenizerConfig(bands=2)
ONE_EPOCH = TrainConfig(epochs_total=1, epochs_warmup=0, epochs_cooldown=0)


def _split(n: int, seed: int):
    rng = np.random.default_rng(seed)
    labels = np.arange(n) % 3
    # class-dependent offset so the toy task is learnable
    inputs = [rng.standard_normal((12, 2)) + label for label in labels]
    params = init_model(TINY, 7)
    return encode_inputs(inputs, labels, params, TOKENS, 3)


class TestSchedule:
    def test_reference_schedule(self) -> None:
        cfg = TrainConfig()
        assert lr_at_epoch(cfg, 0) == pytest.approx(2e-5 / 20)
        assert lr_at_epoch(cfg, 19) == pytest.approx(2e-5)
        assert lr_at_epoch(cfg, 20) == 2e-5
        for epoch in range(190, 200):
            assert lr_at_epoch(cfg, epoch) == 1e-6

    def test_cosine_midpoint(self) -> None:
        cfg = TrainConfig(
            base_lr=1.0, min_lr=0.0, epochs_total=30, epochs_warmup=5, epochs_cooldown=5
        )
        assert lr_at_epoch(cfg, 15) == pytest.approx(0.5)

    def test_continuous_and_monotone_after_warmup(self) -> None:
        cfg = TrainConfig()
        rates = [lr_at_epoch(cfg, e) for e in range(200)]
        assert all(b <= a for a, b in zip(rates[20:], rates[21:]))
        # largest jump anywhere is one warmup step
        assert max(abs(b - a) for a, b in zip(rates, rates[1:])) <= 2e-5 / 20 + 1e-18

    def test_epoch_out_of_range(self) -> None:
        with pytest.raises(UsageError):
            lr_at_epoch(TrainConfig(), 200)
        with pytest.raises(UsageError):
            lr_at_epoch(TrainConfig(), -1)

    def test_no_warmup(self) -> None:
        cfg = TrainConfig(base_lr=1e-3, epochs_total=10, epochs_warmup=0, epochs_cooldown=0)
        assert lr_at_epoch(cfg, 0) == 1e-3

    def test_phases_must_fit(self) -> None:
        with pytest.raises(ValidationError):
            TrainConfig(epochs_total=10, epochs_warmup=6, epochs_cooldown=5)
        with pytest.raises(ValidationError):
            TrainConfig(base_lr=1e-5, min_lr=1e-4)


class TestAdamW:
    def test_first_step_by_hand(self) -> None:
        params = init_model(TINY, 7)
        before = {name: t.data.copy() for name, t in params.items()}
        grads = {"head.w": np.full((8, 3), 0.5), "head.b": np.ones(3)}
        state = adamw_step(params, grads, OptState(), lr=0.01, weight_decay=0.1)
        assert state.step == 1
        w0 = before["head.w"]
        np.testing.assert_allclose(
            params["head.w"].data, w0 - 0.01 * (0.5 / (0.5 + 1e-8) + 0.1 * w0), rtol=1e-12
        )
        np.testing.assert_allclose(params["head.b"].data, -0.01 / (1 + 1e-8), rtol=1e-12)
        # no gradient: only the decay term acts on decaying tensors
        wq = before["layers.0.cross.wq"]
        np.testing.assert_allclose(params["layers.0.cross.wq"].data, wq * (1 - 0.001), rtol=1e-12)
        np.testing.assert_array_equal(params["latent_seed"].data, before["latent_seed"])

    def test_second_step_uses_moments(self) -> None:
        params = init_model(TINY, 7)
        state = OptState()
        adamw_step(params, {"head.b": np.ones(3)}, state, lr=0.1, weight_decay=0.0)
        adamw_step(params, {"head.b": -np.ones(3)}, state, lr=0.1, weight_decay=0.0)
        m_hat = (0.9 * 0.1 - 0.1) / (1 - 0.9**2)
        v_hat = (0.999 * 0.001 + 0.001) / (1 - 0.999**2)
        expected = -0.1 * (1 / (1 + 1e-8)) - 0.1 * m_hat / (math.sqrt(v_hat) + 1e-8)
        np.testing.assert_allclose(params["head.b"].data, expected, rtol=1e-10)

    def test_zero_learning_rate_leaves_parameters_unchanged(self) -> None:
        params = init_model(TINY, 7)
        before = {name: t.data.copy() for name, t in params.items()}
        rng = np.random.default_rng(3)
        grads = {name: rng.standard_normal(t.shape) for name, t in params.items()}
        state = OptState()
        for _ in range(2):
            adamw_step(params, grads, state, lr=0.0, weight_decay=0.1)
        for name, t in params.items():
            np.testing.assert_array_equal(t.data, before[name])

    def test_no_decay_patterns(self) -> None:
        assert not decays("layers.0.cross.q_norm.gain")
        assert not decays("layers.1.self.0.ffn.b1")
        assert not decays("latent_seed")
        assert decays("layers.0.cross.wq")
        assert decays("head.w")

    def test_non_finite_gradient_aborts(self) -> None:
        params = init_model(TINY, 7)
        grads = {"head.b": np.array([0.0, np.nan, 0.0])}
        with pytest.raises(TrainingAborted, match="head.b"):
            adamw_step(params, grads, OptState(), lr=0.01, weight_decay=0.0)


class TestEncoding:
    def test_stacks_segments(self) -> None:
        data = _split(6, 0)
        assert data.segments.shape == (6, 3, 4, 7)
        assert data.mask.all()
        assert len(data) == 6

    def test_mixed_shapes(self) -> None:
        params = init_model(TINY, 7)
        with pytest.raises(DataError):
            encode_inputs([np.zeros((12, 2)), np.zeros((10, 2))], [0, 1], params, TOKENS, 3)

    def test_empty(self) -> None:
        with pytest.raises(ConfigurationError):
            encode_inputs([], [], init_model(TINY, 7), TOKENS, 3)


class TestTraining:
    def test_step_lowers_batch_loss(self) -> None:
        data = _split(9, 1)
        params = init_model(TINY, 7, seed=2)
        idx = np.arange(9)
        cfg = TrainConfig(weight_decay=0.0)
        before = train_step(params, data, idx, OptState(), 1e-6, cfg)
        with tc.no_grad():
            after = tc.cross_entropy(
                forward_batch(params, data.segments, data.mask), data.labels
            ).item()
        assert after < before

    def test_evaluation_ignores_sample_order(self) -> None:
        data = _split(9, 4)
        params = init_model(TINY, 7, seed=5)
        perm = np.random.default_rng(6).permutation(len(data))
        shuffled = EncodedSplit(data.segments[perm], data.mask[perm], data.labels[perm])
        assert evaluate(params, shuffled, batch_size=4) == evaluate(params, data, batch_size=4)

    def test_writes_history_and_checkpoints(self, tmp_path) -> None:
        cfg = TrainConfig(
            base_lr=1e-3, epochs_total=3, epochs_warmup=1, epochs_cooldown=1, batch_size=4
        )
        params = init_model(TINY, 7)
        seen = []
        result = train(
            params,
            _split(9, 1),
            _split(6, 2),
            cfg,
            run_dir=tmp_path,
            tokenizer=TOKENS,
            metadata={"segments": 3},
            on_epoch=seen.append,
        )
        history = read_history(tmp_path / HISTORY_NAME)
        assert [r.epoch for r in history] == [0, 1, 2]
        assert [r.epoch for r in seen] == [0, 1, 2]
        assert history[1].lr == lr_at_epoch(cfg, 1)
        assert (tmp_path / FINAL_NAME).is_file()
        assert (tmp_path / BEST_NAME).is_file()
        assert 0 <= result.best_epoch < 3
        best_f1 = max(r.val.macro_f1 for r in history)
        assert history[result.best_epoch].val.macro_f1 == best_f1
        assert evaluate(result.best_params, _split(6, 2)).macro_f1 == pytest.approx(best_f1)

    def test_same_seed_same_artifacts(self, tmp_path) -> None:
        cfg = TrainConfig(
            base_lr=1e-3, epochs_total=2, epochs_warmup=0, epochs_cooldown=0, batch_size=4
        )
        for name in ("a", "b"):
            train(init_model(TINY, 7), _split(9, 1), _split(6, 2), cfg, run_dir=tmp_path / name)
        for artifact in (HISTORY_NAME, FINAL_NAME, BEST_NAME):
            assert (tmp_path / "a" / artifact).read_bytes() == (
                tmp_path / "b" / artifact
            ).read_bytes()

    def test_empty_validation_rejected(self) -> None:
        data = _split(3, 0)
        empty = data.__class__(data.segments[:0], data.mask[:0], data.labels[:0])
        with pytest.raises(ConfigurationError):
            train(init_model(TINY, 7), data, empty, ONE_EPOCH)
