"""Slow end-to-end check that the reduced model learns the synthetic task."""

import dataclasses

import numpy as np
import pytest

from seglat.config import build_run_config
from seglat.dataset import MANIFEST_NAME, DatasetManifest, generate_synthetic_dataset
from seglat.model import init_model
from seglat.pipeline import preprocess_manifest
from seglat.presets import get_preset
from seglat.train import encode_split, evaluate, train

pytestmark = pytest.mark.slow


@pytest.fixture(scope="module")
def encoded(tmp_path_factory):
    root = tmp_path_factory.mktemp("learnability")
    generate_synthetic_dataset(root, 100, channels=24, length=512, sample_rate_hz=10.0)
    cfg = build_run_config(preset=get_preset("synthetic-learnability").config)
    result = preprocess_manifest(root / MANIFEST_NAME, cfg)
    assert result.ok
    manifest = DatasetManifest.load(result.manifest_path)
    shape = manifest.load_input(manifest.entries[0]).shape
    params = init_model(cfg.model, cfg.token_width(shape), cfg.seed)
    splits = {
        s: encode_split(manifest, s, params, cfg.tokenizer, cfg.effective_segments)
        for s in ("train", "val")
    }
    return cfg, shape, splits


def test_reaches_high_balanced_accuracy(encoded) -> None:
    cfg, shape, splits = encoded
    params = init_model(cfg.model, cfg.token_width(shape), cfg.seed)
    result = train(params, splits["train"], splits["val"], cfg.train)
    assert max(r.val.balanced_accuracy for r in result.history) >= 0.9


def test_shuffled_labels_stay_near_chance(encoded) -> None:
    cfg, shape, splits = encoded
    rng = np.random.default_rng(123)
    shuffled = dataclasses.replace(
        splits["train"], labels=rng.permutation(splits["train"].labels)
    )
    params = init_model(cfg.model, cfg.token_width(shape), cfg.seed)
    result = train(params, shuffled, splits["val"], cfg.train)
    assert evaluate(result.params, splits["val"]).balanced_accuracy < 0.45
