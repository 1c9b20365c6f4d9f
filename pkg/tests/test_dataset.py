"""Tests for manifests, checksums and the synthetic dataset generator."""

import json

import numpy as np
import pytest

from seglat.dataset import (
    MANIFEST_NAME,
    DatasetManifest,
    ManifestEntry,
    class_frequency_hz,
    dataset_checksum,
    generate_synthetic_dataset,
    synthesize_recording,
)
from seglat.errors import ConfigurationError, FormatError
from seglat.seeding import substream


class TestSyntheticDataset:
    def test_balanced_classes_and_files(self, tmp_path) -> None:
        manifest = generate_synthetic_dataset(tmp_path, 10, channels=4, length=128)
        assert len(manifest) == 30
        labels = [e.label for e in manifest]
        assert labels.count(0) == labels.count(1) == labels.count(2) == 10
        assert (tmp_path / MANIFEST_NAME).is_file()
        rec = manifest.load_recording(manifest.entries[0])
        assert rec.samples.shape == (4, 128)

    def test_subject_disjoint_splits(self, tmp_path) -> None:
        manifest = generate_synthetic_dataset(tmp_path, 20, channels=2, length=64)
        by_split = {s: {e.subject for e in manifest.split(s)} for s in ("train", "val", "test")}
        assert not by_split["train"] & by_split["val"]
        assert not by_split["train"] & by_split["test"]
        assert not by_split["val"] & by_split["test"]
        assert len(by_split["val"]) == 3
        assert len(by_split["test"]) == 3

    def test_same_seed_same_checksum(self, tmp_path) -> None:
        generate_synthetic_dataset(tmp_path / "a", 4, channels=2, length=64, seed=3)
        generate_synthetic_dataset(tmp_path / "b", 4, channels=2, length=64, seed=3)
        generate_synthetic_dataset(tmp_path / "c", 4, channels=2, length=64, seed=4)
        a = dataset_checksum(tmp_path / "a" / MANIFEST_NAME)
        assert a == dataset_checksum(tmp_path / "b" / MANIFEST_NAME)
        assert a != dataset_checksum(tmp_path / "c" / MANIFEST_NAME)

    def test_zero_trials_rejected(self, tmp_path) -> None:
        with pytest.raises(ConfigurationError):
            generate_synthetic_dataset(tmp_path, 0)

    def test_class_frequency_dominates(self) -> None:
        rng = substream(0, "data")
        samples = synthesize_recording(rng, 2, channels=3, length=1024, sample_rate_hz=10.0)
        spectrum = np.abs(np.fft.rfft(samples, axis=-1)).mean(axis=0)
        freqs = np.fft.rfftfreq(1024, d=0.1)
        peak = freqs[np.argmax(spectrum[1:]) + 1]
        assert peak == pytest.approx(class_frequency_hz(2, 10.0), abs=0.02)


class TestManifest:
    def test_save_load_keeps_entries(self, tmp_path) -> None:
        manifest = generate_synthetic_dataset(tmp_path, 3, channels=2, length=32)
        loaded = DatasetManifest.load(tmp_path / MANIFEST_NAME)
        assert loaded.entries == manifest.entries
        assert loaded.representation == "raw"

    def test_missing_file_rejected(self, tmp_path) -> None:
        generate_synthetic_dataset(tmp_path, 2, channels=2, length=32)
        (tmp_path / "rec_00000.lsg").unlink()
        with pytest.raises(FormatError, match="does not exist"):
            DatasetManifest.load(tmp_path / MANIFEST_NAME)

    def test_malformed_json(self, tmp_path) -> None:
        path = tmp_path / MANIFEST_NAME
        path.write_text("{not json", encoding="utf-8")
        with pytest.raises(FormatError):
            DatasetManifest.load(path)

    def test_unknown_field_rejected(self, tmp_path) -> None:
        path = tmp_path / MANIFEST_NAME
        row = {"path": "x.lsg", "label": 0, "subject": "s", "split": "train", "extra": 1}
        path.write_text(json.dumps([row]), encoding="utf-8")
        with pytest.raises(FormatError):
            DatasetManifest.load(path)

    def test_subject_in_two_splits_rejected(self, tmp_path) -> None:
        entries = [
            ManifestEntry(path="a.lsg", label=0, subject="s1", split="train"),
            ManifestEntry(path="b.lsg", label=1, subject="s1", split="test"),
        ]
        with pytest.raises(FormatError, match="s1"):
            DatasetManifest(entries, tmp_path).validate(check_files=False)

    def test_mixed_representations_rejected(self, tmp_path) -> None:
        entries = [
            ManifestEntry(path="a.lsg", label=0, subject="s1", split="train", representation="psd"),
            ManifestEntry(path="b.lsg", label=1, subject="s2", split="train"),
        ]
        with pytest.raises(FormatError):
            DatasetManifest(entries, tmp_path).representation
