"""Dataset manifests and the synthetic three-class recording generator.

A manifest is a UTF-8 JSON array of entries ``{"path", "label", "subject",
"split", ...}``; paths are relative to the manifest file so a dataset
directory can be moved or compared byte-for-byte.
"""

from __future__ import annotations

import hashlib
import json
import logging
from collections.abc import Iterator
from pathlib import Path
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from seglat.container import load_tensor, save_tensor
from seglat.errors import ConfigurationError, FormatError
from seglat.seeding import substream
from seglat.signals import DEFAULT_SAMPLE_RATE_HZ, N_CLASSES, Recording

logger = logging.getLogger("seglat.dataset")

Split = Literal["train", "val", "test"]
Representation = Literal["raw", "wave", "psd", "stack"]

MANIFEST_NAME = "manifest.json"
SNR_DB = 6.0
SPLIT_FRACTIONS = {"val": 0.15, "test": 0.15}


# ---------------------------------------------------------------------------
# Manifest
# ---------------------------------------------------------------------------


class ManifestEntry(BaseModel):
    """One tensor file with its label, subject and split."""

    model_config = ConfigDict(extra="forbid")

    path: str
    label: int = Field(ge=0, lt=N_CLASSES)
    subject: str
    split: Split
    representation: Representation = "raw"
    sample_rate_hz: float | None = None


class DatasetManifest:
    """Ordered list of :class:`ManifestEntry` anchored at a root directory.

    Args:
        entries: Manifest rows in file order.
        root: Directory that entry paths are relative to.
    """

    def __init__(self, entries: list[ManifestEntry], root: str | Path) -> None:
        self.entries = list(entries)
        self.root = Path(root)

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self) -> Iterator[ManifestEntry]:
        return iter(self.entries)

    @property
    def representation(self) -> Representation:
        kinds = {e.representation for e in self.entries}
        if len(kinds) > 1:
            raise FormatError(f"manifest mixes representations: {sorted(kinds)}")
        return kinds.pop() if kinds else "raw"

    def resolve(self, entry: ManifestEntry) -> Path:
        return self.root / entry.path

    def split(self, tag: Split) -> list[ManifestEntry]:
        return [e for e in self.entries if e.split == tag]

    def validate(self, *, check_files: bool = True) -> None:
        """Check file existence and subject-disjoint splits."""
        subjects: dict[str, str] = {}
        for entry in self.entries:
            if check_files and not self.resolve(entry).is_file():
                raise FormatError(f"manifest path does not exist: {entry.path}")
            seen = subjects.setdefault(entry.subject, entry.split)
            if seen != entry.split:
                raise FormatError(
                    f"subject {entry.subject!r} appears in both {seen!r} and {entry.split!r}"
                )

    def load_recording(self, entry: ManifestEntry) -> Recording:
        if entry.representation != "raw":
            raise ConfigurationError(f"{entry.path} is a {entry.representation} input")
        return Recording(
            samples=load_tensor(self.resolve(entry)).data,
            sample_rate_hz=entry.sample_rate_hz or DEFAULT_SAMPLE_RATE_HZ,
            label=entry.label,
            subject_id=entry.subject,
        )

    def load_input(self, entry: ManifestEntry) -> np.ndarray:
        return load_tensor(self.resolve(entry)).data

    # -- Serialization -------------------------------------------------------

    def to_json(self) -> str:
        rows = [e.model_dump(mode="json") for e in self.entries]
        return json.dumps(rows, indent=2, sort_keys=True) + "\n"

    def save(self, path: str | Path) -> Path:
        path = Path(path)
        path.write_text(self.to_json(), encoding="utf-8")
        return path

    @classmethod
    def load(cls, path: str | Path) -> DatasetManifest:
        path = Path(path)
        try:
            rows = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise FormatError(f"cannot read manifest {path}: {exc}") from exc
        if not isinstance(rows, list):
            raise FormatError(f"manifest {path} must be a JSON array")
        try:
            entries = [ManifestEntry.model_validate(row) for row in rows]
        except ValidationError as exc:
            raise FormatError(f"malformed manifest {path}: {exc}") from exc
        manifest = cls(entries, path.parent)
        manifest.validate()
        return manifest


def dataset_checksum(manifest_path: str | Path) -> str:
    """SHA-256 over the manifest bytes followed by every referenced file."""
    manifest_path = Path(manifest_path)
    manifest = DatasetManifest.load(manifest_path)
    digest = hashlib.sha256(manifest_path.read_bytes())
    for entry in manifest:
        digest.update(manifest.resolve(entry).read_bytes())
    return digest.hexdigest()


# ---------------------------------------------------------------------------
# Synthetic data
# ---------------------------------------------------------------------------


def class_frequency_hz(label: int, sample_rate_hz: float) -> float:
    """Dominant oscillation of class *label*: ``0.1 * (k + 1) * nyquist / 2``."""
    nyquist = sample_rate_hz / 2.0
    return 0.1 * (label + 1) * nyquist / 2.0


def _pink_noise(rng: np.random.Generator, channels: int, length: int) -> np.ndarray:
    """Unit-variance 1/f noise, shaped in the frequency domain."""
    spectrum = np.fft.rfft(rng.standard_normal((channels, length)), axis=-1)
    f = np.arange(spectrum.shape[-1], dtype=np.float64)
    f[0] = np.inf
    noise = np.fft.irfft(spectrum / np.sqrt(f), n=length, axis=-1)
    noise -= noise.mean(axis=-1, keepdims=True)
    return noise / noise.std(axis=-1, keepdims=True)


def synthesize_recording(
    rng: np.random.Generator,
    label: int,
    channels: int,
    length: int,
    sample_rate_hz: float,
) -> np.ndarray:
    """``C x L`` samples: a class-frequency sinusoid per channel plus 1/f noise at 6 dB SNR."""
    t = np.arange(length) / sample_rate_hz
    freq = class_frequency_hz(label, sample_rate_hz)
    amplitude = rng.uniform(0.5, 1.5, size=(channels, 1))
    phase = rng.uniform(0.0, 2.0 * np.pi, size=(channels, 1))
    tone = amplitude * np.sin(2.0 * np.pi * freq * t[None, :] + phase)
    noise_power = (amplitude**2 / 2.0) / 10.0 ** (SNR_DB / 10.0)
    return tone + np.sqrt(noise_power) * _pink_noise(rng, channels, length)


def _assign_splits(rng: np.random.Generator, subjects: list[str]) -> dict[str, Split]:
    order = [subjects[i] for i in rng.permutation(len(subjects))]
    n_val = round(SPLIT_FRACTIONS["val"] * len(order))
    n_test = round(SPLIT_FRACTIONS["test"] * len(order))
    splits: dict[str, Split] = {}
    for i, subject in enumerate(order):
        if i < n_val:
            splits[subject] = "val"
        elif i < n_val + n_test:
            splits[subject] = "test"
        else:
            splits[subject] = "train"
    return splits


def generate_synthetic_dataset(
    out_dir: str | Path,
    n_per_class: int,
    channels: int = 24,
    length: int = 512,
    sample_rate_hz: float = DEFAULT_SAMPLE_RATE_HZ,
    seed: int = 0,
) -> DatasetManifest:
    """Write a balanced three-class dataset and its manifest to *out_dir*.

    Each synthetic subject contributes one trial per class; subjects are
    split 70/15/15 into train/val/test. Output is byte-identical for a
    given seed.

    Returns:
        The manifest, also saved as ``out_dir/manifest.json``.
    """
    for name, value in (("n_per_class", n_per_class), ("channels", channels), ("length", length)):
        if value < 1:
            raise ConfigurationError(f"{name} must be positive, got {value}")
    if sample_rate_hz <= 0:
        raise ConfigurationError(f"sample_rate_hz must be positive, got {sample_rate_hz}")

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = substream(seed, "data")

    subjects = [f"subj{i:04d}" for i in range(n_per_class)]
    splits = _assign_splits(rng, subjects)

    entries: list[ManifestEntry] = []
    index = 0
    for subject in subjects:
        for label in range(N_CLASSES):
            samples = synthesize_recording(rng, label, channels, length, sample_rate_hz)
            rel = f"rec_{index:05d}.lsg"
            save_tensor(out_dir / rel, samples)
            entries.append(
                ManifestEntry(
                    path=rel,
                    label=label,
                    subject=subject,
                    split=splits[subject],
                    sample_rate_hz=sample_rate_hz,
                )
            )
            index += 1

    manifest = DatasetManifest(entries, out_dir)
    manifest.save(out_dir / MANIFEST_NAME)
    logger.info(
        "Synthesized %d recordings (%d subjects, %d ch x %d samples) in %s",
        len(entries),
        n_per_class,
        channels,
        length,
        out_dir,
    )
    return manifest
