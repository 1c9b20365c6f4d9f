"""Preprocessing pipeline: raw recordings to model-input tensor files.

A raw manifest at ``<root>/manifest.json`` is turned into
``<root>/<representation>/manifest.json`` plus one tensor file per
recording. Recordings are processed in a thread pool; a failing file is
logged and reported, and the rest of the batch continues.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from seglat.config import ModelInput, RunConfig
from seglat.container import save_tensor
from seglat.dataset import MANIFEST_NAME, DatasetManifest, ManifestEntry, synthesize_recording
from seglat.errors import ConfigurationError
from seglat.seeding import substream
from seglat.signals import (
    DEFAULT_CHANNELS,
    DEFAULT_SAMPLE_RATE_HZ,
    Recording,
    build_psd_input,
    build_waveform_input,
    stack_fusion,
)

logger = logging.getLogger("seglat.pipeline")


def build_input(rec: Recording, cfg: RunConfig) -> np.ndarray:
    """Model input of ``cfg.representation`` for one recording."""
    target = (cfg.image_size, cfg.image_size)
    if cfg.representation == "wave":
        return build_waveform_input(rec)
    if cfg.representation == "psd":
        return build_psd_input(rec, cfg.stft, target)
    wave = build_waveform_input(rec)
    psd = build_psd_input(rec, cfg.stft, target)
    return stack_fusion(wave, psd, cfg.wave_layout)


def example_input(
    cfg: RunConfig,
    channels: int = DEFAULT_CHANNELS,
    length: int = 512,
    sample_rate_hz: float = DEFAULT_SAMPLE_RATE_HZ,
) -> np.ndarray:
    """One synthetic input of the configured representation (for profiling)."""
    rng = substream(cfg.seed, "bench")
    samples = synthesize_recording(rng, 0, channels, length, sample_rate_hz)
    rec = Recording(samples=samples, sample_rate_hz=sample_rate_hz, label=0, subject_id="bench")
    return build_input(rec, cfg)


def output_dir(raw_manifest: str | Path, representation: ModelInput) -> Path:
    return Path(raw_manifest).parent / representation


@dataclass
class PreprocessResult:
    manifest_path: Path
    written: int = 0
    failures: dict[str, str] = field(default_factory=dict)
    skipped: bool = False
    shape: tuple[int, ...] | None = None

    @property
    def ok(self) -> bool:
        return not self.failures


def _already_processed(path: Path, representation: ModelInput) -> bool:
    if not path.is_file():
        return False
    try:
        manifest = DatasetManifest.load(path)
    except ValueError:
        return False
    return len(manifest) > 0 and manifest.representation == representation


def preprocess_manifest(
    manifest_path: str | Path,
    cfg: RunConfig,
    *,
    out_dir: str | Path | None = None,
    force: bool = False,
) -> PreprocessResult:
    """Write ``cfg.representation`` inputs for every recording of a raw manifest.

    Args:
        manifest_path: Raw manifest (or an already processed one, which is
            reported as skipped when it matches the requested representation).
        cfg: Run configuration (representation, STFT, image size, layout, workers).
        out_dir: Destination directory; defaults to ``<root>/<representation>``.
        force: Rewrite outputs even if a matching manifest already exists.

    Raises:
        FormatError: If the manifest is malformed.
        ConfigurationError: If the manifest holds processed inputs of another
            representation.
    """
    manifest = DatasetManifest.load(manifest_path)
    source = manifest.representation
    if source == cfg.representation:
        logger.warning("%s already holds %s inputs; nothing to do", manifest_path, source)
        return PreprocessResult(manifest_path=Path(manifest_path), skipped=True)
    if source != "raw":
        raise ConfigurationError(
            f"cannot build {cfg.representation} inputs from a {source} manifest; use raw recordings"
        )

    dest = Path(out_dir) if out_dir is not None else output_dir(manifest_path, cfg.representation)
    dest_manifest = dest / MANIFEST_NAME
    if not force and _already_processed(dest_manifest, cfg.representation):
        logger.warning("%s already exists; not rewriting (use force to rebuild)", dest_manifest)
        return PreprocessResult(manifest_path=dest_manifest, skipped=True)
    dest.mkdir(parents=True, exist_ok=True)

    def _process(entry: ManifestEntry) -> tuple[int, ...]:
        data = build_input(manifest.load_recording(entry), cfg)
        save_tensor(dest / entry.path, data)
        return data.shape

    result = PreprocessResult(manifest_path=dest_manifest)
    kept: list[ManifestEntry] = []
    with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
        futures = [(entry, pool.submit(_process, entry)) for entry in manifest]
        for entry, future in futures:
            try:
                shape = future.result()
            except Exception as exc:  # noqa: BLE001
                logger.exception("Failed to preprocess %s", entry.path)
                result.failures[entry.path] = str(exc)
                continue
            result.shape = result.shape or shape
            kept.append(entry.model_copy(update={"representation": cfg.representation}))

    DatasetManifest(kept, dest).save(dest_manifest)
    result.written = len(kept)
    logger.info(
        "Preprocessed %d/%d recordings to %s inputs of shape %s in %s",
        result.written,
        len(manifest),
        cfg.representation,
        result.shape,
        dest,
    )
    return result
