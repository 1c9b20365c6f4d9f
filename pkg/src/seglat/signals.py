"""Signal representations: recordings, PSD spectrograms, resizing and stack fusion.

All functions are pure and operate on float64 numpy arrays laid out
channels-last (``L x C`` waveforms, ``H x W x C`` images), except
:class:`Recording`, which stores ``C x L`` samples as acquired.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator
from scipy import signal as sps

from seglat.errors import ConfigurationError, ContractViolation, DataError

logger = logging.getLogger("seglat.signals")

N_CLASSES = 3
DEFAULT_CHANNELS = 24
DEFAULT_SAMPLE_RATE_HZ = 10.0
DEFAULT_IMAGE_SIZE = 224
LOG_FLOOR = 1e-12

WaveLayout = Literal["per_channel", "grid"]


# ---------------------------------------------------------------------------
# Types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Recording:
    """One trial: ``C x L`` samples, sampling rate, class label and subject."""

    samples: np.ndarray
    sample_rate_hz: float
    label: int
    subject_id: str = ""

    def __post_init__(self) -> None:
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 2:
            raise DataError(f"recording samples must be (channels, length), got {samples.shape}")
        if not np.all(np.isfinite(samples)):
            raise DataError(f"recording {self.subject_id!r} has non-finite samples")
        if self.sample_rate_hz <= 0:
            raise DataError(f"sample rate must be positive, got {self.sample_rate_hz}")
        if not 0 <= self.label < N_CLASSES:
            raise DataError(f"label {self.label} outside [0, {N_CLASSES})")
        object.__setattr__(self, "samples", samples)

    @property
    def channels(self) -> int:
        return self.samples.shape[0]

    @property
    def length(self) -> int:
        return self.samples.shape[1]


class StftConfig(BaseModel):
    """Short-time PSD parameters (window and hop in samples)."""

    model_config = ConfigDict(extra="forbid")

    window_len: int = 64
    hop: int = 16
    window: str = "hann"
    log_scale: bool = True

    @model_validator(mode="after")
    def _check(self) -> StftConfig:
        if self.window_len < 1:
            raise ValueError(f"window_len must be >= 1, got {self.window_len}")
        if not 0 < self.hop <= self.window_len:
            raise ValueError(f"hop must satisfy 0 < hop <= window_len, got {self.hop}")
        return self


@dataclass(frozen=True)
class SpectrogramSet:
    """Per-channel resized spectrogram planes with bin-center annotations.

    ``planes`` is ``C x H x W`` of power values (nonnegative unless
    log-scaled). ``freq_axis`` (Hz) and ``time_axis`` (s) hold the centers of
    the source bins before resizing.
    """

    planes: np.ndarray
    freq_axis: np.ndarray
    time_axis: np.ndarray

    @property
    def height(self) -> int:
        return self.planes.shape[1]

    @property
    def width(self) -> int:
        return self.planes.shape[2]


# ---------------------------------------------------------------------------
# PSD spectrogram
# ---------------------------------------------------------------------------


def _stft_psd(
    channel: np.ndarray, sample_rate_hz: float, cfg: StftConfig
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    x = np.asarray(channel, dtype=np.float64)
    if x.ndim != 1:
        raise DataError(f"expected a 1D series, got shape {x.shape}")
    if cfg.window_len > x.size:
        raise DataError(f"window_len {cfg.window_len} exceeds series length {x.size}")
    freqs, times, plane = sps.spectrogram(
        x,
        fs=sample_rate_hz,
        window=cfg.window,
        nperseg=cfg.window_len,
        noverlap=cfg.window_len - cfg.hop,
        detrend=False,
        return_onesided=True,
        scaling="density",
        mode="psd",
    )
    return freqs, times, plane


def compute_psd_spectrogram(
    channel: np.ndarray, sample_rate_hz: float, cfg: StftConfig
) -> np.ndarray:
    """One-sided PSD per overlapping window, ``(window_len/2 + 1) x frames``.

    Each frame is ``|DFT(w * x)|^2 / (fs * sum(w^2))`` with interior bins
    doubled, so ``sum_f plane[f, t] * df`` equals the windowed frame power.
    The frame count is ``floor((L - window_len) / hop) + 1``. With
    ``cfg.log_scale`` the plane is ``log10(plane + 1e-12)``.
    """
    _, _, plane = _stft_psd(channel, sample_rate_hz, cfg)
    if cfg.log_scale:
        return np.log10(plane + LOG_FLOOR)
    return plane


def spectrogram_set(
    rec: Recording, cfg: StftConfig, target: tuple[int, int] = (DEFAULT_IMAGE_SIZE,) * 2
) -> SpectrogramSet:
    """Resized PSD planes for every channel of *rec*, plus axis annotations."""
    planes = []
    freqs = times = np.empty(0)
    for channel in rec.samples:
        freqs, times, plane = _stft_psd(channel, rec.sample_rate_hz, cfg)
        if cfg.log_scale:
            plane = np.log10(plane + LOG_FLOOR)
        planes.append(resize_bilinear(plane, *target))
    return SpectrogramSet(planes=np.stack(planes), freq_axis=freqs, time_axis=times)


# ---------------------------------------------------------------------------
# Resizing
# ---------------------------------------------------------------------------


def _axis_weights(source: int, target: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    if target == 1:
        coords = np.array([(source - 1) / 2.0])
    else:
        coords = np.arange(target) * (source - 1) / (target - 1)
    lo = np.minimum(np.floor(coords).astype(np.int64), source - 1)
    hi = np.minimum(lo + 1, source - 1)
    return lo, hi, coords - lo


def resize_bilinear(plane: np.ndarray, target_h: int, target_w: int) -> np.ndarray:
    """Bilinear resize on a corner-aligned grid.

    Output corners sample source corners exactly; the result stays within the
    source ``[min, max]`` and constants are preserved bit-exactly.
    """
    if target_h < 1 or target_w < 1:
        raise ConfigurationError(f"resize target must be positive, got {target_h}x{target_w}")
    src = np.asarray(plane, dtype=np.float64)
    if src.ndim != 2 or min(src.shape) < 1:
        raise DataError(f"resize expects a non-empty 2D plane, got shape {src.shape}")
    if src.shape == (target_h, target_w):
        return src.copy()

    r0, r1, tr = _axis_weights(src.shape[0], target_h)
    top, bottom = src[r0, :], src[r1, :]
    rows = top + tr[:, None] * (bottom - top)

    c0, c1, tc = _axis_weights(src.shape[1], target_w)
    left, right = rows[:, c0], rows[:, c1]
    out = left + tc[None, :] * (right - left)
    return np.clip(out, src.min(), src.max())


# ---------------------------------------------------------------------------
# Model inputs
# ---------------------------------------------------------------------------


def build_waveform_input(rec: Recording) -> np.ndarray:
    """``L x C`` waveform, each channel z-scored (population variance).

    Constant channels become zeros.
    """
    x = rec.samples.T
    mu = x.mean(axis=0, keepdims=True)
    sigma = x.std(axis=0, keepdims=True)
    dead = sigma[0] < 1e-12
    if np.any(dead):
        logger.debug("Zeroing %d constant channel(s) of %s", int(dead.sum()), rec.subject_id)
    safe = np.where(sigma > 0, sigma, 1.0)
    out = (x - mu) / safe
    out[:, dead] = 0.0
    return out


def _min_max(plane: np.ndarray) -> np.ndarray:
    lo, hi = plane.min(), plane.max()
    if hi - lo <= 0:
        return np.zeros_like(plane)
    return (plane - lo) / (hi - lo)


def build_psd_input(
    rec: Recording,
    cfg: StftConfig,
    target: tuple[int, int] = (DEFAULT_IMAGE_SIZE,) * 2,
) -> np.ndarray:
    """``H x W x C`` PSD image: per-channel spectrogram, resize, min-max to [0, 1]."""
    if rec.length < 2 * cfg.window_len:
        raise DataError(
            f"recording length {rec.length} is shorter than 2 x window_len ({cfg.window_len})"
        )
    planes = [
        _min_max(resize_bilinear(compute_psd_spectrogram(ch, rec.sample_rate_hz, cfg), *target))
        for ch in rec.samples
    ]
    return np.stack(planes, axis=-1)


def interpolate_waveform(
    wave: np.ndarray, height: int, width: int, layout: WaveLayout = "per_channel"
) -> np.ndarray:
    """Project an ``L x C`` waveform onto ``H x W`` planes.

    ``per_channel``: each channel is linearly resampled to ``W`` and repeated
    over ``H`` rows, one plane per channel. ``grid``: the whole ``C x L`` grid
    is bilinearly resized to a single plane.
    """
    wave = np.asarray(wave, dtype=np.float64)
    if wave.ndim != 2:
        raise DataError(f"waveform must be (length, channels), got {wave.shape}")
    if layout == "grid":
        return resize_bilinear(wave.T, height, width)[..., None]
    if layout != "per_channel":
        raise ConfigurationError(f"unknown waveform layout {layout!r}")
    rows = [resize_bilinear(series[None, :], 1, width)[0] for series in wave.T]
    planes = np.stack(rows, axis=-1)  # W x C
    return np.broadcast_to(planes[None, :, :], (height, width, wave.shape[1])).copy()


def stack_fusion(
    wave: np.ndarray, psd: np.ndarray, layout: WaveLayout = "per_channel"
) -> np.ndarray:
    """Concatenate interpolated waveform planes (first) with PSD planes along channels."""
    psd = np.asarray(psd, dtype=np.float64)
    if psd.ndim != 3:
        raise DataError(f"PSD input must be (H, W, C), got {psd.shape}")
    if not (np.all(np.isfinite(wave)) and np.all(np.isfinite(psd))):
        raise DataError("stack_fusion inputs must be finite")
    height, width, _ = psd.shape
    planes = interpolate_waveform(wave, height, width, layout)
    if planes.shape[:2] != psd.shape[:2]:
        raise ContractViolation(f"interpolated waveform {planes.shape} does not match {psd.shape}")
    return np.concatenate([planes, psd], axis=-1)
