"""Unified tokenization of 1D waveforms and 2D images, and latent segmentation.

An input with ``D`` axes and ``C`` channels (channels last) becomes ``N``
tokens of width ``C' = C + D(2K + 1)``: the data channels followed by Fourier
features of the token's normalized coordinate. Tokens are then cut into
``S`` contiguous segments of ``n_s = ceil(N / S)`` slots, the tail padded
with masked zero tokens.
"""

from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator

from seglat.errors import ConfigurationError, ContractViolation, RangeError, UnsupportedInputError

#: Default band count per axis, by input rank D.
DEFAULT_BANDS = {1: 64, 2: 32}


class TokenizerConfig(BaseModel):
    """Fourier feature parameters.

    ``bands`` (K) and ``f_max`` default per input: K is 64 for waveforms and
    32 per axis for images; ``f_max`` is each axis extent (at least 2).
    """

    model_config = ConfigDict(extra="forbid")

    bands: int | None = None
    f_max: list[float] | None = None

    @field_validator("bands")
    @classmethod
    def _check_bands(cls, v: int | None) -> int | None:
        if v is not None and v < 1:
            raise ValueError(f"bands must be >= 1, got {v}")
        return v

    @field_validator("f_max")
    @classmethod
    def _check_f_max(cls, v: list[float] | None) -> list[float] | None:
        if v is not None and any(f < 2 for f in v):
            raise ValueError(f"every f_max must be >= 2, got {v}")
        return v

    def resolve(self, extents: Sequence[int]) -> tuple[int, list[float]]:
        """Return ``(K, f_max per axis)`` for an input with the given axis extents."""
        d = len(extents)
        bands = self.bands if self.bands is not None else DEFAULT_BANDS.get(d, 32)
        if self.f_max is None:
            f_max = [float(max(n, 2)) for n in extents]
        elif len(self.f_max) == 1:
            f_max = [float(self.f_max[0])] * d
        elif len(self.f_max) == d:
            f_max = [float(f) for f in self.f_max]
        else:
            raise ConfigurationError(f"f_max has {len(self.f_max)} entries for a {d}-axis input")
        return bands, f_max

    def token_width(self, channels: int, extents: Sequence[int]) -> int:
        bands, _ = self.resolve(extents)
        return channels + len(extents) * (2 * bands + 1)


@dataclass(frozen=True)
class TokenBatch:
    """Token matrix ``N x C'`` of one input."""

    tokens: np.ndarray
    channels: int
    axis_extents: tuple[int, ...]

    @property
    def n_tokens(self) -> int:
        return self.tokens.shape[0]

    @property
    def width(self) -> int:
        return self.tokens.shape[1]

    @property
    def n_axes(self) -> int:
        return len(self.axis_extents)


@dataclass(frozen=True)
class SegmentedTokens:
    """Segment-reshaped tokens ``S x n_s x C'`` with a real-token mask ``S x n_s``."""

    segments: np.ndarray
    mask: np.ndarray
    n_tokens: int

    @property
    def n_segments(self) -> int:
        return self.segments.shape[0]

    @property
    def segment_length(self) -> int:
        return self.segments.shape[1]

    @property
    def padded_length(self) -> int:
        return self.n_segments * self.segment_length

    @property
    def width(self) -> int:
        return self.segments.shape[2]

    def unpad(self) -> np.ndarray:
        """Real tokens in order, ``N x C'``."""
        return self.segments[self.mask]

    def repad(self, segment_length: int) -> SegmentedTokens:
        """Grow every segment to *segment_length* slots with masked zero tokens."""
        extra = segment_length - self.segment_length
        if extra < 0:
            raise ConfigurationError(
                f"cannot shrink segments from {self.segment_length} to {segment_length}"
            )
        segments = np.pad(self.segments, ((0, 0), (0, extra), (0, 0)))
        mask = np.pad(self.mask, ((0, 0), (0, extra)), constant_values=False)
        return SegmentedTokens(segments=segments, mask=mask, n_tokens=self.n_tokens)


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------


def _bands(k: int, f_max: float) -> np.ndarray:
    return np.linspace(1.0, f_max / 2.0, k)


def fourier_position_encoding(
    p: np.ndarray | Sequence[float], bands: int, f_max: float | Sequence[float]
) -> np.ndarray:
    """Fourier features ``[sin(pi s p), cos(pi s p), p]`` per axis, axes concatenated.

    Args:
        p: Coordinates in ``[-1, 1]``, shape ``(D,)`` or ``(N, D)``.
        bands: Frequency count K; frequencies are linearly spaced over
            ``[1, f_max / 2]``.
        f_max: Maximum frequency, scalar or one per axis.

    Returns:
        Array of shape ``(D(2K+1),)`` or ``(N, D(2K+1))``.
    """
    if bands < 1:
        raise ConfigurationError(f"bands must be >= 1, got {bands}")
    coords = np.asarray(p, dtype=np.float64)
    single = coords.ndim == 1
    coords = np.atleast_2d(coords)
    if np.any(np.abs(coords) > 1.0):
        raise RangeError(
            f"positions must lie in [-1, 1], got range [{coords.min()}, {coords.max()}]"
        )
    d = coords.shape[1]
    f_max_axes = [float(f_max)] * d if np.isscalar(f_max) else [float(f) for f in f_max]
    if len(f_max_axes) != d:
        raise ConfigurationError(f"f_max has {len(f_max_axes)} entries for {d} axes")

    features = []
    for axis in range(d):
        s = _bands(bands, f_max_axes[axis])
        angle = np.pi * coords[:, axis : axis + 1] * s[None, :]
        features.extend([np.sin(angle), np.cos(angle), coords[:, axis : axis + 1]])
    out = np.concatenate(features, axis=1)
    return out[0] if single else out


def _axis_positions(extent: int) -> np.ndarray:
    if extent == 1:
        return np.zeros(1)
    return np.linspace(-1.0, 1.0, extent)


def tokenize(data: np.ndarray, cfg: TokenizerConfig) -> TokenBatch:
    """Flatten a channels-last input into tokens ``[channels || Fourier features]``.

    Rows follow row-major order over the input axes.
    """
    data = np.asarray(data, dtype=np.float64)
    if data.ndim not in (2, 3):
        raise UnsupportedInputError(
            f"inputs must be (L, C) or (H, W, C), got rank {data.ndim} shape {data.shape}"
        )
    extents = data.shape[:-1]
    channels = data.shape[-1]
    bands, f_max = cfg.resolve(extents)

    grids = np.meshgrid(*[_axis_positions(n) for n in extents], indexing="ij")
    coords = np.stack([g.reshape(-1) for g in grids], axis=1)
    features = fourier_position_encoding(coords, bands, f_max)
    tokens = np.concatenate([data.reshape(-1, channels), features], axis=1)

    expected = channels + len(extents) * (2 * bands + 1)
    if tokens.shape[1] != expected:
        raise ContractViolation(f"token width {tokens.shape[1]} != C + D(2K+1) = {expected}")
    return TokenBatch(tokens=tokens, channels=channels, axis_extents=tuple(extents))


def segment(batch: TokenBatch, n_segments: int) -> SegmentedTokens:
    """Partition tokens into contiguous segments of ``ceil(N / S)`` slots.

    An S whose last segment would hold only padding is rejected, so every
    segment keeps at least one real token.
    """
    n = batch.n_tokens
    if not 1 <= n_segments <= n:
        raise ConfigurationError(f"segment count must satisfy 1 <= S <= N={n}, got S={n_segments}")
    length = math.ceil(n / n_segments)
    if (n_segments - 1) * length >= n:
        raise ConfigurationError(
            f"S={n_segments} over N={n} tokens leaves the last segment empty (n_s={length})"
        )
    padded = n_segments * length
    tokens = np.zeros((padded, batch.width))
    tokens[:n] = batch.tokens
    mask = np.zeros(padded, dtype=bool)
    mask[:n] = True
    return SegmentedTokens(
        segments=tokens.reshape(n_segments, length, batch.width),
        mask=mask.reshape(n_segments, length),
        n_tokens=n,
    )
