"""Bundled experiment presets.

Loads ``presets.json`` and exposes each entry as a ``config`` fragment for
:func:`seglat.config.build_run_config` plus, for sweep presets, the segment
and representation lists.
"""

from __future__ import annotations

import copy
import json
from importlib.resources import files
from typing import Any

from pydantic import BaseModel, ConfigDict, Field

from seglat.config import ModelInput
from seglat.errors import ConfigurationError

DEFAULT_SWEEP_SEGMENTS: tuple[int | None, ...] = (None, 2, 4, 8, 16, 32, 64)


class SweepSpec(BaseModel):
    """Segment settings to sweep; ``None`` is the unsegmented baseline."""

    model_config = ConfigDict(extra="forbid")

    segments: list[int | None] = Field(default_factory=lambda: list(DEFAULT_SWEEP_SEGMENTS))
    representations: list[ModelInput] = Field(default_factory=lambda: ["wave", "psd"])
    unsegmented_latents: int = Field(default=32, ge=1)


class Preset(BaseModel):
    model_config = ConfigDict(extra="forbid")

    description: str = ""
    config: dict[str, Any] = Field(default_factory=dict)
    sweep: SweepSpec | None = None


def load_presets() -> dict[str, Preset]:
    """Return every preset parsed from presets.json."""
    data = files("seglat").joinpath("presets.json").read_text(encoding="utf-8")
    return {name: Preset.model_validate(entry) for name, entry in json.loads(data).items()}


PRESETS: dict[str, Preset] = load_presets()


def list_presets() -> list[str]:
    return sorted(PRESETS)


def get_preset(name: str) -> Preset:
    """Return a deep copy of preset *name*."""
    preset = PRESETS.get(name)
    if preset is None:
        raise ConfigurationError(f"unknown preset {name!r}; available: {', '.join(list_presets())}")
    return copy.deepcopy(preset)
