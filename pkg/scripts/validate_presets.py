#!/usr/bin/env python3
"""Validate bundled experiment presets against the run configuration schema."""

from __future__ import annotations

import json
import sys
from pathlib import Path
from typing import Any

REPO_ROOT = Path(__file__).resolve().parents[1]
PRESETS_PATH = REPO_ROOT / "src" / "seglat" / "presets.json"

sys.path.insert(0, str(REPO_ROOT / "src"))

from seglat.config import build_run_config  # noqa: E402
from seglat.errors import ConfigurationError  # noqa: E402
from seglat.experiments import sweep_setting  # noqa: E402
from seglat.presets import Preset  # noqa: E402
from seglat.profiler import estimate_flops  # noqa: E402

# Recording shape the cost check assumes: 24 channels x 512 samples.
CHANNELS, LENGTH = 24, 512


def _read_json(path: Path) -> dict[str, Any]:
    return json.loads(path.read_text(encoding="utf-8"))


def _check_costs(name: str, preset: Preset, errors: list[str]) -> None:
    sweep = preset.sweep
    if sweep is None:
        return
    for representation in sweep.representations:
        cfg = build_run_config(preset={**preset.config, "representation": representation})
        shape = cfg.expected_shape(CHANNELS, LENGTH)
        n_tokens = 1
        for extent in shape[:-1]:
            n_tokens *= extent
        width = cfg.tokenizer.token_width(shape[-1], shape[:-1])
        for segments in sweep.segments:
            model, n_segments = sweep_setting(cfg.model, segments, sweep.unsegmented_latents)
            try:
                estimate_flops(model, n_segments, n_tokens, width)
            except ConfigurationError as exc:
                errors.append(f"{name}: {representation} S={segments}: {exc}")


def main() -> int:
    raw = _read_json(PRESETS_PATH)
    errors: list[str] = []

    for name, entry in sorted(raw.items()):
        if not isinstance(entry, dict):
            errors.append(f"preset '{name}' must be an object")
            continue
        if not entry.get("description"):
            errors.append(f"preset '{name}' has no description")
        try:
            preset = Preset.model_validate(entry)
            build_run_config(preset=preset.config)
        except (ValueError, ConfigurationError) as exc:
            errors.append(f"preset '{name}' is invalid: {exc}")
            continue

        sweep = preset.sweep
        if sweep is not None:
            if len(set(sweep.segments)) != len(sweep.segments):
                errors.append(f"preset '{name}' repeats a segment setting")
            if not sweep.representations:
                errors.append(f"preset '{name}' sweeps no representation")

        if "--cost-check" in sys.argv:
            _check_costs(name, preset, errors)

    if errors:
        print("Preset validation failed:")
        for err in errors:
            print(f"- {err}")
        return 1

    print(f"{len(raw)} presets are valid")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
