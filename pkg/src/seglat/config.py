"""Run configuration: one pydantic tree loaded from presets, a key-value file and overrides.

Config file format
──────────────────
One ``key = value`` per line; blank lines are ignored, and a ``#`` at the start
of a line or after whitespace opens a comment unless it sits inside a quoted value.
Dotted keys address nested sections; values are parsed as JSON when they
parse, otherwise kept as strings::

    representation = psd
    segments = 8
    model.latent_dim = 64
    train.base_lr = 1e-4
    tokenizer.f_max = [32, 32]

Precedence (lowest first): model defaults, preset, config file, ``--set``
overrides and explicit flags.

Environment variables
─────────────────────
SEGLAT_LOG_LEVEL   logging level for the CLI (default: INFO)
SEGLAT_WORKERS     worker threads for preprocessing and throughput runs (default: 1)
"""

from __future__ import annotations

import copy
import json
import logging
import os
from collections.abc import Iterable, Mapping, Sequence
from pathlib import Path
from typing import Any, Literal

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from seglat.errors import ConfigurationError, DataError
from seglat.model import ModelConfig
from seglat.signals import DEFAULT_IMAGE_SIZE, StftConfig, WaveLayout
from seglat.tokenizer import TokenizerConfig
from seglat.train import TrainConfig

logger = logging.getLogger("seglat.config")

ModelInput = Literal["wave", "psd", "stack"]

LOG_LEVEL_ENV = "SEGLAT_LOG_LEVEL"
WORKERS_ENV = "SEGLAT_WORKERS"


class RunConfig(BaseModel):
    """Everything one run needs: representation, segmentation and every sub-config."""

    model_config = ConfigDict(extra="forbid")

    representation: ModelInput = "psd"
    segments: int = Field(default=32, ge=1)
    seed: int = 0
    image_size: int = Field(default=DEFAULT_IMAGE_SIZE, ge=2)
    wave_layout: WaveLayout = "per_channel"
    workers: int = Field(default=1, ge=1)
    data_dir: str = "data"
    run_dir: str = "runs/default"
    stft: StftConfig = Field(default_factory=StftConfig)
    tokenizer: TokenizerConfig = Field(default_factory=TokenizerConfig)
    model: ModelConfig = Field(default_factory=ModelConfig)
    train: TrainConfig = Field(default_factory=TrainConfig)

    @model_validator(mode="after")
    def _check_consistency(self) -> RunConfig:
        # One seed drives every substream.
        if self.train.seed != self.seed:
            self.train = self.train.model_copy(update={"seed": self.seed})
        if self.representation == "wave" and self.tokenizer.f_max and len(self.tokenizer.f_max) > 1:
            raise ValueError("waveform inputs have one axis; tokenizer.f_max takes one value")
        if self.representation != "wave" and self.tokenizer.f_max and len(self.tokenizer.f_max) > 2:
            raise ValueError("image inputs have two axes; tokenizer.f_max takes at most two values")
        return self

    @property
    def effective_segments(self) -> int:
        """Segments actually used: the unsegmented baseline always runs with one."""
        return self.segments if self.model.segmented else 1

    def expected_shape(self, channels: int, length: int) -> tuple[int, ...]:
        """Model-input shape for a ``channels x length`` recording."""
        if self.representation == "wave":
            return (length, channels)
        size = self.image_size
        if self.representation == "psd":
            return (size, size, channels)
        wave_planes = channels if self.wave_layout == "per_channel" else 1
        return (size, size, wave_planes + channels)

    def check_input(self, shape: Sequence[int]) -> None:
        """Reject inputs whose rank or image size disagrees with the representation."""
        shape = tuple(shape)
        if self.representation == "wave":
            if len(shape) != 2:
                raise DataError(f"wave inputs are (L, C); got shape {shape}")
            return
        if len(shape) != 3:
            raise DataError(f"{self.representation} inputs are (H, W, C); got shape {shape}")
        if shape[:2] != (self.image_size, self.image_size):
            raise DataError(
                f"{self.representation} input is {shape[0]}x{shape[1]}, "
                f"config expects image_size={self.image_size}"
            )

    def token_width(self, shape: Sequence[int]) -> int:
        self.check_input(shape)
        return self.tokenizer.token_width(shape[-1], shape[:-1])


# ---------------------------------------------------------------------------
# Key-value files and overrides
# ---------------------------------------------------------------------------


def parse_value(raw: str) -> Any:
    raw = raw.strip()
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def set_dotted(target: dict[str, Any], key: str, value: Any) -> None:
    parts = key.split(".")
    if not all(parts):
        raise ConfigurationError(f"malformed key {key!r}")
    node = target
    for part in parts[:-1]:
        child = node.setdefault(part, {})
        if not isinstance(child, dict):
            raise ConfigurationError(f"{key!r}: {part!r} is not a section")
        node = child
    node[parts[-1]] = value


def deep_merge(base: Mapping[str, Any], update: Mapping[str, Any]) -> dict[str, Any]:
    merged = copy.deepcopy(dict(base))
    for key, value in update.items():
        if isinstance(value, Mapping) and isinstance(merged.get(key), dict):
            merged[key] = deep_merge(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


def _strip_comment(line: str) -> str:
    """*line* up to a ``#`` that starts it or follows whitespace, outside double quotes."""
    quoted = escaped = False
    for i, ch in enumerate(line):
        if quoted:
            if escaped:
                escaped = False
            elif ch == "\\":
                escaped = True
            elif ch == '"':
                quoted = False
        elif ch == '"':
            quoted = True
        elif ch == "#" and (i == 0 or line[i - 1].isspace()):
            return line[:i]
    return line


def parse_config_text(text: str, source: str = "<config>") -> dict[str, Any]:
    """Nested dict from ``key = value`` lines."""
    data: dict[str, Any] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = _strip_comment(line).strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigurationError(f"{source}:{lineno}: expected 'key = value', got {line!r}")
        key, raw = stripped.split("=", 1)
        set_dotted(data, key.strip(), parse_value(raw))
    return data


def load_config_file(path: str | Path) -> dict[str, Any]:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigurationError(f"cannot read config file {path}: {exc}") from exc
    return parse_config_text(text, str(path))


def parse_overrides(pairs: Iterable[str]) -> dict[str, Any]:
    data: dict[str, Any] = {}
    for pair in pairs:
        if "=" not in pair:
            raise ConfigurationError(f"override must be key=value, got {pair!r}")
        key, raw = pair.split("=", 1)
        set_dotted(data, key.strip(), parse_value(raw))
    return data


def format_config(cfg: RunConfig) -> str:
    """Render *cfg* in the key-value file format (round-trips through :func:`parse_config_text`)."""
    lines: list[str] = []

    def _walk(prefix: str, node: Mapping[str, Any]) -> None:
        for key in sorted(node):
            value = node[key]
            name = f"{prefix}{key}"
            if isinstance(value, dict):
                _walk(name + ".", value)
            else:
                lines.append(f"{name} = {json.dumps(value)}")

    _walk("", cfg.model_dump(mode="json"))
    return "\n".join(lines) + "\n"


def build_run_config(
    *,
    preset: Mapping[str, Any] | None = None,
    config_file: str | Path | None = None,
    overrides: Iterable[str] = (),
    extra: Mapping[str, Any] | None = None,
) -> RunConfig:
    """Layer preset, config file, ``key=value`` overrides and *extra* into a :class:`RunConfig`.

    Raises:
        ConfigurationError: On unreadable files, malformed lines, unknown keys
            or invalid values.
    """
    data: dict[str, Any] = {}
    env_workers = workers_from_env()
    if env_workers is not None:
        data["workers"] = env_workers
    if preset:
        data = deep_merge(data, preset)
    if config_file is not None:
        data = deep_merge(data, load_config_file(config_file))
    data = deep_merge(data, parse_overrides(overrides))
    if extra:
        data = deep_merge(data, extra)
    try:
        cfg = RunConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigurationError(f"invalid configuration: {exc}") from exc
    logger.debug("Run config: %s", cfg.model_dump_json())
    return cfg


# ---------------------------------------------------------------------------
# Environment
# ---------------------------------------------------------------------------


def log_level_from_env(default: str = "INFO") -> str:
    return os.environ.get(LOG_LEVEL_ENV, default).upper()


def workers_from_env() -> int | None:
    raw = os.environ.get(WORKERS_ENV)
    if raw is None or not raw.strip():
        return None
    try:
        workers = int(raw)
    except ValueError as exc:
        raise ConfigurationError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from exc
    if workers < 1:
        raise ConfigurationError(f"{WORKERS_ENV} must be >= 1, got {workers}")
    return workers
