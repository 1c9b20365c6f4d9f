"""Tests for run configuration layering and bundled presets."""

import pytest

from seglat.config import (
    LOG_LEVEL_ENV,
    WORKERS_ENV,
    RunConfig,
    build_run_config,
    format_config,
    log_level_from_env,
    parse_config_text,
    parse_overrides,
    workers_from_env,
)
from seglat.errors import ConfigurationError, DataError
from seglat.presets import get_preset, list_presets


class TestParsing:
    def test_nested_keys_and_json_values(self) -> None:
        text = """
        # comment line
        representation = wave
        segments = 8          # trailing comment
        model.latent_dim = 64
        tokenizer.f_max = [32, 32]
        stft.log_scale = false
        """
        data = parse_config_text(text)
        assert data == {
            "representation": "wave",
            "segments": 8,
            "model": {"latent_dim": 64},
            "tokenizer": {"f_max": [32, 32]},
            "stft": {"log_scale": False},
        }

    def test_hash_inside_values_is_kept(self) -> None:
        text = 'train.run_name = "sweep #3"  # quoted\ndata_dir = runs/#1\nnote = "a \\" # b"\n'
        data = parse_config_text(text)
        assert data["train"] == {"run_name": "sweep #3"}
        assert data["data_dir"] == "runs/#1"
        assert data["note"] == 'a " # b'

    def test_line_without_equals_names_line(self) -> None:
        with pytest.raises(ConfigurationError, match="cfg.txt:2"):
            parse_config_text("segments = 4\nnonsense\n", "cfg.txt")

    def test_scalar_cannot_become_section(self) -> None:
        with pytest.raises(ConfigurationError):
            parse_overrides(["model=1", "model.depth=2"])

    def test_malformed_override(self) -> None:
        with pytest.raises(ConfigurationError):
            parse_overrides(["segments"])


class TestBuildRunConfig:
    def test_defaults(self) -> None:
        cfg = build_run_config()
        assert cfg.representation == "psd"
        assert cfg.segments == 32
        assert cfg.model.latent_dim == 128
        assert cfg.train.base_lr == 2e-5

    def test_precedence(self, tmp_path) -> None:
        path = tmp_path / "run.cfg"
        path.write_text("segments = 4\nmodel.depth = 2\nseed = 5\n", encoding="utf-8")
        cfg = build_run_config(
            preset={"segments": 16, "model": {"depth": 3, "latent_dim": 32}},
            config_file=path,
            overrides=["model.depth=1"],
            extra={"seed": 9},
        )
        assert cfg.segments == 4
        assert cfg.model.depth == 1
        assert cfg.model.latent_dim == 32
        assert cfg.seed == 9
        assert cfg.train.seed == 9

    def test_unknown_key_rejected(self) -> None:
        with pytest.raises(ConfigurationError, match="unknown_knob"):
            build_run_config(overrides=["model.unknown_knob=1"])

    def test_invalid_value_rejected(self) -> None:
        with pytest.raises(ConfigurationError):
            build_run_config(overrides=["segments=0"])

    def test_missing_file(self, tmp_path) -> None:
        with pytest.raises(ConfigurationError):
            build_run_config(config_file=tmp_path / "absent.cfg")

    def test_f_max_count_per_representation(self) -> None:
        with pytest.raises(ConfigurationError):
            build_run_config(overrides=["representation=wave", "tokenizer.f_max=[8, 8]"])

    def test_format_round_trip(self) -> None:
        cfg = build_run_config(overrides=["representation=stack", "model.num_latents=16"])
        assert RunConfig.model_validate(parse_config_text(format_config(cfg))) == cfg

    def test_workers_from_environment(self, monkeypatch) -> None:
        monkeypatch.setenv(WORKERS_ENV, "3")
        assert build_run_config().workers == 3
        assert build_run_config(overrides=["workers=2"]).workers == 2

    def test_bad_workers_environment(self, monkeypatch) -> None:
        monkeypatch.setenv(WORKERS_ENV, "many")
        with pytest.raises(ConfigurationError):
            workers_from_env()

    def test_log_level_environment(self, monkeypatch) -> None:
        monkeypatch.delenv(LOG_LEVEL_ENV, raising=False)
        assert log_level_from_env() == "INFO"
        monkeypatch.setenv(LOG_LEVEL_ENV, "debug")
        assert log_level_from_env() == "DEBUG"


class TestInputShapes:
    def test_expected_shapes(self) -> None:
        assert RunConfig(representation="wave").expected_shape(24, 512) == (512, 24)
        assert RunConfig(image_size=32).expected_shape(24, 512) == (32, 32, 24)
        stack = RunConfig(representation="stack", image_size=32)
        assert stack.expected_shape(24, 512) == (32, 32, 48)
        grid = RunConfig(representation="stack", image_size=32, wave_layout="grid")
        assert grid.expected_shape(24, 512) == (32, 32, 25)

    def test_check_input(self) -> None:
        RunConfig(image_size=32).check_input((32, 32, 24))
        with pytest.raises(DataError):
            RunConfig(image_size=32).check_input((64, 64, 24))
        with pytest.raises(DataError):
            RunConfig(representation="wave").check_input((4, 4, 2))

    def test_baseline_uses_one_segment(self) -> None:
        cfg = build_run_config(overrides=["model.num_latents=32", "segments=8"])
        assert cfg.effective_segments == 1


class TestPresets:
    @pytest.mark.parametrize("name", list_presets())
    def test_every_preset_validates(self, name) -> None:
        build_run_config(preset=get_preset(name).config)

    def test_sweep_preset(self) -> None:
        sweep = get_preset("segment-sweep").sweep
        assert sweep is not None
        assert sweep.segments == [None, 2, 4, 8, 16, 32, 64]
        assert sweep.representations == ["wave", "psd"]

    def test_get_returns_copy(self) -> None:
        get_preset("defaults").config["segments"] = -1
        assert get_preset("defaults").config.get("segments") != -1

    def test_unknown_preset(self) -> None:
        with pytest.raises(ConfigurationError, match="available"):
            get_preset("nope")
