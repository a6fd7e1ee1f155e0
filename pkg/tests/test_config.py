"""Flat key = value config document: schema, parsing, strict rejection."""

import dataclasses

import pytest

from tnn.config import (
    RunConfig,
    apply_overrides,
    config_schema,
    load_config,
    model_config_dict,
    parse_config_text,
    serialize_config,
    validate_config,
)
from tnn.errors import ConfigError


class TestParsing:
    def test_defaults_round_trip(self):
        assert parse_config_text(serialize_config(RunConfig())) == RunConfig()

    def test_types_and_comments(self):
        text = """
        # model size
        dim = 32          # inline comment
        peak_lr = 2.5e-4
        causal = false
        norm = rmsnorm
        """
        cfg = parse_config_text(text)
        assert cfg.dim == 32
        assert cfg.peak_lr == 2.5e-4
        assert cfg.causal is False
        assert cfg.norm == "rmsnorm"

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError, match="unknown key"):
            parse_config_text("dimm = 32\n")

    def test_duplicate_key_rejected(self):
        with pytest.raises(ConfigError, match="duplicate"):
            parse_config_text("dim = 32\ndim = 64\n")

    def test_malformed_line_rejected(self):
        with pytest.raises(ConfigError, match="key = value"):
            parse_config_text("just some words\n")

    def test_bad_int_and_bool(self):
        with pytest.raises(ConfigError, match="expected int"):
            parse_config_text("dim = large\n")
        with pytest.raises(ConfigError, match="true/false"):
            parse_config_text("causal = maybe\n")

    def test_line_numbers_in_errors(self):
        with pytest.raises(ConfigError, match=":3:"):
            parse_config_text("dim = 32\n\nwat = 1\n")

    def test_load_from_file(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("steps = 5\nseed = 99\n")
        cfg = load_config(str(path))
        assert (cfg.steps, cfg.seed) == (5, 99)


class TestValidation:
    def test_choice_fields_enforced(self):
        with pytest.raises(ConfigError, match="precision"):
            validate_config(RunConfig(precision="f16"))
        with pytest.raises(ConfigError, match="norm"):
            validate_config(RunConfig(norm="batchnorm"))

    def test_positive_and_range_checks(self):
        with pytest.raises(ConfigError):
            validate_config(RunConfig(dim=0))
        with pytest.raises(ConfigError):
            validate_config(RunConfig(decay=1.5))
        with pytest.raises(ConfigError):
            validate_config(RunConfig(seq_len=1))
        with pytest.raises(ConfigError):
            validate_config(RunConfig(val_fraction=0.0))

    def test_zero_steps_allowed(self):
        assert validate_config(RunConfig(steps=0)).steps == 0


class TestSchemaAndOverrides:
    def test_schema_covers_every_field(self):
        schema = config_schema()
        names = {f.name for f in dataclasses.fields(RunConfig)}
        assert set(schema) == names
        for entry in schema.values():
            assert entry["help"]
            assert entry["type"] in ("int", "float", "bool", "str")

    def test_overrides_beat_file_values(self):
        cfg = apply_overrides(RunConfig(seed=1), seed=42, precision="f32")
        assert (cfg.seed, cfg.precision) == (42, "f32")

    def test_none_overrides_ignored(self):
        cfg = apply_overrides(RunConfig(seed=1), seed=None)
        assert cfg.seed == 1

    def test_unknown_override_rejected(self):
        with pytest.raises(ConfigError):
            apply_overrides(RunConfig(), nope=3)

    def test_model_projection_matches_model_schema(self):
        from tnn.model import ModelConfig

        cfg = ModelConfig.from_dict(model_config_dict(RunConfig(), vocab_size=256))
        assert cfg.vocab_size == 256
        assert cfg.dim == RunConfig().dim
