"""Tests for run configuration loading and validation."""

import json

import pytest

from ultraparabolic.config import (
    DEFAULT_KERNEL,
    config_from_dict,
    load_config,
    resolved,
    validate_config,
)
from ultraparabolic.errors import ConfigError, ConfigParseError, UnknownCheck

PROTOTYPE = {"blocks": [1, 1], "B_blocks": [[[1.0]]], "A0": [[1.0]], "Lambda": 2.0}


@pytest.fixture
def raw():
    """A minimal valid configuration."""
    return {"structure": PROTOTYPE}


class TestValidateConfig:
    """Test validation messages."""

    def test_minimal_config_is_valid(self, raw):
        """A structure alone is enough."""
        assert validate_config(raw) == (True, [])

    def test_structure_required(self):
        """Configurations without a structure are invalid."""
        valid, errors = validate_config({})
        assert not valid
        assert errors == ["'structure' is required"]

    def test_missing_structure_keys(self):
        """Every structure key is required."""
        valid, errors = validate_config({"structure": {"blocks": [1, 1]}})
        assert not valid
        assert "B_blocks" in errors[0]
        assert "Lambda" in errors[0]

    def test_unknown_presets(self, raw):
        """Coefficient and data presets must exist."""
        raw["coefficient"] = {"preset": "fractal"}
        raw["flux"] = {"preset": "noise"}

        valid, errors = validate_config(raw)

        assert not valid
        assert "Unknown coefficient preset 'fractal'" in errors
        assert "Unknown flux preset 'noise'" in errors

    def test_cell_count_and_minimum(self, raw):
        """cells needs N + 1 entries of at least 8."""
        raw["grid"] = {"cells": [4, 8]}

        valid, errors = validate_config(raw)

        assert not valid
        assert "'grid.cells' needs 3 entries, got 2" in errors
        assert "Every 'grid.cells' entry must be at least 8" in errors

    def test_box_orientation(self, raw):
        """lower must lie below upper on every axis."""
        raw["grid"] = {"lower": [0.0, 0.0, 1.0], "upper": [1.0, 1.0, 0.0]}
        valid, errors = validate_config(raw)
        assert not valid
        assert errors == ["'grid.lower' must lie below 'grid.upper' on every axis"]

    def test_levels_minimum(self, raw):
        """Refinement verdicts need two levels."""
        raw["levels"] = 1
        assert not validate_config(raw)[0]

    def test_section_types(self, raw):
        """Sections must be objects before any of their keys are read."""
        raw["coefficient"] = "constant"
        raw["solver"] = [0.9]

        valid, errors = validate_config(raw)

        assert not valid
        assert "'coefficient' must be an object, got str" in errors
        assert "'solver' must be an object, got list" in errors

    def test_scalar_types(self, raw):
        """Counts must be integers and cell counts a list of integers."""
        raw.update({"levels": "two", "seed": 1.5, "grid": {"cells": ["a", 8, 8]}})

        errors = validate_config(raw)[1]

        assert "'levels' must be an integer" in errors
        assert "'seed' must be an integer" in errors
        assert "'grid.cells' must be a list of integers" in errors

    def test_checks_must_be_objects(self, raw):
        """A bare check name is not a check entry."""
        raw["checks"] = ["caccioppoli", {"name": "decay", "radii": "five"}]

        errors = validate_config(raw)[1]

        assert "Every check needs a 'name'" in errors
        assert "'radii' of check 'decay' must be an integer" in errors

    def test_residual_tolerance_positive(self, raw):
        """The weak residual tolerance is a positive number."""
        raw["residual_tolerance"] = 0.0
        assert validate_config(raw)[1] == ["'residual_tolerance' must be a positive number"]

    def test_unknown_exact_solution(self, raw):
        """problem.exact must name a known solution."""
        raw["problem"] = {"exact": "heat"}
        assert validate_config(raw)[1] == ["Unknown exact solution 'heat'"]

    def test_unknown_solver_scheme(self, raw):
        """Only the upwind marcher is available."""
        raw["solver"] = {"scheme": "spectral"}
        assert validate_config(raw)[1] == ["Unknown solver scheme 'spectral'"]


class TestConfigFromDict:
    """Test resolution of decoded configurations."""

    def test_defaults(self, raw):
        """Unset sections fall back to the documented defaults."""
        config = config_from_dict(raw)

        assert config.grid_shape == (32, 32, 32)
        assert config.lower == (-1.0, -1.0, 0.0)
        assert config.upper == (1.0, 1.0, 1.0)
        assert config.coefficient == {"preset": "vmo-oscillation"}
        assert config.kernel_settings == DEFAULT_KERNEL
        assert config.levels == 2

    def test_refined_cells(self, raw):
        """Every level doubles every cell count."""
        raw["grid"] = {"cells": [8, 8, 16]}
        assert config_from_dict(raw).cells_at(2) == (32, 32, 64)

    def test_unknown_check(self, raw):
        """Unknown check names have their own error."""
        raw["checks"] = [{"name": "harnack"}]
        with pytest.raises(UnknownCheck) as exc_info:
            config_from_dict(raw)
        assert exc_info.value.exit_code == 3

    def test_invalid_config(self):
        """Validation failures raise ConfigError listing every problem."""
        with pytest.raises(ConfigError) as exc_info:
            config_from_dict({"levels": 1})
        assert "'structure' is required" in str(exc_info.value)
        assert exc_info.value.exit_code == 2

    def test_structure_errors_are_config_errors(self, raw):
        """Increasing block ranks are a configuration error, not a numerical one."""
        raw["structure"] = {**PROTOTYPE, "blocks": [1, 2], "B_blocks": [[[1.0, 0.0]]]}

        with pytest.raises(ConfigError) as exc_info:
            config_from_dict(raw)

        assert exc_info.value.exit_code == 2
        assert "exceeds" in str(exc_info.value)

    def test_bad_preset_params(self, raw):
        """Unknown preset parameters are rejected while loading."""
        raw["coefficient"] = {"preset": "sinusoid", "params": {"colour": 1}}
        with pytest.raises(ConfigError):
            config_from_dict(raw)

    def test_residual_tolerance(self, raw):
        """The weak residual tolerance defaults to 0.25 and lands in the resolved config."""
        assert config_from_dict(raw).residual_tolerance == 0.25

        config = config_from_dict({**raw, "residual_tolerance": 0.05})

        assert resolved(config)["residual_tolerance"] == 0.05

    def test_kernel_overrides(self, raw):
        """Kernel settings merge over the defaults."""
        raw["kernel"] = {"paths": 100}
        settings = config_from_dict(raw).kernel_settings
        assert settings["paths"] == 100
        assert settings["steps"] == DEFAULT_KERNEL["steps"]

    def test_resolved_excludes_output(self, raw):
        """The embedded configuration does not depend on the output directory."""
        first = resolved(config_from_dict({**raw, "output": "a"}))
        second = resolved(config_from_dict({**raw, "output": "b"}))
        assert first == second
        assert "output" not in first
        assert first["grid"]["cells"] == [32, 32, 32]


class TestLoadConfig:
    """Test reading configuration files."""

    def test_round_trip(self, raw, tmp_path):
        """A JSON file on disk resolves to a RunConfig."""
        path = tmp_path / "run.json"
        path.write_text(json.dumps(raw))

        config = load_config(path)

        assert config.structure.Q == 4

    def test_missing_file(self, tmp_path):
        """Missing files are parse errors."""
        with pytest.raises(ConfigParseError):
            load_config(tmp_path / "missing.json")

    def test_malformed_json(self, tmp_path):
        """Malformed JSON is a parse error."""
        path = tmp_path / "run.json"
        path.write_text("{structure: ")
        with pytest.raises(ConfigParseError):
            load_config(path)

    def test_non_object(self, tmp_path):
        """The top level must be an object."""
        path = tmp_path / "run.json"
        path.write_text("[1, 2]")
        with pytest.raises(ConfigParseError):
            load_config(path)
