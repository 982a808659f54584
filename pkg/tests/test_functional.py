"""Functional tests for ultraparabolic end-to-end behavior."""

import json

import pytest
from click.testing import CliRunner

from ultraparabolic.cli import main

PROTOTYPE = {"blocks": [1, 1], "B_blocks": [[[1.0]]], "A0": [[1.0]], "Lambda": 2.0}


@pytest.fixture
def runner():
    """Create a Click CLI test runner."""
    return CliRunner()


@pytest.fixture
def config_file(tmp_path):
    """Prototype run with zero data, small grids and one check."""
    path = tmp_path / "run.json"
    path.write_text(
        json.dumps(
            {
                "structure": PROTOTYPE,
                "grid": {"cells": [8, 8, 8]},
                "source": {"preset": "zero"},
                "flux": {"preset": "zero"},
                "checks": [{"name": "caccioppoli"}],
                "kernel": {"paths": 4000, "steps": 50, "times": [1.0]},
                "problem": {"exact": "caloric-shear"},
            }
        )
    )
    return path


class TestStructureInfo:
    """Test the structure-info command."""

    def test_prototype_dimensions(self, runner, config_file, tmp_path):
        """The prototype reports Q = 4 and doubling constant 64."""
        result = runner.invoke(
            main, ["structure-info", "--config", str(config_file), "--out", str(tmp_path / "o")]
        )

        assert result.exit_code == 0
        assert "Q = 4, Q + 2 = 6" in result.output
        info = json.loads((tmp_path / "o/structure-info/structure.json").read_text())
        assert info["structure"]["doubling_constant"] == 64.0
        assert info["structure"]["alpha"] == [1.0, 3.0]

    def test_three_block_structure(self, runner, tmp_path):
        """Blocks (2, 1, 1) report Q = 10."""
        path = tmp_path / "run.json"
        structure = {
            "blocks": [2, 1, 1],
            "B_blocks": [[[1.0], [0.0]], [[1.0]]],
            "A0": [[1.0, 0.0], [0.0, 1.0]],
            "Lambda": 2.0,
        }
        path.write_text(json.dumps({"structure": structure}))

        result = runner.invoke(
            main, ["structure-info", "--config", str(path), "--out", str(tmp_path / "o")]
        )

        assert result.exit_code == 0
        assert "Q = 10, Q + 2 = 12" in result.output


class TestVerify:
    """Test the verify command end to end."""

    def test_reports_and_manifest(self, runner, config_file, tmp_path):
        """verify writes per-report JSON and the summary CSV into a manifest."""
        out = tmp_path / "o"

        result = runner.invoke(main, ["verify", "--config", str(config_file), "--out", str(out)])

        assert result.exit_code in (0, 4)
        manifest = json.loads((out / "verify/manifest.json").read_text())["files"]
        assert "reports.csv" in manifest
        assert "caloric-quadratic_caccioppoli.json" in {n.split("/")[-1] for n in manifest}

    def test_identical_runs_give_identical_hashes(self, runner, config_file, tmp_path):
        """Two runs of the same configuration produce byte-identical artifacts."""
        first, second = tmp_path / "a", tmp_path / "b"

        runner.invoke(main, ["verify", "--config", str(config_file), "--out", str(first)])
        runner.invoke(main, ["verify", "--config", str(config_file), "--out", str(second)])

        assert (first / "verify/manifest.json").read_text() == (
            second / "verify/manifest.json"
        ).read_text()


class TestSolve:
    """Test the solve command end to end."""

    def test_exact_solution_error(self, runner, config_file, tmp_path):
        """Solving the shear problem reports a round-off sized error."""
        out = tmp_path / "o"

        result = runner.invoke(main, ["solve", "--config", str(config_file), "--out", str(out)])

        assert result.exit_code == 0
        summary = json.loads((out / "solve/solve.json").read_text())["summary"]
        assert summary["max_error"] < 1e-9
        assert "Max error against caloric-shear" in result.output


class TestKernelCheck:
    """Test the kernel-check command end to end."""

    def test_prototype_checks(self, runner, config_file, tmp_path):
        """Mass, homogeneity and Monte Carlo moments are recorded."""
        out = tmp_path / "o"

        result = runner.invoke(
            main, ["kernel-check", "--config", str(config_file), "--out", str(out)]
        )

        assert result.exit_code == 0
        checks = json.loads((out / "kernel-check/kernel_check.json").read_text())["checks"]
        assert checks["mass"]["1"] == pytest.approx(1.0, abs=1e-6)
        assert max(checks["homogeneity"]["2"]) <= 1e-8
        assert checks["moments"]["passed"] in (True, False)
        assert set(checks["young"]) == {"plain", "d0_of_argument"}
