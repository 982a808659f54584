"""Tests for the main CLI entry point."""

import json
import logging
import sys
from pathlib import Path

import pytest
from click.testing import CliRunner

from ultraparabolic.args import Args
from ultraparabolic.cli import configure_logging, main, run
from ultraparabolic.errors import ConfigError, NumericalError

PROTOTYPE = {"blocks": [1, 1], "B_blocks": [[[1.0]]], "A0": [[1.0]], "Lambda": 2.0}


@pytest.fixture
def config_file(tmp_path):
    """A small prototype configuration on disk."""
    path = tmp_path / "run.json"
    path.write_text(
        json.dumps(
            {
                "structure": PROTOTYPE,
                "grid": {"cells": [8, 8, 8]},
                "kernel": {"points": [{"z": [0.0, 0.0, 1.0]}], "paths": 2000, "steps": 20},
                "output": str(tmp_path / "runs"),
            }
        )
    )
    return path


class TestRun:
    """Test command dispatch."""

    def test_dispatches_structure_info(self, config_file, mocker):
        """structure-info calls its command function with the loaded config."""
        mock_info = mocker.patch("ultraparabolic.cli.structure_info")

        run(Args(command="structure-info", config_path=config_file))

        config, writer = mock_info.call_args[0]
        assert config.structure.Q == 4
        assert writer.root == config_file.parent / "runs" / "structure-info"

    def test_verify_uses_two_levels(self, config_file, mocker):
        """verify compares the base grid with one refinement."""
        mock_verify = mocker.patch("ultraparabolic.cli.verify", return_value=True)

        run(Args(command="verify", config_path=config_file, threads=2))

        assert mock_verify.call_args[0][2] == 2
        assert mock_verify.call_args[0][3] == range(2)

    def test_sweep_adds_convergence(self, config_file, mocker):
        """sweep runs the harness over every level and the convergence table."""
        mocker.patch("ultraparabolic.cli.verify", return_value=True)
        mock_convergence = mocker.patch("ultraparabolic.cli.convergence")

        run(Args(command="sweep", config_path=config_file))

        mock_convergence.assert_called_once()

    def test_failed_checks_raise(self, config_file, mocker):
        """Failed reports turn into a numerical error after the artifacts are written."""
        mocker.patch("ultraparabolic.cli.verify", return_value=False)

        with pytest.raises(NumericalError):
            run(Args(command="verify", config_path=config_file))

    def test_kernel_eval_writes_points(self, config_file, tmp_path):
        """kernel-eval stores Gamma_0 at every configured pair."""
        run(Args(command="kernel-eval", config_path=config_file, out=tmp_path / "o"))

        payload = json.loads((tmp_path / "o/kernel-eval/kernel_eval.json").read_text())
        assert payload["points"][0]["gamma0"] == pytest.approx(3**0.5 / (2 * 3.141592653589793))
        assert (tmp_path / "o/kernel-eval/manifest.json").exists()

    def test_solve_writes_grid(self, config_file, tmp_path):
        """solve stores the solution grid and a summary."""
        run(Args(command="solve", config_path=config_file, out=tmp_path / "o"))

        assert (tmp_path / "o/solve/solution.grid").exists()
        summary = json.loads((tmp_path / "o/solve/solve.json").read_text())["summary"]
        assert summary["cells"] == [8, 8, 8]


class TestMain:
    """Test click CLI argument parsing and exit codes."""

    @pytest.fixture
    def runner(self):
        """Create a Click CLI test runner."""
        return CliRunner()

    def test_arguments_reach_run(self, runner, mocker, config_file):
        """Options are collected into Args."""
        mock_run = mocker.patch("ultraparabolic.cli.run")

        result = runner.invoke(
            main, ["solve", "--config", str(config_file), "--threads", "3", "-v", "--out", "o"]
        )

        assert result.exit_code == 0
        args = mock_run.call_args[0][0]
        assert args.command == "solve"
        assert args.threads == 3
        assert args.verbose is True
        assert args.out == Path("o")

    def test_config_required(self, runner):
        """--config is mandatory."""
        result = runner.invoke(main, ["verify"])
        assert result.exit_code == 2

    def test_unknown_command(self, runner, config_file):
        """Only the documented commands are accepted."""
        result = runner.invoke(main, ["plot", "--config", str(config_file)])
        assert result.exit_code == 2

    def test_threads_must_be_positive(self, runner, config_file):
        """--threads has a lower bound of one."""
        result = runner.invoke(main, ["verify", "--config", str(config_file), "--threads", "0"])
        assert result.exit_code == 2

    def test_missing_config_file(self, runner, tmp_path):
        """An unreadable configuration exits with status 2."""
        result = runner.invoke(main, ["verify", "--config", str(tmp_path / "none.json")])

        assert result.exit_code == 2
        assert "ERROR: Cannot read config" in result.output

    def test_unknown_check_exit_code(self, runner, tmp_path):
        """Unknown check names exit with status 3."""
        path = tmp_path / "run.json"
        path.write_text(json.dumps({"structure": PROTOTYPE, "checks": [{"name": "harnack"}]}))

        result = runner.invoke(main, ["verify", "--config", str(path)])

        assert result.exit_code == 3
        assert "Unknown check 'harnack'" in result.output

    @pytest.mark.parametrize(
        "override",
        [
            {"coefficient": "constant"},
            {"grid": {"cells": ["a", 8, 8]}},
            {"levels": "two"},
            {"checks": ["caccioppoli"]},
            {"structure": {**PROTOTYPE, "blocks": [1, 2], "B_blocks": [[[1.0, 0.0]]]}},
            {"structure": {**PROTOTYPE, "A0": [[0.1]]}},
            {"solver": {"cfl_safety": 2.0}},
            {"coefficient": {"preset": "constant", "params": {"colour": 1}}},
        ],
    )
    def test_malformed_config_exit_code(self, runner, tmp_path, override):
        """Malformed sections exit with status 2 and an ERROR line, never a traceback."""
        path = tmp_path / "run.json"
        path.write_text(json.dumps({"structure": PROTOTYPE, **override}))

        result = runner.invoke(main, ["structure-info", "--config", str(path)])

        assert result.exit_code == 2
        assert "ERROR: Invalid configuration" in result.output
        assert not isinstance(result.exception, AttributeError | TypeError | ValueError)

    def test_numerical_error_exit_code(self, mocker):
        """Numerical failures exit with status 4 and an ERROR line on stderr."""
        mocker.patch("ultraparabolic.cli.run", side_effect=NumericalError("diverged"))
        mocker.patch("ultraparabolic.cli.configure_logging")
        mock_print = mocker.patch("builtins.print")

        with pytest.raises(SystemExit) as exc_info:
            main.callback("solve", Path("run.json"), None, 1, False)

        assert exc_info.value.code == 4
        mock_print.assert_any_call("ERROR: diverged", file=sys.stderr)

    def test_config_error_exit_code(self, mocker):
        """Configuration errors exit with status 2."""
        mocker.patch("ultraparabolic.cli.run", side_effect=ConfigError("bad grid"))
        mocker.patch("ultraparabolic.cli.configure_logging")
        mocker.patch("builtins.print")

        with pytest.raises(SystemExit) as exc_info:
            main.callback("solve", Path("run.json"), None, 1, False)

        assert exc_info.value.code == 2


class TestConfigureLogging:
    """Test logger levels."""

    def test_verbose_enables_debug(self):
        """--verbose sets the package logger to DEBUG."""
        configure_logging(True)
        assert logging.getLogger("ultraparabolic").level == logging.DEBUG

        configure_logging(False)
        assert logging.getLogger("ultraparabolic").level == logging.INFO
