"""Tests for Args dataclass."""

from pathlib import Path

from ultraparabolic.args import COMMANDS, Args


class TestArgsDataclass:
    """Test the Args dataclass."""

    def test_args_has_expected_fields(self):
        """Args dataclass has all expected fields."""
        args = Args(
            command="verify",
            config_path=Path("run.json"),
            out=Path("out"),
            threads=4,
            verbose=True,
        )

        assert args.command == "verify"
        assert args.config_path == Path("run.json")
        assert args.out == Path("out")
        assert args.threads == 4
        assert args.verbose is True

    def test_args_defaults(self):
        """Args has sensible defaults."""
        args = Args(command="solve", config_path=Path("run.json"))

        assert args.out is None
        assert args.threads == 1
        assert args.verbose is False

    def test_output_dir_uses_configured_directory(self):
        """Without --out the configured directory holds one folder per command."""
        args = Args(command="kernel-eval", config_path=Path("run.json"))

        assert args.output_dir(Path("runs")) == Path("runs/kernel-eval")

    def test_output_dir_prefers_out(self):
        """--out overrides the configured directory."""
        args = Args(command="sweep", config_path=Path("run.json"), out=Path("/tmp/x"))

        assert args.output_dir(Path("runs")) == Path("/tmp/x/sweep")

    def test_writes_reports(self):
        """Only verify and sweep run the inequality harness."""
        reporting = {c for c in COMMANDS if Args(command=c, config_path=Path()).writes_reports}

        assert reporting == {"verify", "sweep"}
