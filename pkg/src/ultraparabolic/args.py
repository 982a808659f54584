"""Command-line arguments for ultraparabolic."""

from dataclasses import dataclass
from pathlib import Path

COMMANDS = ("structure-info", "kernel-eval", "kernel-check", "solve", "verify", "sweep")


@dataclass
class Args:
    """Parsed command-line arguments."""

    command: str
    config_path: Path
    out: Path | None = None
    threads: int = 1
    verbose: bool = False

    @property
    def writes_reports(self) -> bool:
        """Whether the command runs the inequality harness."""
        return self.command in ("verify", "sweep")

    def output_dir(self, configured: Path) -> Path:
        """Directory for this command's artifacts: --out, else the configured one per command."""
        base = self.out if self.out is not None else configured
        return Path(base) / self.command
