"""Ultraparabolic - numerical experiments for Kolmogorov-type operators."""

from ultraparabolic.cli import main, run

__all__ = ["main", "run"]
__version__ = "0.1.0"
