"""Report files under an output directory and the manifest that hashes them.

Nothing written here carries a timestamp, so identical runs give identical bytes.
"""

import csv
import hashlib
import json
import logging
from pathlib import Path

import numpy as np

from ultraparabolic.grid import GridFunction, save_grid
from ultraparabolic.harness import CheckReport

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"
REPORT_COLUMNS = ["check", "case", "geometry", "p", "lambda", "lhs", "rhs", "ratio", "verdict"]


class ArtifactWriter:
    """Collects every file written under one output directory."""

    def __init__(self, root: Path | str) -> None:
        self.root = Path(root)
        self.written: list[Path] = []

    def path(self, name: str) -> Path:
        target = self.root / name
        target.parent.mkdir(parents=True, exist_ok=True)
        return target

    def json(self, name: str, payload) -> Path:
        target = self.path(name)
        target.write_text(json.dumps(_plain(payload), indent=2, sort_keys=True) + "\n")
        return self._record(target)

    def csv(self, name: str, columns: list[str], rows: list[dict]) -> Path:
        target = self.path(name)
        with target.open("w", newline="") as handle:
            writer = csv.DictWriter(handle, fieldnames=columns, extrasaction="ignore")
            writer.writeheader()
            for row in rows:
                writer.writerow({key: _cell(row.get(key)) for key in columns})
        return self._record(target)

    def grid(self, name: str, u: GridFunction) -> Path:
        return self._record(save_grid(u, self.path(name)))

    def reports(self, reports: list[CheckReport], config: dict, prefix: str = "") -> None:
        """Per-report JSON with the embedded config, the aggregate CSV and decay ladders."""
        for report in reports:
            self.json(f"{prefix}reports/{report_stem(report)}.json", {
                "config": config,
                "report": report.to_dict(),
            })
        self.csv(f"{prefix}reports.csv", REPORT_COLUMNS, [summary_row(r) for r in reports])
        for report in reports:
            ladder = report.details.get("ladder")
            if ladder:
                self.csv(
                    f"{prefix}ladders/{report_stem(report)}.csv", ["estimate", "rho", "lhs"], ladder
                )

    def manifest(self) -> Path:
        """manifest.json listing every written file with its sha256."""
        entries = {
            str(path.relative_to(self.root)): file_digest(path)
            for path in sorted(set(self.written))
        }
        target = self.path(MANIFEST_NAME)
        target.write_text(json.dumps({"files": entries}, indent=2, sort_keys=True) + "\n")
        logger.info("Wrote %d artifacts to %s", len(entries), self.root)
        return target

    def _record(self, path: Path) -> Path:
        self.written.append(path)
        logger.debug("Wrote %s", path)
        return path


def file_digest(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def report_stem(report: CheckReport) -> str:
    """File stem built from case, check and parameter values."""
    parts = [report.case, report.check]
    for key in sorted(report.parameters):
        value = report.parameters[key]
        if isinstance(value, list):
            value = "-".join(f"{v:g}" for v in value)
        elif isinstance(value, float):
            value = f"{value:g}"
        parts.append(f"{key}{value}")
    return "_".join(parts)


def summary_row(report: CheckReport) -> dict:
    """One row of the aggregate CSV."""
    geometry = report.geometry
    if "R" in geometry:
        geometry_text = f"R={geometry['R']:.6g} rho={geometry['rho']:.6g}"
    else:
        geometry_text = json.dumps(_plain(geometry), sort_keys=True)
    return {
        "check": report.check,
        "case": report.case,
        "geometry": geometry_text,
        "p": report.parameters.get("p"),
        "lambda": report.parameters.get("lambda"),
        "lhs": report.lhs,
        "rhs": report.rhs,
        "ratio": report.ratio,
        "verdict": report.verdict,
    }


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, list):
        return " ".join(_cell(v) for v in value)
    return str(value)


def _plain(value):
    """Convert numpy scalars and arrays to JSON types."""
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, list | tuple):
        return [_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    return value
