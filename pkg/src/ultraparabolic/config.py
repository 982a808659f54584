"""Run configuration: one JSON file describing a complete experiment."""

import json
import logging
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

from ultraparabolic.errors import ConfigError, ConfigParseError, NumericalError, UnknownCheck
from ultraparabolic.grid import AxisBox
from ultraparabolic.harness import CHECKS, RESIDUAL_TOLERANCE
from ultraparabolic.presets import (
    COEFFICIENT_PRESETS,
    EXACT_SOLUTIONS,
    SOURCE_PRESETS,
    build_coefficient,
    build_flux,
    build_source,
)
from ultraparabolic.solver import SCHEMES, SolverConfig
from ultraparabolic.structure import KolmogorovStructure, build_structure

logger = logging.getLogger(__name__)

MIN_CELLS = 8
DEFAULT_OUTPUT = "runs"
DEFAULT_KERNEL = {
    "points": [],
    "times": [0.25, 1.0, 4.0],
    "start": None,
    "horizon": 1.0,
    "paths": 10_000,
    "steps": 200,
}
OBJECT_SECTIONS = ("coefficient", "source", "flux", "grid", "solver", "kernel", "problem")
SOLVER_KEYS = ("dt", "cfl_safety", "scheme", "tolerance")


@dataclass
class RunConfig:
    """Resolved run configuration."""

    structure_spec: dict
    coefficient: dict = field(default_factory=lambda: {"preset": "vmo-oscillation"})
    source: dict = field(default_factory=lambda: {"preset": "bump"})
    flux: dict = field(default_factory=lambda: {"preset": "bump"})
    grid: dict = field(default_factory=dict)
    solver: dict = field(default_factory=dict)
    checks: list[dict] = field(default_factory=list)
    kernel: dict = field(default_factory=dict)
    problem: dict = field(default_factory=dict)
    probe_gains: list[float] = field(default_factory=lambda: [0.1, 0.2])
    mu: float | None = None
    seed: int = 0
    levels: int = 2
    residual_tolerance: float = RESIDUAL_TOLERANCE
    output: str = DEFAULT_OUTPUT
    raw: dict = field(default_factory=dict)

    @cached_property
    def structure(self) -> KolmogorovStructure:
        spec = self.structure_spec
        return build_structure(spec["blocks"], spec["B_blocks"], spec["A0"], spec["Lambda"])

    @property
    def grid_shape(self) -> tuple[int, ...]:
        cells = self.grid.get("cells") or [32] * (self.structure.N + 1)
        return tuple(int(n) for n in cells)

    @property
    def lower(self) -> tuple[float, ...]:
        lower = self.grid.get("lower") or [-1.0] * self.structure.N + [0.0]
        return tuple(float(v) for v in lower)

    @property
    def upper(self) -> tuple[float, ...]:
        return tuple(float(v) for v in (self.grid.get("upper") or [1.0] * (self.structure.N + 1)))

    @property
    def box(self) -> AxisBox:
        return AxisBox(self.lower, self.upper)

    @property
    def output_path(self) -> Path:
        return Path(self.output)

    @property
    def solver_config(self) -> SolverConfig:
        return SolverConfig(**self.solver)

    @property
    def kernel_settings(self) -> dict:
        return {**DEFAULT_KERNEL, **self.kernel}

    def cells_at(self, level: int) -> tuple[int, ...]:
        """Grid shape refined by a factor 2 per level."""
        return tuple(n * 2**level for n in self.grid_shape)


def _is_int(value) -> bool:
    return isinstance(value, int) and not isinstance(value, bool)


def _is_number(value) -> bool:
    return isinstance(value, int | float) and not isinstance(value, bool)


def _numbers(value, integers: bool = False) -> bool:
    """True for a list whose entries are all numbers (or all integers)."""
    test = _is_int if integers else _is_number
    return isinstance(value, list) and all(test(v) for v in value)


def validate_config(raw: dict) -> tuple[bool, list[str]]:
    """Validate a decoded configuration.

    Every value is type-checked before use, so a malformed file yields messages here
    rather than an exception further down.

    Args:
        raw: Decoded JSON object.

    Returns:
        Tuple of (valid, list of error messages).
    """
    errors = []
    structure = raw.get("structure")
    n_axes = None
    if not isinstance(structure, dict):
        errors.append("'structure' is required")
    else:
        missing = [key for key in ("blocks", "B_blocks", "A0", "Lambda") if key not in structure]
        if missing:
            errors.append(f"'structure' is missing {', '.join(missing)}")
        elif not _numbers(structure["blocks"], integers=True) or not structure["blocks"]:
            errors.append("'structure.blocks' must be a non-empty list of integers")
        else:
            n_axes = sum(structure["blocks"]) + 1
            if not isinstance(structure["B_blocks"], list):
                errors.append("'structure.B_blocks' must be a list of matrices")
            if not _is_number(structure["Lambda"]):
                errors.append("'structure.Lambda' must be a number")

    sections = {}
    for key in OBJECT_SECTIONS:
        value = raw.get(key, {})
        if isinstance(value, dict):
            sections[key] = value
        else:
            errors.append(f"'{key}' must be an object, got {type(value).__name__}")
            sections[key] = {}

    for key, presets in (
        ("coefficient", COEFFICIENT_PRESETS),
        ("source", SOURCE_PRESETS),
        ("flux", SOURCE_PRESETS),
    ):
        entry = sections[key]
        if key in raw and isinstance(raw[key], dict) and entry.get("preset") not in presets:
            errors.append(f"Unknown {key} preset '{entry.get('preset')}'")
        if not isinstance(entry.get("params", {}), dict):
            errors.append(f"'{key}.params' must be an object")

    grid = sections["grid"]
    cells = grid.get("cells")
    if cells is not None:
        if not _numbers(cells, integers=True):
            errors.append("'grid.cells' must be a list of integers")
        else:
            if n_axes is not None and len(cells) != n_axes:
                errors.append(f"'grid.cells' needs {n_axes} entries, got {len(cells)}")
            if any(n < MIN_CELLS for n in cells):
                errors.append(f"Every 'grid.cells' entry must be at least {MIN_CELLS}")
    for key in ("lower", "upper"):
        if key not in grid:
            continue
        if not _numbers(grid[key]):
            errors.append(f"'grid.{key}' must be a list of numbers")
        elif n_axes is not None and len(grid[key]) != n_axes:
            errors.append(f"'grid.{key}' needs {n_axes} entries")
    if (
        _numbers(grid.get("lower"))
        and _numbers(grid.get("upper"))
        and any(lo >= hi for lo, hi in zip(grid["lower"], grid["upper"], strict=False))
    ):
        errors.append("'grid.lower' must lie below 'grid.upper' on every axis")

    solver = sections["solver"]
    unknown = sorted(set(solver) - set(SOLVER_KEYS))
    if unknown:
        errors.append(f"Unknown solver settings {unknown}")
    if solver.get("scheme", "upwind") not in SCHEMES:
        errors.append(f"Unknown solver scheme '{solver.get('scheme')}'")
    for key in ("dt", "cfl_safety", "tolerance"):
        if solver.get(key) is not None and not _is_number(solver[key]):
            errors.append(f"'solver.{key}' must be a number")

    exact = sections["problem"].get("exact")
    if exact is not None and exact not in EXACT_SOLUTIONS:
        errors.append(f"Unknown exact solution '{exact}'")

    kernel = sections["kernel"]
    points = kernel.get("points", [])
    if not isinstance(points, list) or not all(
        isinstance(point, dict) and _numbers(point.get("z")) for point in points
    ):
        errors.append("'kernel.points' must be a list of objects with a numeric 'z'")
    if "times" in kernel and not _numbers(kernel["times"]):
        errors.append("'kernel.times' must be a list of numbers")
    for key in ("paths", "steps"):
        if key in kernel and not _is_int(kernel[key]):
            errors.append(f"'kernel.{key}' must be an integer")

    levels = raw.get("levels", 2)
    if not _is_int(levels):
        errors.append("'levels' must be an integer")
    elif levels < 2:
        errors.append("'levels' must be at least 2 for refinement verdicts")
    if not _is_int(raw.get("seed", 0)):
        errors.append("'seed' must be an integer")
    if not _numbers(raw.get("probe_gains", [])):
        errors.append("'probe_gains' must be a list of numbers")
    if raw.get("mu") is not None and not _is_number(raw["mu"]):
        errors.append("'mu' must be a number")
    tolerance = raw.get("residual_tolerance", RESIDUAL_TOLERANCE)
    if not _is_number(tolerance) or tolerance <= 0:
        errors.append("'residual_tolerance' must be a positive number")
    if not isinstance(raw.get("output", DEFAULT_OUTPUT), str):
        errors.append("'output' must be a string")

    checks = raw.get("checks", [])
    if not isinstance(checks, list):
        errors.append("'checks' must be a list")
        checks = []
    for check in checks:
        if not isinstance(check, dict) or "name" not in check:
            errors.append("Every check needs a 'name'")
            continue
        for key in ("p", "lambda"):
            if key in check and not _numbers(check[key]):
                errors.append(f"'{key}' of check '{check['name']}' must be a list of numbers")
        for key in ("R", "rho", "inner", "middle"):
            if key in check and not _is_number(check[key]):
                errors.append(f"'{key}' of check '{check['name']}' must be a number")
        if "radii" in check and not _is_int(check["radii"]):
            errors.append(f"'radii' of check '{check['name']}' must be an integer")
        if "center" in check and not _numbers(check["center"]):
            errors.append(f"'center' of check '{check['name']}' must be a list of numbers")

    return len(errors) == 0, errors


def load_config(path: Path | str) -> RunConfig:
    """Read, validate and resolve a JSON configuration file.

    Raises:
        ConfigParseError: The file is missing or not valid JSON.
        UnknownCheck: A check name is not provided by the harness.
        ConfigError: Any other validation failure.
    """
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigParseError(f"Cannot read config '{path}': {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigParseError(f"Config '{path}' must hold a JSON object")
    return config_from_dict(raw)


def config_from_dict(raw: dict) -> RunConfig:
    """Resolve a decoded configuration; see load_config for the errors raised."""
    checks = raw.get("checks", [])
    for check in checks if isinstance(checks, list) else []:
        if isinstance(check, dict) and "name" in check and check["name"] not in CHECKS:
            raise UnknownCheck(f"Unknown check '{check['name']}'")
    valid, errors = validate_config(raw)
    if not valid:
        raise ConfigError("Invalid configuration:\n  " + "\n  ".join(errors))
    config = RunConfig(
        structure_spec=raw["structure"],
        coefficient=raw.get("coefficient", {"preset": "vmo-oscillation"}),
        source=raw.get("source", {"preset": "bump"}),
        flux=raw.get("flux", {"preset": "bump"}),
        grid=raw.get("grid", {}),
        solver=raw.get("solver", {}),
        checks=raw.get("checks", []),
        kernel=raw.get("kernel", {}),
        problem=raw.get("problem", {}),
        probe_gains=raw.get("probe_gains", [0.1, 0.2]),
        mu=raw.get("mu"),
        seed=raw.get("seed", 0),
        levels=raw.get("levels", 2),
        residual_tolerance=float(raw.get("residual_tolerance", RESIDUAL_TOLERANCE)),
        output=raw.get("output", DEFAULT_OUTPUT),
        raw=raw,
    )
    _resolve_eagerly(config)
    logger.debug("Loaded configuration with %d checks", len(config.checks))
    return config


def _resolve_eagerly(config: RunConfig) -> None:
    """Build everything derived from the file now, so bad values fail as ConfigError."""
    try:
        s = config.structure
        box = config.box
        shape = config.grid_shape
        scheme = config.solver_config.scheme
        build_coefficient(s, config.coefficient["preset"], config.coefficient.get("params"))
        build_source(config.source["preset"], config.source.get("params"), box.lower, box.upper)
        build_flux(s, config.flux["preset"], config.flux.get("params"), box.lower, box.upper)
    except (NumericalError, TypeError, ValueError, KeyError) as exc:
        raise ConfigError(f"Invalid configuration: {exc}") from exc
    logger.debug("Resolved blocks %s on %s cells with the %s scheme", s.blocks, shape, scheme)


def resolved(config: RunConfig) -> dict:
    """The configuration with every default filled in, as embedded in reports."""
    s = config.structure
    return {
        "structure": {
            "blocks": list(s.blocks),
            "B_blocks": config.structure_spec["B_blocks"],
            "A0": s.A0.tolist(),
            "Lambda": s.Lambda,
        },
        "coefficient": config.coefficient,
        "source": config.source,
        "flux": config.flux,
        "grid": {
            "cells": list(config.grid_shape),
            "lower": list(config.lower),
            "upper": list(config.upper),
        },
        "solver": {
            "dt": config.solver_config.dt,
            "cfl_safety": config.solver_config.cfl_safety,
            "scheme": config.solver_config.scheme,
            "tolerance": config.solver_config.tolerance,
        },
        "checks": config.checks,
        "kernel": config.kernel_settings,
        "problem": config.problem,
        "probe_gains": config.probe_gains,
        "mu": config.mu,
        "seed": config.seed,
        "levels": config.levels,
        "residual_tolerance": config.residual_tolerance,
    }
