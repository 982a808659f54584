"""CLI entry point for ultraparabolic."""

import logging
import sys
from pathlib import Path

import click
import numpy as np

from ultraparabolic.args import COMMANDS, Args
from ultraparabolic.artifacts import ArtifactWriter
from ultraparabolic.config import RunConfig, load_config, resolved
from ultraparabolic.errors import NumericalError, ToolkitError
from ultraparabolic.grid import GridFunction
from ultraparabolic.harness import VERDICTS, run_suite
from ultraparabolic.kernel import (
    FrozenKernel,
    chapman_kolmogorov_error,
    covariance,
    gamma0,
    grad0_gamma0,
    gradient_fd_error,
    homogeneity_error,
    kernel_mass,
    left_invariance_error,
    moment_check,
    young_ratio,
)
from ultraparabolic.presets import (
    EXACT_SOLUTIONS,
    build_coefficient,
    build_flux,
    build_source,
    caloric_quadratic,
    default_bump,
)
from ultraparabolic.solver import ProblemSpec, convergence_study, evaluate, solve_forward
from ultraparabolic.structure import (
    SpaceTimePoint,
    exp_neg_BT,
    group_diameter,
    measure_c0,
    unit_ball_volume,
)

logger = logging.getLogger(__name__)

PACKAGE_LOGGER = "ultraparabolic"
QUADRATURE_DIMENSION_LIMIT = 2


def configure_logging(verbose: bool) -> None:
    """DEBUG everywhere with --verbose; otherwise INFO for the package, WARNING elsewhere."""
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        force=True,
    )
    logging.getLogger(PACKAGE_LOGGER).setLevel(logging.DEBUG if verbose else logging.INFO)


def structure_info(config: RunConfig, writer: ArtifactWriter) -> None:
    """Print and store the homogeneous dimensions, exponents and geometric constants."""
    s = config.structure
    c0 = measure_c0(s)
    samples = {f"{tau:g}": exp_neg_BT(s, tau).tolist() for tau in (0.5, 1.0, 2.0)}
    info = {
        "blocks": list(s.blocks),
        "N": s.N,
        "Q": s.Q,
        "homogeneous_dimension": s.homogeneous_dimension,
        "alpha": s.alpha.tolist(),
        "doubling_constant": 2.0**s.homogeneous_dimension,
        "unit_ball_volume": unit_ball_volume(s),
        "c0": c0.c0,
        "box_diameter": group_diameter(s, config.lower, config.upper),
        "E": samples,
    }
    print(f"Blocks: {list(s.blocks)} (N = {s.N}, m0 = {s.m0})")
    print(f"Q = {s.Q}, Q + 2 = {s.homogeneous_dimension}")
    print(f"alpha = {s.alpha.tolist()}")
    print(f"Doubling constant 2^(Q+2) = {info['doubling_constant']:g}")
    print(f"|B(0, 1)| = {info['unit_ball_volume']:.6g}, c0 = {c0.c0:.4g}")
    for tau, matrix in samples.items():
        print(f"E({tau}) = {np.array2string(np.asarray(matrix), precision=4)}")
    writer.json("structure.json", {"config": resolved(config), "structure": info})


def kernel_eval(config: RunConfig, writer: ArtifactWriter) -> None:
    """Gamma_0 and its D_0 gradient at the configured point pairs."""
    s = config.structure
    k = FrozenKernel.of(s)
    origin = [0.0] * (s.N + 1)
    rows = []
    for entry in config.kernel_settings["points"]:
        z = SpaceTimePoint.of(*entry["z"])
        zeta = SpaceTimePoint.of(*entry.get("zeta", origin))
        value = gamma0(k, z, zeta)
        gradient = grad0_gamma0(k, z, zeta)
        rows.append(
            {
                "z": entry["z"],
                "zeta": entry.get("zeta", origin),
                "gamma0": value,
                "grad0": gradient.tolist(),
            }
        )
        print(f"Gamma0({entry['z']}, {entry.get('zeta', origin)}) = {value:.12g}")
    if not rows:
        print("No kernel points configured.")
    writer.json("kernel_eval.json", {"config": resolved(config), "points": rows})


def kernel_check(config: RunConfig, writer: ArtifactWriter, threads: int) -> None:
    """Kernel identities, convolution constants on a bump and Monte Carlo moments."""
    s = config.structure
    settings = config.kernel_settings
    k = FrozenKernel.of(s)
    origin = SpaceTimePoint(np.zeros(s.N), 0.0)
    z = SpaceTimePoint(np.full(s.N, 0.3), 1.0)
    results: dict = {}

    if s.N <= QUADRATURE_DIMENSION_LIMIT:
        results["mass"] = {f"{t:g}": kernel_mass(k, t) for t in settings["times"]}
        results["chapman_kolmogorov"] = chapman_kolmogorov_error(k, z, 0.5, origin)
    else:
        logger.info("Skipping adaptive quadrature checks in %d spatial dimensions", s.N)
    results["homogeneity"] = {
        f"{lam:g}": list(homogeneity_error(k, z, lam)) for lam in (0.5, 2.0)
    }
    results["left_invariance"] = left_invariance_error(
        k, SpaceTimePoint(np.full(s.N, 0.2), 0.1), z, origin
    )
    results["gradient_fd"] = gradient_fd_error(k, z, origin)
    results["covariance_unit"] = covariance(k, 1.0).C.tolist()
    bump = GridFunction.from_callable(
        default_bump(config.lower, config.upper), config.lower, config.upper, config.grid_shape
    )
    results["young"] = {
        mode: young_ratio(k, bump, mode, threads) for mode in ("plain", "d0_of_argument")
    }
    start = settings["start"] or [0.5] * s.N
    results["moments"] = moment_check(
        k,
        SpaceTimePoint(np.asarray(start, dtype=float), 0.0),
        settings["horizon"],
        settings["paths"],
        settings["steps"],
        config.seed,
        threads,
    )
    for name, value in results.items():
        print(f"{name}: {value}")
    writer.json("kernel_check.json", {"config": resolved(config), "checks": results})


def solve(config: RunConfig, writer: ArtifactWriter) -> None:
    """Solve the configured problem on the base grid and store the GridFunction."""
    s = config.structure
    box, cells = config.box, config.grid_shape
    exact_name = config.problem.get("exact")
    if exact_name:
        solution = EXACT_SOLUTIONS[exact_name](s)
        ps = ProblemSpec(
            structure=s,
            a_field=solution.coefficient_field(),
            box=box,
            cells=cells,
            g=None if solution.is_caloric else solution.source,
            boundary=solution.exact,
            name=exact_name,
        )
    else:
        coefficient, source, flux = config.coefficient, config.source, config.flux
        ps = ProblemSpec(
            structure=s,
            a_field=build_coefficient(s, coefficient["preset"], coefficient.get("params")),
            box=box,
            cells=cells,
            g=build_source(source["preset"], source.get("params"), box.lower, box.upper),
            f=build_flux(s, flux["preset"], flux.get("params"), box.lower, box.upper),
            name="solution",
        )
    u = solve_forward(ps, config.solver_config)
    summary = {"name": ps.name, "cells": list(cells), "max_abs": float(np.abs(u.values).max())}
    if exact_name:
        summary["max_error"] = float(np.abs(u.values - evaluate(solution.exact, u)).max())
        print(f"Max error against {exact_name}: {summary['max_error']:.3e}")
    path = writer.grid("solution.grid", u)
    writer.json("solve.json", {"config": resolved(config), "summary": summary})
    print(f"Solution written to {path}")


def verify(config: RunConfig, writer: ArtifactWriter, threads: int, levels: range) -> bool:
    """Run the inequality suite; returns False when any report failed."""
    reports = run_suite(config, threads=threads, levels=levels)
    writer.reports(reports, resolved(config))
    counts = {verdict: sum(r.verdict == verdict for r in reports) for verdict in VERDICTS}
    print(f"{len(reports)} reports: " + ", ".join(f"{n} {v}" for v, n in counts.items()))
    return counts["failed"] == 0


def convergence(config: RunConfig, writer: ArtifactWriter) -> None:
    """Convergence table of the marcher against the configured exact solution."""
    s = config.structure
    exact_name = config.problem.get("exact")
    solution = EXACT_SOLUTIONS[exact_name](s) if exact_name else caloric_quadratic(s)
    rows = convergence_study(
        solution, config.box, config.grid_shape, config.levels, config.solver_config
    )
    writer.csv("convergence.csv", ["case", "cells", "h", "error"], rows)


def run(args: Args) -> None:
    """Execute one command; raises ToolkitError subclasses on failure."""
    config = load_config(args.config_path)
    out = args.output_dir(config.output_path)
    writer = ArtifactWriter(out)
    ok = True
    try:
        if args.command == "structure-info":
            structure_info(config, writer)
        elif args.command == "kernel-eval":
            kernel_eval(config, writer)
        elif args.command == "kernel-check":
            kernel_check(config, writer, args.threads)
        elif args.command == "solve":
            solve(config, writer)
        elif args.command == "verify":
            ok = verify(config, writer, args.threads, range(2))
        else:
            ok = verify(config, writer, args.threads, range(config.levels))
            convergence(config, writer)
    finally:
        if writer.written:
            writer.manifest()
    print(f"Artifacts written to {out}")
    if not ok:
        raise NumericalError("Some checks failed; partial reports were written")


@click.command(context_settings={"help_option_names": ["-h", "--help"]})
@click.argument("command", type=click.Choice(COMMANDS))
@click.option(
    "--config",
    "config_path",
    required=True,
    type=click.Path(path_type=Path),
    help="JSON run configuration",
)
@click.option(
    "--out",
    type=click.Path(file_okay=False, path_type=Path),
    help="Output directory (default: the configured 'output')",
)
@click.option(
    "--threads",
    default=1,
    show_default=True,
    type=click.IntRange(1),
    help="Worker threads for solves and checks",
)
@click.option("--verbose", "-v", is_flag=True, help="Debug logging")
def main(command: str, config_path: Path, out: Path | None, threads: int, verbose: bool) -> None:
    """Kolmogorov-operator experiments.

    COMMAND is one of structure-info, kernel-eval, kernel-check, solve, verify, sweep.
    """
    args = Args(
        command=command, config_path=config_path, out=out, threads=threads, verbose=verbose
    )
    configure_logging(args.verbose)
    try:
        run(args)
    except ToolkitError as exc:
        print(f"ERROR: {exc}", file=sys.stderr)
        sys.exit(exc.exit_code)
