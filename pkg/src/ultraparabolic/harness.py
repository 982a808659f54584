"""Inequality checks on generated solutions.

Every check evaluates both sides of an estimate with the unknown constant dropped and
reports the empirical ratio lhs / rhs. Ball integrals use the quasi-Monte-Carlo ball
rule from :mod:`ultraparabolic.spaces`, so nested balls of very different anisotropic
size are integrated on the same solution grid. A ratio is called stable when it changes
by at most a factor of two between grid levels h and h / 2.
"""

import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from functools import cached_property

import numpy as np

from ultraparabolic.errors import (
    BadLambda,
    DegenerateLadder,
    EmptyFamily,
    GeometryOutOfDomain,
    NumericalError,
)
from ultraparabolic.grid import AxisBox, GridFunction, region_inside, window
from ultraparabolic.kernel import FrozenKernel
from ultraparabolic.presets import (
    build_coefficient,
    build_flux,
    build_source,
    caloric_quadratic,
    caloric_shear,
)
from ultraparabolic.solver import (
    SPLIT_MARGIN_CELLS,
    CutoffSpec,
    ProblemSpec,
    coefficient_average,
    coefficient_values,
    evaluate,
    solve_forward,
    solve_frozen_convolution,
    split_frozen,
    weak_residual,
)
from ultraparabolic.spaces import (
    BallQuadrature,
    ball_quadrature,
    bmo_eta,
    default_morrey_params,
    derivatives,
    lp_norm,
    morrey_norm,
    vector_magnitude,
)
from ultraparabolic.structure import GroupBall, KolmogorovStructure, SpaceTimePoint

logger = logging.getLogger(__name__)

CHECKS = (
    "caccioppoli",
    "sobolev",
    "poincare",
    "reverse-holder",
    "decay",
    "dirichlet",
    "morrey",
    "interior-lp",
    "splitting-energy",
)
VERDICTS = ("stable", "unstable", "degenerate", "failed")
STABILITY_FACTOR = 2.0
DECAY_SLACK = 0.5
QUADRATURE_POINTS = 2**12
OUTER_MARGIN_CELLS = 1.0
RESIDUAL_TOLERANCE = 0.25


@dataclass(frozen=True)
class Geometry:
    """Center z0 with the outer radius R and inner radius rho of a check."""

    center: SpaceTimePoint
    R: float
    rho: float

    def as_dict(self) -> dict:
        return {"center": self.center.as_array().tolist(), "R": self.R, "rho": self.rho}


@dataclass
class CheckReport:
    """Both sides of one estimate on one solution."""

    check: str
    case: str
    geometry: dict
    parameters: dict = field(default_factory=dict)
    lhs: float = 0.0
    rhs: float = 0.0
    ratio: float = 0.0
    refinement_ratios: list[float] = field(default_factory=list)
    verdict: str = "stable"
    details: dict = field(default_factory=dict)
    message: str = ""

    @property
    def key(self) -> tuple[str, str, str]:
        return self.case, self.check, json.dumps(self.parameters, sort_keys=True)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True, eq=False)
class SolutionCase:
    """A problem with a computed solution on its grid."""

    name: str
    problem: ProblemSpec
    solution: GridFunction

    @property
    def structure(self) -> KolmogorovStructure:
        return self.problem.structure

    @cached_property
    def d0(self) -> list[GridFunction]:
        return derivatives(self.structure, self.solution).d0

    @cached_property
    def source(self) -> GridFunction | None:
        if self.problem.g is None:
            return None
        return self.solution.with_values(evaluate(self.problem.g, self.solution), name="g")

    @cached_property
    def flux(self) -> list[GridFunction] | None:
        if self.problem.f is None:
            return None
        return [
            self.solution.with_values(evaluate(component, self.solution), name=f"f{i + 1}")
            for i, component in enumerate(self.problem.f)
        ]

    @property
    def variable_coefficient(self) -> bool:
        return not isinstance(self.problem.a_field, np.ndarray)


@dataclass
class SolutionSuite:
    """Solutions of one grid level, plus the cases that could not be generated."""

    level: int
    cases: list[SolutionCase] = field(default_factory=list)
    failures: dict[str, str] = field(default_factory=dict)
    residuals: dict[str, float] = field(default_factory=dict)


def sobolev_exponent(s: KolmogorovStructure) -> float:
    """2(Q + 2) / (Q + 4)."""
    return 2.0 * s.homogeneous_dimension / (s.Q + 4)


def default_mu(s: KolmogorovStructure, p: float) -> float:
    """Midpoint of the admissible interval ((p - 2)(Q + 2) / p, Q)."""
    return 0.5 * ((p - 2.0) * s.homogeneous_dimension / p + s.Q)


def fit_radius(
    s: KolmogorovStructure, u: GridFunction, center: SpaceTimePoint, margin_cells: float = 1.0
) -> float:
    """Largest radius (by bisection, shrunk by 2%) whose ball stays inside the grid box."""
    lo, hi = 0.0, 1.0
    while region_inside(u, GroupBall(s, center, hi), margin_cells):
        hi *= 2.0
    for _ in range(50):
        mid = 0.5 * (lo + hi)
        if region_inside(u, GroupBall(s, center, mid), margin_cells):
            lo = mid
        else:
            hi = mid
    if lo == 0.0:
        raise GeometryOutOfDomain("No ball around the center fits inside the grid box")
    return 0.98 * lo


def box_center(u: GridFunction) -> SpaceTimePoint:
    return SpaceTimePoint.of(*((np.asarray(u.lower) + np.asarray(u.upper)) / 2.0))


def check_caccioppoli(
    s: KolmogorovStructure, u: GridFunction, g, f, geometry: Geometry, case: str = ""
) -> CheckReport:
    """int_{B_rho} |D_0 u|^2 against (R - rho)^-2 int_{B_R} |u|^2 + int_{B_R} (|g|^2 + |f|^2)."""
    inner, outer = _quadratures(s, u, geometry.center, geometry.rho, geometry.R)
    lhs = inner.integral(_d0(s, u), 2.0)
    weight = (geometry.R - geometry.rho) ** -2
    u_term = outer.integral([u], 2.0)
    data_term = _data_integral(outer, g, f, 2.0)
    details = {"weight": weight, "u_term": u_term, "data_term": data_term}
    return _report("caccioppoli", case, geometry, {}, lhs, weight * u_term + data_term, details)


def check_sobolev_type(
    s: KolmogorovStructure, u: GridFunction, g, f, geometry: Geometry, case: str = ""
) -> CheckReport:
    """||u||_{L^2(B_rho)} against (R - rho)^-1 times L^{p*}(B_R) norms, p* = 2(Q+2)/(Q+4)."""
    p = sobolev_exponent(s)
    inner, outer = _quadratures(s, u, geometry.center, geometry.rho, geometry.R)
    lhs = math.sqrt(inner.integral([u], 2.0))
    terms = {
        "u": outer.integral([u], p) ** (1.0 / p),
        "d0u": outer.integral(_d0(s, u), p) ** (1.0 / p),
        "g": outer.integral([g], p) ** (1.0 / p) if g is not None else 0.0,
        "f": outer.integral(f, p) ** (1.0 / p) if f else 0.0,
    }
    rhs = sum(terms.values()) / (geometry.R - geometry.rho)
    return _report("sobolev", case, geometry, {"p": p}, lhs, rhs, {"terms": terms})


def check_poincare_type(
    s: KolmogorovStructure, u: GridFunction, g, f, geometry: Geometry, case: str = ""
) -> CheckReport:
    """int_{B_rho} |u|^2 against R^4 (R - rho)^-2 int_{B_R} |D_0 u|^2 + R^2 int (|g|^2 + |f|^2).

    The product cutoff of a spatial step and the time ramp also weighs int_{B_R} |u|^2,
    reported as ``cutoff_weighted``.
    """
    R, rho = geometry.R, geometry.rho
    inner, outer = _quadratures(s, u, geometry.center, rho, R)
    lhs = inner.integral([u], 2.0)
    gradient_term = R**4 / (R - rho) ** 2 * outer.integral(_d0(s, u), 2.0)
    data_term = R**2 * _data_integral(outer, g, f, 2.0)
    cutoff = CutoffSpec(s, geometry.center, rho, R)
    weight = cutoff.product(outer.points[:, :-1].T, outer.points[:, -1]) ** 2
    cutoff_weighted = float(np.dot(outer.weights * weight, outer.magnitude([u]) ** 2))
    details = {
        "gradient_term": gradient_term,
        "data_term": data_term,
        "cutoff_weighted": cutoff_weighted,
    }
    return _report("poincare", case, geometry, {}, lhs, gradient_term + data_term, details)


def check_reverse_holder(
    s: KolmogorovStructure,
    u: GridFunction,
    g,
    f,
    geometry: Geometry,
    ps: list[float],
    case: str = "",
) -> CheckReport:
    """Averaged L^p of D_0 u on B_R against averaged L^2 on B_2R plus the data term.

    The first exponent gives the reported ratio; every exponent lands in ``sweep``.
    """
    if not ps or min(ps) < 2:
        raise NumericalError(f"Reverse Hoelder exponents must be at least 2, got {ps}")
    inner, outer = _quadratures(s, u, geometry.center, geometry.R, 2.0 * geometry.R)
    d0 = _d0(s, u)
    data = _data_fields(g, f)
    l2_outer = math.sqrt(outer.mean(d0, 2.0))
    sweep = []
    for p in ps:
        lhs = inner.mean(d0, p) ** (1.0 / p)
        data_term = outer.mean(data, p) ** (1.0 / p) if data else 0.0
        rhs = l2_outer + data_term
        sweep.append({"p": p, "lhs": lhs, "rhs": rhs, "ratio": lhs / rhs if rhs > 0 else 0.0})
    details = {"sweep": sweep, "l2_average": math.sqrt(inner.mean(d0, 2.0))}
    first = sweep[0]
    return _report(
        "reverse-holder", case, geometry, {"p": ps[0]}, first["lhs"], first["rhs"], details
    )


def check_decay(
    s: KolmogorovStructure,
    v: GridFunction,
    geometry: Geometry,
    p: float = 2.2,
    mu: float | None = None,
    n_radii: int = 5,
    case: str = "",
) -> CheckReport:
    """Decay of a homogeneous solution over the ladder rho_k = R 2^(-k/2).

    Fits log-log slopes of int|v|^2, int|D_0 v|^2 and int|D_0 v|^p and compares them
    with the lower bounds Q + 2, Q, Q + 2 - p and (2(Q+2) - p(Q+2-mu)) / 2; the sup
    bound sup_{B_rho/2} |v|^2 <= c rho^-(Q+2) int_{B_rho} |v|^2 is reported per radius.
    """
    if n_radii < 3:
        raise DegenerateLadder(f"Decay fits need at least 3 radii, got {n_radii}")
    mu = default_mu(s, p) if mu is None else mu
    _require_inside(s, v, geometry.center, geometry.R)
    radii = [geometry.R * 2.0 ** (-k / 2.0) for k in range(n_radii)]
    d0 = _d0(s, v)
    exponents = {
        "l2": float(s.homogeneous_dimension),
        "energy": float(s.Q),
        "lp": s.homogeneous_dimension - p,
        "morrey": (2.0 * s.homogeneous_dimension - p * (s.homogeneous_dimension - mu)) / 2.0,
    }
    values = {name: [] for name in ("l2", "energy", "lp")}
    sup_ratios, ladder = [], []
    for rho in radii:
        quad = ball_quadrature(GroupBall(s, geometry.center, rho), QUADRATURE_POINTS)
        half = ball_quadrature(GroupBall(s, geometry.center, rho / 2.0), QUADRATURE_POINTS)
        values["l2"].append(quad.integral([v], 2.0))
        values["energy"].append(quad.integral(d0, 2.0))
        values["lp"].append(quad.integral(d0, p))
        sup_rhs = rho ** (-s.homogeneous_dimension) * values["l2"][-1]
        sup_lhs = half.sup([v]) ** 2
        sup_ratios.append(sup_lhs / sup_rhs if sup_rhs > 0 else 0.0)
        for name in values:
            ladder.append({"estimate": name, "rho": rho, "lhs": values[name][-1]})
        ladder.append({"estimate": "sup", "rho": rho, "lhs": sup_lhs})
    values["morrey"] = values["lp"]

    slopes, holds = {}, {}
    for name, series in values.items():
        slope = _slope(radii, series)
        slopes[name] = slope
        holds[name] = slope is None or slope >= exponents[name] - DECAY_SLACK
    lhs = values["energy"][-1]
    rhs = (radii[-1] / geometry.R) ** s.Q * values["energy"][0]
    details = {
        "radii": radii,
        "slopes": slopes,
        "exponents": exponents,
        "holds": holds,
        "sup_ratio": max(sup_ratios),
        "ladder": ladder,
    }
    parameters = {"p": p, "mu": mu}
    return _report("decay", case, geometry, parameters, lhs, rhs, details)


def check_dirichlet_estimates(
    s: KolmogorovStructure,
    w: GridFunction,
    g,
    f,
    geometry: Geometry,
    ps: list[float],
    case: str = "",
) -> CheckReport:
    """Energy, L^p and L^2 bounds for a solution with zero initial and lateral data.

    Reported ratio: int_{B_R} |D_0 w|^2 against int_{B_2R} (|g|^2 + |f|^2). The L^p
    version integrates the data over B_4R, which must sit inside the grid box with a
    one-cell margin.
    """
    R = geometry.R
    _require_inside(s, w, geometry.center, 4.0 * R, OUTER_MARGIN_CELLS)
    q_r, q_2r = _quadratures(s, w, geometry.center, R, 2.0 * R)
    q_4r = ball_quadrature(GroupBall(s, geometry.center, 4.0 * R), QUADRATURE_POINTS)
    d0 = _d0(s, w)
    lhs = q_r.integral(d0, 2.0)
    rhs = _data_integral(q_2r, g, f, 2.0)
    lp_rows = []
    for p in ps:
        lp_lhs = q_r.integral(d0, p)
        lp_rhs = (q_4r.integral([g], p) if g is not None else 0.0) + (
            q_4r.integral(f, p) if f else 0.0
        )
        lp_rows.append(
            {"p": p, "lhs": lp_lhs, "rhs": lp_rhs, "ratio": lp_lhs / lp_rhs if lp_rhs else 0.0}
        )
    aux_lhs = q_r.integral([w], 2.0)
    aux_rhs = R**2 * q_2r.integral(d0, 2.0) + R**2 * rhs
    details = {
        "lp": lp_rows,
        "auxiliary": {
            "lhs": aux_lhs,
            "rhs": aux_rhs,
            "ratio": aux_lhs / aux_rhs if aux_rhs > 0 else 0.0,
        },
    }
    return _report("dirichlet", case, geometry, {"p": list(ps)}, lhs, rhs, details)


def check_morrey(
    s: KolmogorovStructure,
    u: GridFunction,
    g,
    f,
    inner: AxisBox,
    middle: AxisBox,
    p: float,
    lam: float,
    geometry: Geometry | None = None,
    case: str = "",
) -> CheckReport:
    """||D_0 u||_{L^{p,lam}(inner)} against ||D_0 u||_{L^2(middle)} + Morrey norms of g, f.

    The plain L^p version of the same estimate, the lam -> 0 limit, is kept as
    ``lambda_zero_ratio``; with a geometry the per-radius decay table of
    int_{B_rho} |D_0 u|^p is added.
    """
    if not 0 < lam < s.homogeneous_dimension:
        raise BadLambda(f"Morrey check needs 0 < lambda < {s.homogeneous_dimension}, got {lam}")
    magnitude = vector_magnitude(_d0(s, u))
    slices, _ = window(magnitude, inner)
    local = magnitude.restricted(slices)
    l2_middle = lp_norm(magnitude, 2.0, middle)
    data = [d for d in (g, _flux_magnitude(f)) if d is not None]

    data_power = sum(
        morrey_norm(d, default_morrey_params(s, d, p, lam), s) ** p for d in data
    )
    lhs = morrey_norm(local, default_morrey_params(s, local, p, lam), s)
    rhs = l2_middle + data_power ** (1.0 / p)
    plain_lhs = lp_norm(magnitude, p, inner)
    plain_rhs = l2_middle + sum(lp_norm(d, p) for d in data)
    details = {
        "l2_middle": l2_middle,
        "lambda_zero_ratio": plain_lhs / plain_rhs if plain_rhs > 0 else 0.0,
    }
    if geometry is not None:
        details["decay_table"] = _morrey_decay_table(
            s, u, geometry, p, lam, data_power
        )
    parameters = {"p": p, "lambda": lam}
    return _report("morrey", case, geometry, parameters, lhs, rhs, details)


def check_interior_lp(
    s: KolmogorovStructure,
    u: GridFunction,
    g,
    f,
    inner: AxisBox,
    middle: AxisBox,
    p: float,
    case: str = "",
) -> CheckReport:
    """||D_0 u||_{L^p(inner)} against ||D_0 u||_{L^2(middle)} + ||g||_p + ||f||_p."""
    magnitude = vector_magnitude(_d0(s, u))
    lhs = lp_norm(magnitude, p, inner)
    terms = {
        "d0u": lp_norm(magnitude, 2.0, middle),
        "g": lp_norm(g, p) if g is not None else 0.0,
        "f": lp_norm(_flux_magnitude(f), p) if f else 0.0,
    }
    geometry = {"inner": [list(inner.lower), list(inner.upper)]}
    return _report("interior-lp", case, geometry, {"p": p}, lhs, sum(terms.values()), terms)


def check_splitting_energy(
    case: SolutionCase, geometry: Geometry, p: float = 2.2, cfg=None
) -> CheckReport:
    """Energy of w = u - v, v the frozen solution with the data of u on B_R.

    Compared with int |A_R - A|^2 |D_0 u|^2 + R^2 int |g|^2 + int |f|^2; the BMO bound
    (|B_R| eta_R)^((p-2)/p) (int |D_0 u|^p)^(2/p) of the coefficient term is reported too.
    """
    s, u, ps = case.structure, case.solution, case.problem
    ball = GroupBall(s, geometry.center, geometry.R)
    _, w = split_frozen(ps, u, ball, cfg)
    quad = ball_quadrature(ball, QUADRATURE_POINTS)
    lhs = quad.integral(_d0(s, w), 2.0)

    A = coefficient_values(ps.a_field, u)
    averaged = coefficient_average(ps.a_field, ball, u)
    deviation = np.sum((averaged[:, :, *([None] * u.ndim)] - A) ** 2, axis=(0, 1))
    d0 = case.d0
    weighted = u.with_values(np.sqrt(deviation) * vector_magnitude(d0).values)
    deviation_term = quad.integral([weighted], 2.0)
    source_term = geometry.R**2 * quad.integral([case.source], 2.0) if case.source else 0.0
    flux_term = quad.integral(case.flux, 2.0) if case.flux else 0.0

    try:
        eta = max(
            bmo_eta(u.with_values(A[i, j]), geometry.R, [geometry.center], s)
            for i in range(s.m0)
            for j in range(s.m0)
        )
        bmo_bound = (ball.volume * eta) ** ((p - 2.0) / p) * quad.integral(d0, p) ** (2.0 / p)
    except EmptyFamily:
        eta, bmo_bound = None, None
    details = {
        "deviation_term": deviation_term,
        "source_term": source_term,
        "flux_term": flux_term,
        "eta": eta,
        "bmo_bound": bmo_bound,
    }
    rhs = deviation_term + source_term + flux_term
    return _report("splitting-energy", case.name, geometry, {"p": p}, lhs, rhs, details)


def with_refinement(reports: list[CheckReport]) -> CheckReport:
    """The finest report, with ratios of every level and the verdict of the last two."""
    finest = reports[-1]
    ratios = [r.ratio for r in reports]
    verdicts = {r.verdict for r in reports[-2:]}
    if "failed" in verdicts:
        verdict = "failed"
    elif "degenerate" in verdicts:
        verdict = "degenerate"
    elif len(reports) < 2:
        verdict = "degenerate"
    else:
        lo, hi = sorted(ratios[-2:])
        if hi == 0.0:
            verdict = "stable"
        elif lo > 0.0 and hi / lo <= STABILITY_FACTOR:
            verdict = "stable"
        else:
            verdict = "unstable"
    if verdict == "unstable":
        logger.warning(
            "%s on %s is unstable under refinement: %s", finest.check, finest.case, ratios
        )
    message = next((r.message for r in reversed(reports) if r.message), "")
    return replace(finest, refinement_ratios=ratios, verdict=verdict, message=message)


def build_suite(config, level: int, threads: int = 1) -> SolutionSuite:
    """Caloric, frozen-kernel and variable-coefficient solutions on the level's grid."""
    s = config.structure
    box = config.box
    cells = config.cells_at(level)
    solver_config = config.solver_config
    suite = SolutionSuite(level=level)
    template = GridFunction.from_callable(lambda x, t: 0.0, box.lower, box.upper, cells)
    coefficient = build_coefficient(
        s, config.coefficient["preset"], config.coefficient.get("params")
    )
    g = build_source(config.source["preset"], config.source.get("params"), box.lower, box.upper)
    f = build_flux(s, config.flux["preset"], config.flux.get("params"), box.lower, box.upper)
    reference = np.asarray(s.A0, dtype=float)

    def caloric(solution) -> SolutionCase:
        ps = ProblemSpec(s, reference, box, cells, boundary=solution.exact, name=solution.name)
        values = evaluate(solution.exact, template)
        return SolutionCase(solution.name, ps, template.with_values(values, name=solution.name))

    def frozen() -> SolutionCase:
        source = template.with_values(evaluate(g, template), name="g")
        u = solve_frozen_convolution(FrozenKernel.of(s), source, threads=threads)
        ps = ProblemSpec(s, reference, box, cells, g=source, boundary=u, name="frozen-bump")
        return SolutionCase("frozen-bump", ps, u)

    def forward(name: str, flux) -> SolutionCase:
        ps = ProblemSpec(s, coefficient, box, cells, g=g, f=flux, name=name)
        return SolutionCase(name, ps, solve_forward(ps, solver_config))

    builders = [
        ("caloric-quadratic", lambda: caloric(caloric_quadratic(s))),
        ("caloric-shear", lambda: caloric(caloric_shear(s))),
    ]
    if g is not None:
        builders.append(("frozen-bump", frozen))
    source_name, flux_name = f"{coefficient.name}-source", f"{coefficient.name}-flux"
    builders.append((source_name, lambda: forward(source_name, None)))
    if f is not None:
        builders.append((flux_name, lambda: forward(flux_name, f)))

    center = box_center(template)
    R = fit_radius(s, template, center)
    tolerance = config.residual_tolerance
    for name, build in builders:
        try:
            case = build()
        except NumericalError as exc:
            logger.error("Could not generate %s at level %d: %s", name, level, exc)
            suite.failures[name] = str(exc)
            continue
        residual = _normalised_residual(case, center, R)
        if residual is not None and residual > tolerance:
            message = f"Weak residual {residual:.3g} exceeds tolerance {tolerance:.3g}"
            logger.error("Rejecting %s at level %d: %s", name, level, message)
            suite.failures[name] = message
            continue
        suite.cases.append(case)
        suite.residuals[name] = residual
    logger.info("Level %d suite: %d cases on %s cells", level, len(suite.cases), cells)
    return suite


def run_checks(suite: SolutionSuite, config, threads: int = 1) -> list[CheckReport]:
    """Every configured check on every applicable case of one suite."""
    tasks = []
    for case in suite.cases:
        for entry in config.checks:
            for parameters in _expand(entry, config):
                if _applies(entry["name"], case):
                    tasks.append((case, entry, parameters))
    base = base_grid(config)
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        reports = list(pool.map(lambda task: _run_one(config, base, *task), tasks))
    for report in reports:
        report.details["weak_residual"] = suite.residuals.get(report.case)
    for name, message in suite.failures.items():
        for entry in config.checks:
            reports.append(
                CheckReport(
                    check=entry["name"], case=name, geometry={}, verdict="failed", message=message
                )
            )
    return reports


def run_suite(config, threads: int = 1, levels: range | None = None) -> list[CheckReport]:
    """All configured checks over the configured grid levels, merged with refinement verdicts."""
    if not config.checks:
        return []
    levels = levels if levels is not None else range(config.levels)
    per_level = [
        run_checks(build_suite(config, level, threads), config, threads) for level in levels
    ]
    merged: dict[tuple, list[CheckReport]] = {}
    for reports in per_level:
        for report in reports:
            merged.setdefault(report.key, []).append(report)
    results = [with_refinement(group) for group in merged.values()]
    logger.info(
        "Suite finished: %d reports, %d stable",
        len(results),
        sum(r.verdict == "stable" for r in results),
    )
    return results


def _run_one(
    config, base: GridFunction, case: SolutionCase, entry: dict, parameters: dict
) -> CheckReport:
    name = entry["name"]
    s, u = case.structure, case.solution
    try:
        if name in ("morrey", "interior-lp"):
            box = u.box
            inner = box.shrunk(entry.get("inner", 0.5))
            middle = box.shrunk(entry.get("middle", 0.75))
            if name == "morrey":
                geometry = _geometry(s, base, entry, 4.0, OUTER_MARGIN_CELLS)
                return check_morrey(
                    s, u, case.source, case.flux, inner, middle,
                    parameters["p"], parameters["lambda"], geometry, case.name,
                )
            return check_interior_lp(
                s, u, case.source, case.flux, inner, middle, parameters["p"], case.name
            )
        if name == "splitting-energy":
            geometry = _geometry(s, base, entry, margin_cells=SPLIT_MARGIN_CELLS)
            return check_splitting_energy(
                case, geometry, parameters["p"], config.solver_config
            )
        if name == "decay":
            geometry = _geometry(s, base, entry)
            return check_decay(
                s, u, geometry, parameters["p"], config.mu, entry.get("radii", 5), case.name
            )
        if name in ("reverse-holder", "dirichlet"):
            geometry = _geometry(s, base, entry, 4.0, OUTER_MARGIN_CELLS)
            if name == "reverse-holder":
                return check_reverse_holder(
                    s, u, case.source, case.flux, geometry, parameters["p"], case.name
                )
            return check_dirichlet_estimates(
                s, u, case.source, case.flux, geometry, parameters["p"], case.name
            )
        geometry = _geometry(s, base, entry)
        check = {
            "caccioppoli": check_caccioppoli,
            "sobolev": check_sobolev_type,
            "poincare": check_poincare_type,
        }[name]
        return check(s, u, case.source, case.flux, geometry, case.name)
    except NumericalError as exc:
        logger.error("%s on %s failed: %s", name, case.name, exc)
        return CheckReport(
            check=name, case=case.name, geometry={}, parameters=parameters,
            verdict="failed", message=str(exc),
        )


def _expand(entry: dict, config) -> list[dict]:
    """Parameter combinations of one configured check."""
    name = entry["name"]
    gains = config.probe_gains
    if name == "reverse-holder":
        return [{"p": entry.get("p", [2.0 * (1.0 + gain) for gain in gains])}]
    if name == "dirichlet":
        return [{"p": entry.get("p", [2.0, 2.2])}]
    if name == "morrey":
        return [
            {"p": p, "lambda": lam}
            for p in entry.get("p", [2.2])
            for lam in entry.get("lambda", [1.0])
        ]
    if name in ("interior-lp", "decay", "splitting-energy"):
        return [{"p": p} for p in entry.get("p", [2.2])]
    return [{}]


def _applies(name: str, case: SolutionCase) -> bool:
    if name == "dirichlet":
        return case.problem.zero_data and not case.problem.homogeneous
    if name == "decay":
        return case.problem.homogeneous
    if name == "splitting-energy":
        return case.variable_coefficient
    return True


def base_grid(config) -> GridFunction:
    """Zero function on the level-0 grid of a run."""
    box = config.box
    return GridFunction.from_callable(lambda x, t: 0.0, box.lower, box.upper, config.grid_shape)


def _geometry(
    s: KolmogorovStructure,
    base: GridFunction,
    entry: dict,
    outer: float = 1.0,
    margin_cells: float = 0.0,
) -> Geometry:
    """Configured geometry, or the box center with the largest R whose B_{outer R} fits.

    Radii are fitted on the base grid with ``margin_cells`` of its cells, so every finer
    level sees the same balls with at least that margin.
    """
    center = SpaceTimePoint.of(*entry["center"]) if "center" in entry else box_center(base)
    R = entry.get("R") or fit_radius(s, base, center, margin_cells) / outer
    rho = entry.get("rho") or R / 2.0
    return Geometry(center=center, R=float(R), rho=float(rho))


def _require_inside(
    s: KolmogorovStructure,
    u: GridFunction,
    center: SpaceTimePoint,
    R: float,
    margin_cells: float = 0.0,
) -> None:
    if not region_inside(u, GroupBall(s, center, R), margin_cells):
        raise GeometryOutOfDomain(
            f"Ball of radius {R:.4g} around {center.as_array()} leaves the grid"
        )


def _quadratures(
    s: KolmogorovStructure, u: GridFunction, center: SpaceTimePoint, inner: float, outer: float
) -> tuple[BallQuadrature, BallQuadrature]:
    if not inner < outer:
        raise GeometryOutOfDomain(f"Inner radius {inner} must be below outer radius {outer}")
    _require_inside(s, u, center, outer)
    return (
        ball_quadrature(GroupBall(s, center, inner), QUADRATURE_POINTS),
        ball_quadrature(GroupBall(s, center, outer), QUADRATURE_POINTS),
    )


def _d0(s: KolmogorovStructure, u: GridFunction) -> list[GridFunction]:
    return derivatives(s, u).d0


def _data_fields(g, f) -> list[GridFunction]:
    return ([g] if g is not None else []) + list(f or [])


def _data_integral(quad: BallQuadrature, g, f, power: float) -> float:
    """int (|g|^2 + |f|^2)^(power / 2) over the ball, zero without data."""
    data = _data_fields(g, f)
    return quad.integral(data, power) if data else 0.0


def _flux_magnitude(f) -> GridFunction | None:
    return vector_magnitude(f) if f else None


def _morrey_decay_table(s, u, geometry: Geometry, p: float, lam: float, data_power: float):
    _require_inside(s, u, geometry.center, 4.0 * geometry.R, OUTER_MARGIN_CELLS)
    quad_4r = ball_quadrature(GroupBall(s, geometry.center, 4.0 * geometry.R), QUADRATURE_POINTS)
    d0 = _d0(s, u)
    outer = quad_4r.integral(d0, p)
    exponent = s.homogeneous_dimension - lam
    rows = []
    for k in range(4):
        rho = geometry.R * 2.0 ** (-k / 2.0)
        lhs = ball_quadrature(GroupBall(s, geometry.center, rho), QUADRATURE_POINTS).integral(d0, p)
        rhs = (rho / geometry.R) ** exponent * outer + rho**exponent * data_power
        rows.append({"rho": rho, "lhs": lhs, "rhs": rhs})
    return rows


def _slope(radii: list[float], values: list[float]) -> float | None:
    """Log-log slope, or None when the quantity vanishes along the ladder."""
    if min(values) <= 0.0:
        return None
    return float(np.polyfit(np.log(radii), np.log(values), 1)[0])


def _normalised_residual(case: SolutionCase, center: SpaceTimePoint, R: float) -> float | None:
    """Weak residual against the ball cutoff divided by the cutoff's integral."""
    cutoff = CutoffSpec(case.structure, center, R / 2.0, R)
    psi = cutoff.on_grid(case.solution)
    try:
        residual = weak_residual(case.problem, case.solution, psi)
    except NumericalError as exc:
        logger.debug("No weak residual for %s: %s", case.name, exc)
        return None
    mass = float(psi.values.sum() * psi.cell_volume)
    return abs(residual) / mass if mass > 0 else None


def _report(
    check: str, case: str, geometry, parameters: dict, lhs: float, rhs: float, details: dict
) -> CheckReport:
    if isinstance(geometry, Geometry):
        geometry = geometry.as_dict()
    if rhs > 0:
        ratio, verdict = lhs / rhs, "stable"
    else:
        ratio, verdict = 0.0, "degenerate"
    logger.info("%s on %s: lhs=%.4g rhs=%.4g ratio=%.4g", check, case, lhs, rhs, ratio)
    return CheckReport(
        check=check,
        case=case,
        geometry=geometry or {},
        parameters=parameters,
        lhs=float(lhs),
        rhs=float(rhs),
        ratio=float(ratio),
        verdict=verdict,
        details=details,
    )
