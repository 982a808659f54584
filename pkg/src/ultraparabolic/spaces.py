"""Discrete derivatives and function-space functionals on grid functions.

Covers the operators D_0, D and Y = <x, B D> - d/dt, L^p norms over group balls,
cubes and boxes, Morrey norms over finite center/radius families, the W_p^{1,1} norm
and the mean-oscillation modulus eta_R used for BMO/VMO coefficients. Ball integrals
for the inequality checks use a quasi-Monte-Carlo rule carried onto each ball.
"""

import logging
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.stats import qmc

from ultraparabolic.errors import (
    BadLambda,
    EmptyFamily,
    EmptyIntersection,
    GridTooSmall,
    NumericalError,
)
from ultraparabolic.grid import GridFunction, Region, window
from ultraparabolic.structure import (
    GroupBall,
    KolmogorovStructure,
    SpaceTimePoint,
    _apply_flow,
    _invert_rows,
    group_diameter,
)

logger = logging.getLogger(__name__)

SCHEMES = ("central", "upwind")


@dataclass(frozen=True)
class DerivativeBundle:
    """D_0 components, all spatial components and the drift derivative Y u."""

    d0: list[GridFunction]
    dfull: list[GridFunction]
    y: GridFunction

    def d0_magnitude(self) -> GridFunction:
        """Pointwise Euclidean norm of D_0 u."""
        return vector_magnitude(self.d0)


@dataclass(frozen=True)
class MorreyParams:
    """Exponents and the finite center/radius family of a Morrey norm."""

    p: float
    lam: float
    centers: list[SpaceTimePoint]
    radii: list[float]
    rho_max: float


def drift_velocity(s: KolmogorovStructure, u: GridFunction) -> np.ndarray:
    """Components (B^T x)_j at every cell, shape (N, ...)."""
    x, _ = u.coordinates()
    return np.tensordot(s.B.T, x, axes=1)


def derivatives(
    s: KolmogorovStructure, u: GridFunction, scheme: str = "central"
) -> DerivativeBundle:
    """Discrete D_0 u, D u and Y u.

    Args:
        s: Structure supplying B and m_0.
        u: Grid function over (x_1, ..., x_N, t).
        scheme: ``central`` for second-order interior differences with first-order faces,
            ``upwind`` for one-sided differences signed by the drift on transport axes and a
            backward time difference.

    Returns:
        The derivative bundle on the grid of u.
    """
    if scheme not in SCHEMES:
        raise NumericalError(f"Unknown derivative scheme '{scheme}'")
    if u.N != s.N:
        raise NumericalError(f"Grid has {u.N} spatial axes, structure has {s.N}")
    if min(u.shape) < 3:
        raise GridTooSmall(f"Need at least 3 nodes per axis, grid shape is {u.shape}")

    velocity = drift_velocity(s, u)
    dfull = []
    for j in range(s.N):
        if scheme == "upwind" and j in s.transport_axes:
            forward, backward = one_sided_differences(u.values, u.spacing[j], j)
            central = np.gradient(u.values, u.spacing[j], axis=j)
            values = np.select([velocity[j] > 0, velocity[j] < 0], [forward, backward], central)
        else:
            values = np.gradient(u.values, u.spacing[j], axis=j)
        dfull.append(u.with_values(values, name=f"d{j + 1}({u.name})"))

    if scheme == "upwind":
        dt = one_sided_differences(u.values, u.spacing[-1], u.ndim - 1)[1]
    else:
        dt = np.gradient(u.values, u.spacing[-1], axis=-1)
    transport = sum(velocity[j] * dfull[j].values for j in s.transport_axes)
    y = u.with_values(transport - dt, name=f"Y({u.name})")
    return DerivativeBundle(d0=dfull[: s.m0], dfull=dfull, y=y)


def vector_magnitude(components: list[GridFunction]) -> GridFunction:
    """Pointwise Euclidean norm of a list of grid functions on one grid."""
    total = np.sqrt(sum(c.values**2 for c in components))
    return components[0].with_values(total, name="|" + ",".join(c.name for c in components) + "|")


def integrate(u: GridFunction, region: Region | None = None) -> float:
    """Midpoint integral of u over the cells whose centers lie in region."""
    slices, mask = window(u, region)
    return float(np.sum(u.values[slices][mask]) * u.cell_volume)


def measure(u: GridFunction, region: Region | None = None) -> float:
    """Measure of the grid cells whose centers lie in region."""
    _, mask = window(u, region)
    return float(np.count_nonzero(mask) * u.cell_volume)


def average(u: GridFunction, region: Region | None = None) -> float:
    """Mean value of u over the cells of region."""
    slices, mask = window(u, region)
    return float(np.mean(u.values[slices][mask]))


def lp_norm(u: GridFunction, p: float, region: Region | None = None) -> float:
    """(sum of cell volume |u|^p over cells in region)^(1/p); p = inf gives the max."""
    if p < 1:
        raise NumericalError(f"Exponent p must be at least 1, got {p}")
    slices, mask = window(u, region)
    values = np.abs(u.values[slices][mask])
    if np.isinf(p):
        return float(values.max())
    return float((np.sum(values**p) * u.cell_volume) ** (1.0 / p))


def default_morrey_params(
    s: KolmogorovStructure,
    u: GridFunction,
    p: float,
    lam: float,
    lattice: int = 5,
    n_radii: int = 6,
    ratio: float = 0.5,
) -> MorreyParams:
    """Lattice of centers at interior cell fractions and a geometric radius ladder.

    The largest radius is the group diameter of the grid box.
    """
    fractions = (np.arange(lattice) + 0.5) / lattice
    lo, hi = np.asarray(u.lower), np.asarray(u.upper)
    mesh = np.meshgrid(*([fractions] * u.ndim), indexing="ij")
    points = lo + (hi - lo) * np.stack([m.ravel() for m in mesh], axis=1)
    centers = [SpaceTimePoint.of(*row) for row in points]
    rho_max = group_diameter(s, u.lower, u.upper)
    radii = [rho_max * ratio**k for k in range(n_radii)]
    return MorreyParams(p=p, lam=lam, centers=centers, radii=radii, rho_max=rho_max)


def morrey_norm(u: GridFunction, mp: MorreyParams, s: KolmogorovStructure) -> float:
    """Maximum over the family of (rho^lam / |Omega cap B_rho| integral |u|^p)^(1/p).

    Radii above the group diameter ``rho_max`` are dropped; under-resolved balls are
    skipped.
    """
    if not 0 <= mp.lam < s.homogeneous_dimension:
        raise BadLambda(f"Morrey exponent {mp.lam} outside [0, {s.homogeneous_dimension})")
    radii = [rho for rho in mp.radii if rho <= mp.rho_max * (1 + 1e-12)]
    if len(radii) < len(mp.radii):
        logger.debug(
            "Dropped %d Morrey radii above the group diameter %.4g",
            len(mp.radii) - len(radii),
            mp.rho_max,
        )
    powered = u.with_values(np.abs(u.values) ** mp.p)
    best = None
    for center in mp.centers:
        for rho in radii:
            try:
                slices, mask = window(powered, GroupBall(s, center, rho))
            except EmptyIntersection as exc:
                logger.debug("Skipping rho=%.3g at %s: %s", rho, center.as_array(), exc)
                continue
            value = rho**mp.lam * float(np.mean(powered.values[slices][mask]))
            best = value if best is None else max(best, value)
    if best is None:
        raise EmptyFamily("No resolved ball in the Morrey family")
    return best ** (1.0 / mp.p)


def sobolev_norm(s: KolmogorovStructure, u: GridFunction, p: float) -> float:
    """W_p^{1,1} norm (||u||^p + sum_i ||d_i u||^p + ||Y u||^p)^(1/p), i < m_0."""
    bundle = derivatives(s, u)
    total = lp_norm(u, p) ** p + lp_norm(bundle.y, p) ** p
    total += sum(lp_norm(component, p) ** p for component in bundle.d0)
    return float(total ** (1.0 / p))


def mean_oscillation(a: GridFunction, region: Region) -> float:
    """(1/|Omega cap region|) integral |a - a_region| over the region."""
    slices, mask = window(a, region)
    values = a.values[slices][mask]
    return float(np.mean(np.abs(values - values.mean())))


def bmo_eta(
    a: GridFunction,
    R: float,
    centers: list[SpaceTimePoint],
    s: KolmogorovStructure,
    n_radii: int = 6,
    ratio: float = 0.5,
) -> float:
    """eta_R(a): sup over centers and resolved radii rho <= R of the mean oscillation."""
    best = None
    for center in centers:
        for k in range(n_radii):
            try:
                value = mean_oscillation(a, GroupBall(s, center, R * ratio**k))
            except EmptyIntersection:
                continue
            best = value if best is None else max(best, value)
    if best is None:
        raise EmptyFamily(f"No resolved ball of radius <= {R} for eta_R")
    return best


@dataclass(frozen=True, eq=False)
class BallQuadrature:
    """Nodes and weights with sum_i w_i F(p_i) approximating the integral of F over a ball."""

    ball: GroupBall
    points: np.ndarray
    weights: np.ndarray

    def inside(self, u: GridFunction) -> np.ndarray:
        """Mask of nodes lying in the grid box of u."""
        return np.all((self.points >= u.lower) & (self.points <= u.upper), axis=1)

    def measure(self, u: GridFunction) -> float:
        """|Omega cap B| with Omega the grid box of u."""
        return float(self.weights[self.inside(u)].sum())

    def magnitude(self, fields: list[GridFunction]) -> np.ndarray:
        """Euclidean norm of the sampled fields at every node, zero outside the grid box."""
        return np.sqrt(sum(f.sample(self.points, order=1) ** 2 for f in fields))

    def integral(self, fields: list[GridFunction], power: float = 2.0) -> float:
        """Integral over Omega cap B of |F|^power, F the vector of fields."""
        return float(np.dot(self.weights, self.magnitude(fields) ** power))

    def mean(self, fields: list[GridFunction], power: float = 2.0) -> float:
        """(1 / |Omega cap B|) times the integral of |F|^power."""
        return self.integral(fields, power) / self.measure(fields[0])

    def sup(self, fields: list[GridFunction]) -> float:
        """Largest sampled |F| over the nodes."""
        return float(self.magnitude(fields).max())


def ball_quadrature(ball: GroupBall, n_points: int = 2**12, seed: int = 0) -> BallQuadrature:
    """Quasi-Monte-Carlo rule on B(z0, R) = z0 o {y : ||y^-1|| < R}.

    Unit-ball nodes come from the simplex substitution used for the unit-ball volume;
    dilation, inversion and left translation carry them onto the ball and only the
    dilation changes the weights, by R^(Q+2).
    """
    s = ball.structure
    unit, unit_weights = _unit_ball_nodes(s.blocks, n_points, seed)
    scaled = unit * ball.radius**s.exponents
    relative = _invert_rows(s, scaled)
    lag = relative[:, -1]
    shift = _apply_flow(s, lag, ball.center.x.reshape(-1, 1))
    points = np.column_stack([relative[:, :-1] + shift.T, lag + ball.center.t])
    weights = unit_weights * ball.radius**s.homogeneous_dimension
    return BallQuadrature(ball=ball, points=points, weights=weights)


@lru_cache(maxsize=32)
def _unit_ball_nodes(blocks: tuple[int, ...], n_points: int, seed: int):
    exponents = np.append(np.repeat([2.0 * k + 1.0 for k in range(len(blocks))], blocks), 2.0)
    d = exponents.size
    m = max(1, math.ceil(math.log2(n_points)))
    spacings = -np.log1p(-qmc.Sobol(d=d + 1, scramble=True, seed=seed).random_base2(m))
    u = spacings[:, :d] / spacings.sum(axis=1, keepdims=True)
    flips = qmc.Sobol(d=d, scramble=True, seed=seed + 1).random_base2(m)
    signs = np.where(flips < 0.5, -1.0, 1.0)
    nodes = signs * u**exponents
    weights = 2.0**d / math.factorial(d) * np.prod(exponents * u ** (exponents - 1.0), axis=1)
    nodes.setflags(write=False)
    weights = weights / weights.size
    weights.setflags(write=False)
    logger.debug("Generated %d unit-ball nodes for blocks %s", weights.size, blocks)
    return nodes, weights


def one_sided_differences(
    values: np.ndarray, h: float, axis: int
) -> tuple[np.ndarray, np.ndarray]:
    """Forward and backward first differences, falling back to the other at the faces."""
    diff = np.diff(values, axis=axis) / h
    first = np.take(diff, [0], axis=axis)
    last = np.take(diff, [-1], axis=axis)
    forward = np.concatenate([diff, last], axis=axis)
    backward = np.concatenate([first, diff], axis=axis)
    return forward, backward
