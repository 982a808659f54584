"""Lie-group geometry of Kolmogorov-type operators.

A structure is fixed by the block ranks (m_0, ..., m_r), the superdiagonal drift blocks
B_1, ..., B_r and a reference diffusion matrix A0. Points z = (x, t) carry the group law
(x, t) o (xi, tau) = (xi + E(tau) x, t + tau) with E(tau) = exp(-tau B^T), the dilations
delta_lambda, the homogeneous norm and the quasidistance d(z, zeta) = ||zeta^-1 o z||.
Balls and cubes are left translates of the balls and boxes centred at the origin.
"""

import logging
import math
import threading
from dataclasses import dataclass
from itertools import product

import numpy as np
from scipy.stats import qmc

from ultraparabolic.errors import (
    EllipticityViolation,
    NonIncreasingRanks,
    NonPositiveLambda,
    NonPositiveRadius,
    NumericalError,
    RankDeficientBlock,
    ShapeMismatch,
)

logger = logging.getLogger(__name__)

_UNIT_BALL_LOCK = threading.Lock()
_UNIT_BALL_VOLUMES: dict[tuple, float] = {}


@dataclass(frozen=True, eq=False)
class KolmogorovStructure:
    """Validated block structure of the drift matrix.

    Build instances with :func:`build_structure`; the constructor does not validate.
    """

    blocks: tuple[int, ...]
    B: np.ndarray
    A0: np.ndarray
    Lambda: float

    @property
    def N(self) -> int:
        """Spatial dimension."""
        return int(sum(self.blocks))

    @property
    def r(self) -> int:
        """Index of the last block (nilpotency order of B is r + 1)."""
        return len(self.blocks) - 1

    @property
    def m0(self) -> int:
        """Number of diffusive directions."""
        return self.blocks[0]

    @property
    def alpha(self) -> np.ndarray:
        """Dilation exponent 2k + 1 of every spatial coordinate in block k."""
        return np.repeat([2.0 * k + 1.0 for k in range(len(self.blocks))], self.blocks)

    @property
    def exponents(self) -> np.ndarray:
        """Dilation exponents of all space-time axes (spatial ones, then 2 for time)."""
        return np.append(self.alpha, 2.0)

    @property
    def Q(self) -> int:
        """Homogeneous spatial dimension."""
        return int(sum((2 * k + 1) * m for k, m in enumerate(self.blocks)))

    @property
    def homogeneous_dimension(self) -> int:
        """Volume-scaling exponent Q + 2 of space-time balls."""
        return self.Q + 2

    @property
    def transport_axes(self) -> tuple[int, ...]:
        """Spatial axes that carry drift, i.e. nonzero columns of B."""
        return tuple(int(j) for j in np.flatnonzero(np.any(self.B != 0.0, axis=0)))

    @property
    def cache_key(self) -> tuple:
        """Hashable identity used by write-once caches."""
        return (self.blocks, self.B.tobytes(), self.A0.tobytes(), self.Lambda)


@dataclass(frozen=True, eq=False)
class SpaceTimePoint:
    """A point z = (x, t) in group coordinates."""

    x: np.ndarray
    t: float

    def __post_init__(self) -> None:
        x = np.atleast_1d(np.asarray(self.x, dtype=float)).copy()
        x.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "t", float(self.t))
        if not (np.all(np.isfinite(x)) and math.isfinite(self.t)):
            raise NumericalError(f"Point has non-finite components: x={x}, t={self.t}")

    @classmethod
    def of(cls, *coords: float) -> "SpaceTimePoint":
        """Build a point from flat coordinates (x_1, ..., x_N, t)."""
        return cls(x=np.asarray(coords[:-1], dtype=float), t=coords[-1])

    def as_array(self) -> np.ndarray:
        """Flat coordinates (x_1, ..., x_N, t)."""
        return np.append(self.x, self.t)


@dataclass(frozen=True, eq=False)
class GroupBall:
    """The ball B(center, radius) = {zeta : d(center, zeta) < radius}."""

    structure: KolmogorovStructure
    center: SpaceTimePoint
    radius: float

    def __post_init__(self) -> None:
        if not self.radius > 0:
            raise NonPositiveRadius(f"Ball radius must be positive, got {self.radius}")

    def contains(self, x: np.ndarray, t: np.ndarray) -> np.ndarray:
        """Membership mask for points given as x of shape (N, ...) and t of shape (...)."""
        return distance_field(self.structure, self.center, x, t) < self.radius

    @property
    def volume(self) -> float:
        return ball_volume(self.structure, self.radius)

    def scaled(self, factor: float) -> "GroupBall":
        """Concentric ball with radius multiplied by factor."""
        return GroupBall(self.structure, self.center, self.radius * factor)

    def bounding_box(self) -> tuple[np.ndarray, np.ndarray]:
        """Axis-aligned box (lower, upper) over x_1, ..., x_N, t enclosing the ball."""
        s = self.structure
        half = self.radius ** s.exponents
        return _translated_box_bounds(s, self.center, half, inverted=True)


@dataclass(frozen=True, eq=False)
class GroupCube:
    """The cube center o Q_R with per-axis half-widths of the box Q_R."""

    structure: KolmogorovStructure
    center: SpaceTimePoint
    R: float
    half_widths: np.ndarray

    def contains(self, x: np.ndarray, t: np.ndarray) -> np.ndarray:
        """Membership mask for points given as x of shape (N, ...) and t of shape (...)."""
        s = self.structure
        t = np.asarray(t, dtype=float)
        lag = t - self.center.t
        moved = _apply_flow(s, lag, _broadcast_point(self.center.x, t.ndim))
        w = np.asarray(x, dtype=float) - moved
        hw = self.half_widths[:-1].reshape((-1,) + (1,) * t.ndim)
        return np.all(np.abs(w) <= hw, axis=0) & (np.abs(lag) <= self.half_widths[-1])

    @property
    def intervals(self) -> list[tuple[float, float]]:
        """Per-axis intervals of the untranslated box, shifted to the center coordinates."""
        coords = self.center.as_array()
        return [(c - h, c + h) for c, h in zip(coords, self.half_widths, strict=True)]

    def bounding_box(self) -> tuple[np.ndarray, np.ndarray]:
        """Axis-aligned box enclosing the translated cube."""
        return _translated_box_bounds(self.structure, self.center, self.half_widths)


@dataclass(frozen=True)
class ContainmentConstant:
    """Measured constants of Q_{R/c0} in B_R in Q_{c0 R} at the origin."""

    inner: float
    outer: float
    c0: float


def build_structure(
    blocks: list[int] | tuple[int, ...],
    B_blocks: list,
    A0,
    Lambda: float,
) -> KolmogorovStructure:
    """Validate the block data and assemble the drift matrix.

    Args:
        blocks: Block ranks (m_0, ..., m_r).
        B_blocks: One m_{k-1} x m_k matrix per superdiagonal slot k = 1, ..., r.
        A0: Symmetric m_0 x m_0 reference diffusion matrix.
        Lambda: Ellipticity bound, at least 1.

    Returns:
        The validated structure.
    """
    blocks = tuple(int(m) for m in blocks)
    if not blocks or any(m < 1 for m in blocks):
        raise ShapeMismatch(f"Block ranks must be positive integers, got {blocks}")
    for k in range(1, len(blocks)):
        if blocks[k] > blocks[k - 1]:
            raise NonIncreasingRanks(
                f"Block rank m_{k}={blocks[k]} exceeds m_{k - 1}={blocks[k - 1]}"
            )
    if len(B_blocks) != len(blocks) - 1:
        raise ShapeMismatch(
            f"Expected {len(blocks) - 1} drift blocks for ranks {blocks}, got {len(B_blocks)}"
        )

    N = sum(blocks)
    offsets = np.concatenate([[0], np.cumsum(blocks)])
    B = np.zeros((N, N))
    for k, block in enumerate(B_blocks, start=1):
        block = np.atleast_2d(np.asarray(block, dtype=float))
        expected = (blocks[k - 1], blocks[k])
        if block.shape != expected:
            raise ShapeMismatch(f"Drift block B_{k} has shape {block.shape}, expected {expected}")
        if np.linalg.matrix_rank(block) != blocks[k]:
            raise RankDeficientBlock(f"Drift block B_{k} does not have rank {blocks[k]}")
        B[offsets[k - 1] : offsets[k], offsets[k] : offsets[k + 1]] = block

    A0 = np.atleast_2d(np.asarray(A0, dtype=float))
    if A0.shape != (blocks[0], blocks[0]):
        raise ShapeMismatch(f"A0 has shape {A0.shape}, expected {(blocks[0], blocks[0])}")
    if not np.allclose(A0, A0.T, atol=1e-12):
        raise ShapeMismatch("A0 must be symmetric")
    check_ellipticity(A0, Lambda)

    B.setflags(write=False)
    A0 = A0.copy()
    A0.setflags(write=False)
    structure = KolmogorovStructure(blocks=blocks, B=B, A0=A0, Lambda=float(Lambda))
    logger.debug("Built structure blocks=%s Q=%d", blocks, structure.Q)
    return structure


def check_ellipticity(A: np.ndarray, Lambda: float) -> None:
    """Raise EllipticityViolation unless the spectrum of A lies in [1/Lambda, Lambda]."""
    if Lambda < 1:
        raise EllipticityViolation(f"Lambda must be at least 1, got {Lambda}")
    eigenvalues = np.linalg.eigvalsh(np.atleast_2d(A))
    slack = 1e-12 * Lambda
    if eigenvalues.min() < 1.0 / Lambda - slack or eigenvalues.max() > Lambda + slack:
        raise EllipticityViolation(
            f"Eigenvalues {eigenvalues} lie outside [{1.0 / Lambda}, {Lambda}]"
        )


def prototype_structure(Lambda: float = 2.0) -> KolmogorovStructure:
    """The two-dimensional Kolmogorov structure, blocks (1, 1) with B_1 = [1]."""
    return build_structure([1, 1], [[[1.0]]], [[1.0]], Lambda)


def exp_neg_BT(s: KolmogorovStructure, tau: float) -> np.ndarray:
    """E(tau) = exp(-tau B^T) as the finite nilpotent series."""
    step = -tau * s.B.T
    result = np.eye(s.N)
    term = np.eye(s.N)
    for k in range(1, s.r + 1):
        term = term @ step / k
        result = result + term
    return result


def compose(s: KolmogorovStructure, z: SpaceTimePoint, zeta: SpaceTimePoint) -> SpaceTimePoint:
    """Group product z o zeta = (xi + E(tau) x, t + tau)."""
    return SpaceTimePoint(zeta.x + exp_neg_BT(s, zeta.t) @ z.x, z.t + zeta.t)


def invert(s: KolmogorovStructure, z: SpaceTimePoint) -> SpaceTimePoint:
    """Group inverse (-E(-t) x, -t)."""
    return SpaceTimePoint(-exp_neg_BT(s, -z.t) @ z.x, -z.t)


def dilate(s: KolmogorovStructure, lam: float, z: SpaceTimePoint) -> SpaceTimePoint:
    """Anisotropic dilation x_j -> lam^alpha_j x_j, t -> lam^2 t."""
    if not lam > 0:
        raise NonPositiveLambda(f"Dilation factor must be positive, got {lam}")
    return SpaceTimePoint(z.x * lam**s.alpha, z.t * lam**2)


def hnorm(s: KolmogorovStructure, z: SpaceTimePoint) -> float:
    """Homogeneous norm sum_j |x_j|^(1/alpha_j) + |t|^(1/2)."""
    return float(np.sum(np.abs(z.x) ** (1.0 / s.alpha)) + math.sqrt(abs(z.t)))


def qdist(s: KolmogorovStructure, z: SpaceTimePoint, zeta: SpaceTimePoint) -> float:
    """Quasidistance d(z, zeta) = ||zeta^-1 o z||."""
    return hnorm(s, compose(s, invert(s, zeta), z))


def gauge(s: KolmogorovStructure, w: np.ndarray, lag: np.ndarray) -> np.ndarray:
    """Vectorised homogeneous norm for w of shape (N, ...) and lag of shape (...)."""
    lag = np.asarray(lag, dtype=float)
    exponents = (1.0 / s.alpha).reshape((-1,) + (1,) * lag.ndim)
    return np.sum(np.abs(w) ** exponents, axis=0) + np.sqrt(np.abs(lag))


def distance_field(
    s: KolmogorovStructure, center: SpaceTimePoint, x: np.ndarray, t: np.ndarray
) -> np.ndarray:
    """d(center, zeta) for every zeta = (x, t), x of shape (N, ...) and t of shape (...).

    The relative point is zeta^-1 o center = (x0 - E(t0 - tau) xi, t0 - tau).
    """
    t = np.asarray(t, dtype=float)
    lag = center.t - t
    moved = _apply_flow(s, lag, np.asarray(x, dtype=float))
    w = _broadcast_point(center.x, t.ndim) - moved
    return gauge(s, w, lag)


def pairwise_qdist(
    s: KolmogorovStructure, z: np.ndarray, zeta: np.ndarray
) -> np.ndarray:
    """d(z_i, zeta_i) for rows of two (n, N + 1) coordinate arrays."""
    lag = z[:, -1] - zeta[:, -1]
    w = z[:, :-1].T - _apply_flow(s, lag, zeta[:, :-1].T)
    return gauge(s, w, lag)


def ball_volume(s: KolmogorovStructure, R: float) -> float:
    """|B(z0, R)| = |B(0, 1)| R^(Q+2)."""
    if not R > 0:
        raise NonPositiveRadius(f"Radius must be positive, got {R}")
    return unit_ball_volume(s) * R ** s.homogeneous_dimension


def unit_ball_volume(s: KolmogorovStructure, n_points: int = 2**16, seed: int = 0) -> float:
    """Quasi-Monte-Carlo estimate of |B(0, 1)|, cached per structure.

    The substitution |y_j| = u_j^a_j maps the unit gauge ball onto the standard simplex,
    where the integrand prod_j a_j u_j^(a_j - 1) is a smooth polynomial. Scrambled Sobol
    points are pushed onto the simplex through normalised exponential spacings.
    """
    key = (s.cache_key, n_points, seed)
    with _UNIT_BALL_LOCK:
        if key in _UNIT_BALL_VOLUMES:
            return _UNIT_BALL_VOLUMES[key]
        exponents = s.exponents
        d = exponents.size
        m = max(1, math.ceil(math.log2(n_points)))
        uniform = qmc.Sobol(d=d + 1, scramble=True, seed=seed).random_base2(m)
        spacings = -np.log1p(-uniform)
        u = spacings[:, :d] / spacings.sum(axis=1, keepdims=True)
        weights = np.prod(exponents * u ** (exponents - 1.0), axis=1)
        volume = float(2.0**d / math.factorial(d) * weights.mean())
        _UNIT_BALL_VOLUMES[key] = volume
        logger.debug("Cached |B(0,1)| = %.6g for blocks %s", volume, s.blocks)
        return volume


def rasterized_unit_ball_volume(s: KolmogorovStructure, cells: int) -> float:
    """Count cell centers of a uniform grid on [-1, 1]^(N+1) inside the unit gauge ball."""
    h = 2.0 / cells
    centers = -1.0 + h * (np.arange(cells) + 0.5)
    spatial = np.meshgrid(*([centers] * s.N), indexing="ij")
    partial = sum(np.abs(c) ** (1.0 / a) for c, a in zip(spatial, s.alpha, strict=True))
    count = 0
    for t in centers:
        count += int(np.count_nonzero(partial + math.sqrt(abs(t)) < 1.0))
    return count * h ** (s.N + 1)


def cube_bounds(s: KolmogorovStructure, center: SpaceTimePoint, R: float) -> GroupCube:
    """The cube Q_R(center) with half-widths R, (Lambda N^2 R)^(2k+1) and R^2 / 2."""
    if not R > 0:
        raise NonPositiveRadius(f"Cube radius must be positive, got {R}")
    scale = s.Lambda * s.N**2 * R
    half = np.array([R if a == 1.0 else scale**a for a in s.alpha] + [R**2 / 2.0])
    return GroupCube(structure=s, center=center, R=float(R), half_widths=half)


def cube_gauge(s: KolmogorovStructure, y: np.ndarray) -> np.ndarray:
    """Smallest R with y in Q_R(0) for rows of an (n, N + 1) array."""
    scale = s.Lambda * s.N**2
    spatial = np.abs(y[:, :-1])
    ratios = np.where(s.alpha == 1.0, spatial, spatial ** (1.0 / s.alpha) / scale)
    return np.maximum(ratios.max(axis=1), np.sqrt(2.0 * np.abs(y[:, -1])))


def measure_c0(
    s: KolmogorovStructure, n_points: int = 2**14, seed: int = 0, margin: float = 0.02
) -> ContainmentConstant:
    """Measure c0 with Q_{R/c0}(0) in B_R(0) in Q_{c0 R}(0).

    ``inner`` is the largest distance from the origin over the unit cube, ``outer`` the
    largest cube gauge over the unit ball; c0 inflates their maximum by ``margin``.
    """
    d = s.N + 1
    m = max(1, math.ceil(math.log2(n_points)))
    half = cube_bounds(s, SpaceTimePoint(np.zeros(s.N), 0.0), 1.0).half_widths
    samples = qmc.Sobol(d=d, scramble=True, seed=seed).random_base2(m)
    corners = np.array(list(product([0.0, 1.0], repeat=d)))
    cube_points = (2.0 * np.vstack([samples, corners]) - 1.0) * half
    inner = float(np.max(_inverse_gauge(s, cube_points)))

    exponents = s.exponents
    spacings = -np.log1p(-qmc.Sobol(d=d + 1, scramble=True, seed=seed + 1).random_base2(m))
    interior = spacings[:, :d] / spacings.sum(axis=1, keepdims=True)
    boundary = spacings[:, :d] / spacings[:, :d].sum(axis=1, keepdims=True)
    signs = np.where(qmc.Sobol(d=d, scramble=True, seed=seed + 2).random_base2(m) < 0.5, -1, 1)
    norm_ball = np.vstack([interior, boundary]) ** exponents * np.vstack([signs, signs])
    ball_points = _invert_rows(s, norm_ball)
    outer = float(np.max(cube_gauge(s, ball_points)))

    c0 = (1.0 + margin) * max(inner, outer)
    logger.info("Measured c0=%.4g (inner %.4g, outer %.4g)", c0, inner, outer)
    return ContainmentConstant(inner=inner, outer=outer, c0=c0)


def quasi_symmetry_constant(
    s: KolmogorovStructure, n_pairs: int, seed: int = 0, box: float = 1.0
) -> float:
    """Sampled sup of d(z, zeta) / d(zeta, z) over uniform pairs in [-box, box]^(N+1).

    Samples are nested: the first n pairs are the same for every n at a fixed seed.
    """
    d = s.N + 1
    points = np.random.default_rng(seed).uniform(-box, box, size=(n_pairs, 2 * d))
    z, zeta = points[:, :d], points[:, d:]
    forward = pairwise_qdist(s, z, zeta)
    backward = pairwise_qdist(s, zeta, z)
    valid = backward > 0
    return float(np.max(forward[valid] / backward[valid]))


def quasi_triangle_constant(
    s: KolmogorovStructure, n_triples: int, seed: int = 0, box: float = 1.0
) -> float:
    """Sampled sup of d(z, zeta) / (d(z, z') + d(z', zeta)) over uniform triples.

    The intermediate point z' is sampled independently of both ends.
    """
    d = s.N + 1
    points = np.random.default_rng(seed).uniform(-box, box, size=(n_triples, 3 * d))
    z, mid, zeta = points[:, :d], points[:, d : 2 * d], points[:, 2 * d :]
    direct = pairwise_qdist(s, z, zeta)
    detour = pairwise_qdist(s, z, mid) + pairwise_qdist(s, mid, zeta)
    valid = detour > 0
    return float(np.max(direct[valid] / detour[valid]))


def group_diameter(s: KolmogorovStructure, lower, upper) -> float:
    """Largest quasidistance between corners of an axis-aligned space-time box."""
    corners = np.array(list(product(*zip(lower, upper, strict=True))), dtype=float)
    n = corners.shape[0]
    left = np.repeat(corners, n, axis=0)
    right = np.tile(corners, (n, 1))
    return float(np.max(pairwise_qdist(s, left, right)))


def _apply_flow(s: KolmogorovStructure, tau: np.ndarray, vectors: np.ndarray) -> np.ndarray:
    """Apply E(tau) to vectors of shape (N, ...) with per-point tau of shape (...)."""
    tau = np.asarray(tau, dtype=float)
    vectors = np.broadcast_to(vectors, (s.N,) + np.broadcast_shapes(vectors.shape[1:], tau.shape))
    result = np.array(vectors, dtype=float)
    term = result.copy()
    for k in range(1, s.r + 1):
        term = np.tensordot(s.B.T, term, axes=1) * (-tau) / k
        result = result + term
    return result


def _broadcast_point(x: np.ndarray, ndim: int) -> np.ndarray:
    return np.asarray(x, dtype=float).reshape((-1,) + (1,) * ndim)


def _invert_rows(s: KolmogorovStructure, y: np.ndarray) -> np.ndarray:
    """Group inverse of each row of an (n, N + 1) array."""
    lag = -y[:, -1]
    x = -_apply_flow(s, lag, y[:, :-1].T)
    return np.column_stack([x.T, lag])


def _inverse_gauge(s: KolmogorovStructure, y: np.ndarray) -> np.ndarray:
    inverse = _invert_rows(s, y)
    return gauge(s, inverse[:, :-1].T, inverse[:, -1])


def _translated_box_bounds(
    s: KolmogorovStructure,
    center: SpaceTimePoint,
    half: np.ndarray,
    inverted: bool = False,
    samples_per_axis: int = 9,
) -> tuple[np.ndarray, np.ndarray]:
    """Bounding box of center o Y, where Y is the box with the given half-widths.

    With ``inverted`` the set is center o Y^-1, which contains the ball of the same
    radius. Extremes are taken over a lattice that includes the corners.
    """
    axes = [np.linspace(-h, h, samples_per_axis) for h in half]
    lattice = np.array(np.meshgrid(*axes, indexing="ij")).reshape(len(half), -1).T
    if inverted:
        lattice = _invert_rows(s, lattice)
    lag = lattice[:, -1]
    moved = _apply_flow(s, lag, center.x.reshape(-1, 1))
    points = np.column_stack([(lattice[:, :-1].T + moved).T, lag + center.t])
    return points.min(axis=0), points.max(axis=0)
