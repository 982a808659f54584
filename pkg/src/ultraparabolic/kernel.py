"""Fundamental solution of the frozen constant-coefficient operator.

The covariance C(t) = int_0^t E(s) A0 E(s)^T ds is computed by Gauss-Legendre quadrature,
which is exact because the integrand is polynomial, and cross-checked against the Van Loan
block exponential. Gamma_0 is the Gaussian transition density with mean E(t - tau) xi and
covariance 2 C(t - tau). Convolutions against Gamma_0 are evaluated lag by lag: each source
time slice is blurred with the Gaussian of the lag in Fourier space and sampled at the
transported points.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.fft
from scipy import integrate, linalg, ndimage

from ultraparabolic.errors import (
    EmptyGrid,
    NonPositiveHorizon,
    NonPositiveTime,
    NumericalError,
    ShapeMismatch,
    SingularCovariance,
)
from ultraparabolic.grid import GridFunction
from ultraparabolic.spaces import derivatives, lp_norm
from ultraparabolic.structure import (
    KolmogorovStructure,
    SpaceTimePoint,
    _apply_flow,
    check_ellipticity,
    compose,
    dilate,
    exp_neg_BT,
)

logger = logging.getLogger(__name__)

CONVOLUTION_MODES = ("plain", "d0_of_argument")
CROSS_CHECK_TOLERANCE = 1e-9
PATH_CHUNK = 4096


@dataclass(frozen=True, eq=False)
class FrozenKernel:
    """Constant-coefficient operator with principal part frozen at a point."""

    structure: KolmogorovStructure
    A0_frozen: np.ndarray

    def __post_init__(self) -> None:
        A = np.atleast_2d(np.asarray(self.A0_frozen, dtype=float))
        m0 = self.structure.m0
        if A.shape != (m0, m0):
            raise ShapeMismatch(f"Frozen matrix has shape {A.shape}, expected {(m0, m0)}")
        check_ellipticity(A, self.structure.Lambda)
        object.__setattr__(self, "A0_frozen", A)

    @classmethod
    def of(cls, s: KolmogorovStructure, A0=None) -> "FrozenKernel":
        """Kernel frozen at A0, defaulting to the structure's reference matrix."""
        return cls(structure=s, A0_frozen=s.A0 if A0 is None else A0)

    @property
    def Atilde(self) -> np.ndarray:
        """N x N embedding of the frozen matrix in the top-left block."""
        s = self.structure
        A = np.zeros((s.N, s.N))
        A[: s.m0, : s.m0] = self.A0_frozen
        return A

    @cached_property
    def unit(self) -> "CovarianceResult":
        """C(1), the seed of the dilation identity C(t) = D_sqrt(t) C(1) D_sqrt(t)."""
        return covariance(self, 1.0)

    @cached_property
    def noise_factor(self) -> np.ndarray:
        """Lower-triangular L with L L^T = A0_frozen."""
        return np.linalg.cholesky(self.A0_frozen)


@dataclass(frozen=True)
class CovarianceResult:
    """C(t) with its determinant and inverse."""

    t: float
    C: np.ndarray
    detC: float
    Cinv: np.ndarray


@dataclass(frozen=True)
class PathEnsemble:
    """Endpoints of Euler-Maruyama paths started at one point."""

    start: SpaceTimePoint
    horizon: float
    n_steps: int
    seed: int
    endpoints: np.ndarray

    @property
    def mean(self) -> np.ndarray:
        return self.endpoints.mean(axis=0)

    @property
    def covariance(self) -> np.ndarray:
        return np.cov(self.endpoints, rowvar=False)

    @property
    def mean_standard_error(self) -> np.ndarray:
        return self.endpoints.std(axis=0, ddof=1) / math.sqrt(self.endpoints.shape[0])

    @property
    def covariance_standard_error(self) -> np.ndarray:
        """Normal-theory standard error (S_ii S_jj + S_ij^2) / n of each covariance entry."""
        S = self.covariance
        diag = np.diag(S)
        return np.sqrt((np.outer(diag, diag) + S**2) / self.endpoints.shape[0])


def covariance(k: FrozenKernel, t: float, cross_check: bool = True) -> CovarianceResult:
    """C(t) by exact Gauss-Legendre quadrature, verified against the Van Loan exponential."""
    if not t > 0:
        raise NonPositiveTime(f"Covariance needs t > 0, got {t}")
    s = k.structure
    nodes, weights = np.polynomial.legendre.leggauss(s.r + 2)
    C = np.zeros((s.N, s.N))
    for node, weight in zip(nodes, weights, strict=True):
        E = exp_neg_BT(s, 0.5 * t * (node + 1.0))
        C += 0.5 * t * weight * (E @ k.Atilde @ E.T)
    C = 0.5 * (C + C.T)

    if cross_check:
        C_vl = covariance_van_loan(k, t)
        gap = np.abs(C - C_vl).max() / np.abs(C).max()
        if gap > CROSS_CHECK_TOLERANCE:
            raise NumericalError(f"Covariance paths disagree at t={t}: relative gap {gap:.2e}")

    try:
        chol = np.linalg.cholesky(C)
    except np.linalg.LinAlgError as exc:
        raise SingularCovariance(f"C({t}) is not positive definite") from exc
    detC = float(np.prod(np.diag(chol)) ** 2)
    if not detC > 0:
        raise SingularCovariance(f"C({t}) has determinant {detC}")
    Cinv = linalg.cho_solve((chol, True), np.eye(s.N))
    return CovarianceResult(t=float(t), C=C, detC=detC, Cinv=0.5 * (Cinv + Cinv.T))


def covariance_van_loan(k: FrozenKernel, t: float) -> np.ndarray:
    """C(t) = G(t) exp(-t B), G the top-right block of exp(t [[-B^T, A~], [0, B]])."""
    s = k.structure
    n = s.N
    block = np.zeros((2 * n, 2 * n))
    block[:n, :n] = -s.B.T
    block[:n, n:] = k.Atilde
    block[n:, n:] = s.B
    G = linalg.expm(t * block)[:n, n:]
    C = G @ linalg.expm(-t * s.B)
    return 0.5 * (C + C.T)


def gamma0(k: FrozenKernel, z: SpaceTimePoint, zeta: SpaceTimePoint) -> float:
    """Gamma_0(z, zeta); zero when t <= tau."""
    lag = z.t - zeta.t
    if lag <= 0:
        return 0.0
    w = z.x - exp_neg_BT(k.structure, lag) @ zeta.x
    return float(density(k, w, np.asarray(lag)))


def grad0_gamma0(k: FrozenKernel, z: SpaceTimePoint, zeta: SpaceTimePoint) -> np.ndarray:
    """The first m_0 components of the x-gradient of Gamma_0(., zeta) at z."""
    lag = z.t - zeta.t
    if lag <= 0:
        return np.zeros(k.structure.m0)
    w = z.x - exp_neg_BT(k.structure, lag) @ zeta.x
    return density_gradient0(k, w, np.asarray(lag))


def density(k: FrozenKernel, w: np.ndarray, lag: np.ndarray) -> np.ndarray:
    """Gamma_0 at translated points (w, lag); w has shape (N, ...) and lag shape (...)."""
    log_value, _ = _log_density(k, w, lag)
    return np.where(lag > 0, np.exp(log_value), 0.0)


def density_gradient0(k: FrozenKernel, w: np.ndarray, lag: np.ndarray) -> np.ndarray:
    """-1/2 (C^-1 w)_i Gamma_0 for i < m_0, shape (m_0, ...)."""
    s = k.structure
    log_value, whitened = _log_density(k, w, lag)
    safe = np.where(lag > 0, lag, 1.0)
    projected = np.tensordot(k.unit.Cinv, whitened, axes=1)[: s.m0] / np.sqrt(safe)
    return np.where(lag > 0, -0.5 * projected * np.exp(log_value), 0.0)


def gamma_field(
    k: FrozenKernel, x: np.ndarray, t: np.ndarray, zeta: SpaceTimePoint
) -> np.ndarray:
    """Gamma_0((x, t), zeta) at every point of a meshgrid."""
    t = np.asarray(t, dtype=float)
    lag = t - zeta.t
    moved = _apply_flow(k.structure, lag, zeta.x.reshape((-1,) + (1,) * t.ndim))
    return density(k, np.asarray(x) - moved, lag)


def gaussian_spread(k: FrozenKernel, lag: float) -> np.ndarray:
    """Covariance 2 E(-s) C(s) E(-s)^T of the source variable xi at lag s."""
    s = k.structure
    scale = np.sqrt(lag) ** s.alpha
    C = scale[:, None] * k.unit.C * scale[None, :]
    E = exp_neg_BT(s, -lag)
    return 2.0 * E @ C @ E.T


def gamma_convolve(
    k: FrozenKernel,
    f: GridFunction,
    mode: str = "plain",
    component: int = 0,
    threads: int = 1,
) -> GridFunction:
    """Gamma_0(f)(z) = integral Gamma_0(z, zeta) f(zeta) d zeta on the grid of f.

    With ``mode='d0_of_argument'`` the operand is the discrete d/dx_component of f.
    The time integral uses Simpson's rule over source slices up to the output time.
    """
    operand = _operand(k, f, mode, component)
    blur = _SliceBlur(k, operand, threads)
    n_t = operand.shape[-1]
    taus = operand.times
    result = np.zeros(operand.shape)
    for i in range(1, n_t):
        samples = np.stack([blur.sample_lag(j, i - j) for j in range(i + 1)])
        result[..., i] = integrate.simpson(samples, x=taus[: i + 1], axis=0).reshape(
            operand.shape[:-1]
        )
    logger.info("Convolved '%s' (%s) on grid %s", f.name, mode, operand.shape)
    return f.with_values(result, name=f"Gamma0[{mode}]({f.name})", convolution=mode)


def gamma_convolve_at(
    k: FrozenKernel,
    f: GridFunction,
    points: np.ndarray,
    mode: str = "plain",
    component: int = 0,
) -> np.ndarray:
    """Gamma_0(f) at arbitrary rows (x_1, ..., x_N, t) of a points array."""
    operand = _operand(k, f, mode, component)
    blur = _SliceBlur(k, operand, threads=1)
    taus = operand.times
    values = []
    for point in np.atleast_2d(points):
        x, t = point[:-1], point[-1]
        earlier = np.flatnonzero(taus < t)
        if earlier.size == 0:
            values.append(0.0)
            continue
        integrand = [blur.sample_at(j, t - taus[j], x) for j in earlier]
        integrand.append(float(operand.sample(point[None, :])[0]))
        nodes = np.append(taus[earlier], t)
        values.append(float(integrate.simpson(np.array(integrand), x=nodes)))
    return np.array(values)


def potential_exponent(s: KolmogorovStructure, order: float, p: float) -> float:
    """Target exponent q with 1/q = 1/p - order / (Q + 2) for a kernel of degree order - Q - 2."""
    inverse = 1.0 / p - order / s.homogeneous_dimension
    if inverse <= 0:
        raise NumericalError(f"No finite target exponent for p={p}, order={order}")
    return 1.0 / inverse


def young_ratio(k: FrozenKernel, f: GridFunction, mode: str = "plain", threads: int = 1) -> float:
    """Empirical constant of the convolution bound on the grid box.

    ``plain``: ||Gamma_0(f)||_q / ||f||_p with p = 2(Q+2)/(Q+4), q = 2(Q+2)/Q.
    ``d0_of_argument``: ||Gamma_0(D_0 f)||_2 / ||f||_p.
    """
    s = k.structure
    p = 2.0 * s.homogeneous_dimension / (s.Q + 4)
    denominator = lp_norm(f, p)
    if denominator == 0:
        return 0.0
    if mode == "plain":
        q = potential_exponent(s, 2.0, p)
        return lp_norm(gamma_convolve(k, f, "plain", threads=threads), q) / denominator
    total = sum(
        lp_norm(gamma_convolve(k, f, mode, component=i, threads=threads), 2.0) ** 2
        for i in range(s.m0)
    )
    return math.sqrt(total) / denominator


def sample_paths(
    k: FrozenKernel,
    start: SpaceTimePoint,
    horizon: float,
    n_paths: int,
    n_steps: int,
    seed: int,
    threads: int = 1,
) -> PathEnsemble:
    """Euler-Maruyama endpoints of dX = -B^T X dt + sqrt(2 A~) dW from start.

    Paths are generated in fixed chunks, chunk c drawing from the generator seeded by
    (seed, c), so results do not depend on the thread count.
    """
    if not horizon > 0:
        raise NonPositiveHorizon(f"Horizon must be positive, got {horizon}")
    if n_paths < 1 or n_steps < 1:
        raise NumericalError("Need at least one path and one step")
    s = k.structure
    dt = horizon / n_steps
    factor = math.sqrt(2.0 * dt) * k.noise_factor.T

    def run_chunk(chunk: int) -> np.ndarray:
        size = min(PATH_CHUNK, n_paths - chunk * PATH_CHUNK)
        rng = np.random.default_rng([seed, chunk])
        X = np.tile(start.x, (size, 1))
        for _ in range(n_steps):
            drift = -(X @ s.B)
            X = X + dt * drift
            X[:, : s.m0] += rng.standard_normal((size, s.m0)) @ factor
        return X

    chunks = range(math.ceil(n_paths / PATH_CHUNK))
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        endpoints = np.vstack(list(pool.map(run_chunk, chunks)))
    return PathEnsemble(
        start=start, horizon=horizon, n_steps=n_steps, seed=seed, endpoints=endpoints
    )


def kernel_mass(k: FrozenKernel, t: float, epsrel: float = 1e-9) -> float:
    """Adaptive quadrature of Gamma_0((x, t), 0) over x, truncated at 12 standard deviations."""
    s = k.structure
    zero = SpaceTimePoint(np.zeros(s.N), 0.0)
    spread = 12.0 * np.sqrt(2.0 * np.diag(covariance(k, t).C))

    def integrand(*x: float) -> float:
        return gamma0(k, SpaceTimePoint(np.asarray(x), t), zero)

    value, _ = integrate.nquad(
        integrand, [(-w, w) for w in spread], opts={"epsrel": epsrel, "epsabs": 0.0}
    )
    return float(value)


def homogeneity_error(k: FrozenKernel, z: SpaceTimePoint, lam: float) -> tuple[float, float]:
    """Relative errors of Gamma_0 (degree -Q) and its D_0 gradient (degree -Q-1) under dilation."""
    s = k.structure
    zero = SpaceTimePoint(np.zeros(s.N), 0.0)
    scaled = dilate(s, lam, z)
    base = gamma0(k, z, zero)
    value_error = abs(gamma0(k, scaled, zero) * lam**s.Q - base) / base
    grad = grad0_gamma0(k, z, zero)
    grad_scaled = grad0_gamma0(k, scaled, zero) * lam ** (s.Q + 1)
    grad_error = float(np.max(np.abs(grad_scaled - grad)) / max(np.max(np.abs(grad)), 1e-300))
    return float(value_error), grad_error


def left_invariance_error(
    k: FrozenKernel, w: SpaceTimePoint, z: SpaceTimePoint, zeta: SpaceTimePoint
) -> float:
    """|Gamma_0(w o z, w o zeta) - Gamma_0(z, zeta)| relative to Gamma_0(z, zeta)."""
    s = k.structure
    base = gamma0(k, z, zeta)
    moved = gamma0(k, compose(s, w, z), compose(s, w, zeta))
    return abs(moved - base) / max(base, 1e-300)


def chapman_kolmogorov_error(
    k: FrozenKernel, z: SpaceTimePoint, mid_time: float, zeta: SpaceTimePoint
) -> float:
    """Relative error of int Gamma_0(z, (y, s)) Gamma_0((y, s), zeta) dy = Gamma_0(z, zeta)."""
    s = k.structure
    lag = mid_time - zeta.t
    mean = exp_neg_BT(s, lag) @ zeta.x
    width = 10.0 * np.sqrt(2.0 * np.diag(covariance(k, lag).C))

    def integrand(*y: float) -> float:
        middle = SpaceTimePoint(np.asarray(y), mid_time)
        return gamma0(k, z, middle) * gamma0(k, middle, zeta)

    value, _ = integrate.nquad(
        integrand,
        [(m - w, m + w) for m, w in zip(mean, width, strict=True)],
        opts={"epsrel": 1e-10, "epsabs": 0.0},
    )
    exact = gamma0(k, z, zeta)
    return abs(value - exact) / exact


def gradient_fd_error(
    k: FrozenKernel, z: SpaceTimePoint, zeta: SpaceTimePoint, h: float = 1e-4
) -> float:
    """Relative gap between grad0_gamma0 and central differences of gamma0."""
    s = k.structure
    analytic = grad0_gamma0(k, z, zeta)
    numeric = np.zeros(s.m0)
    for i in range(s.m0):
        step = np.zeros(s.N)
        step[i] = h
        plus = gamma0(k, SpaceTimePoint(z.x + step, z.t), zeta)
        minus = gamma0(k, SpaceTimePoint(z.x - step, z.t), zeta)
        numeric[i] = (plus - minus) / (2.0 * h)
    return float(np.max(np.abs(numeric - analytic)) / np.max(np.abs(analytic)))


def moment_check(
    k: FrozenKernel,
    start: SpaceTimePoint,
    horizon: float,
    n_paths: int,
    n_steps: int,
    seed: int,
    threads: int = 1,
) -> dict:
    """Compare Monte Carlo endpoint moments with E(t) x0 and 2 C(t).

    Returns deviations in units of standard errors; the covariance deviation first
    subtracts an Euler allowance of 2 dt times the largest covariance entry.
    """
    s = k.structure
    ensemble = sample_paths(k, start, horizon, n_paths, n_steps, seed, threads)
    mean_exact = exp_neg_BT(s, horizon) @ start.x
    cov_exact = 2.0 * covariance(k, horizon).C
    allowance = 2.0 * (horizon / n_steps) * np.abs(cov_exact).max()
    mean_z = np.abs(ensemble.mean - mean_exact) / ensemble.mean_standard_error
    excess = np.maximum(np.abs(ensemble.covariance - cov_exact) - allowance, 0.0)
    cov_z = excess / ensemble.covariance_standard_error
    return {
        "mean": ensemble.mean.tolist(),
        "mean_exact": mean_exact.tolist(),
        "covariance": ensemble.covariance.tolist(),
        "covariance_exact": cov_exact.tolist(),
        "mean_z": float(mean_z.max()),
        "covariance_z": float(cov_z.max()),
        "passed": bool(mean_z.max() <= 3.0 and cov_z.max() <= 3.0),
    }


def _operand(k: FrozenKernel, f: GridFunction, mode: str, component: int) -> GridFunction:
    if mode not in CONVOLUTION_MODES:
        raise NumericalError(f"Unknown convolution mode '{mode}'")
    if f.values.size == 0:
        raise EmptyGrid("Cannot convolve an empty grid")
    if mode == "plain":
        return f
    return derivatives(k.structure, f).d0[component]


def _log_density(
    k: FrozenKernel, w: np.ndarray, lag: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """log Gamma_0 and the whitened vector D_sqrt(lag)^-1 w, using the dilation identity."""
    s = k.structure
    lag = np.asarray(lag, dtype=float)
    safe = np.where(lag > 0, lag, 1.0)
    scale = safe[None, ...] ** (s.alpha.reshape((-1,) + (1,) * lag.ndim) / 2.0)
    whitened = np.asarray(w, dtype=float) / scale
    quadratic = np.einsum("i...,ij,j...->...", whitened, k.unit.Cinv, whitened)
    log_value = (
        -0.5 * s.N * math.log(4.0 * math.pi)
        - 0.5 * math.log(k.unit.detC)
        - 0.5 * s.Q * np.log(safe)
        - 0.25 * quadratic
    )
    return log_value, whitened


class _SliceBlur:
    """Gaussian blurs of source time slices in Fourier space, sampled at transported points."""

    def __init__(self, k: FrozenKernel, f: GridFunction, threads: int) -> None:
        self.kernel = k
        self.f = f
        self.threads = max(1, threads)
        spatial_shape = f.shape[:-1]
        self.h = np.asarray(f.spacing[:-1])
        span = f.upper[-1] - f.lower[-1]
        widest = np.max(
            [np.sqrt(np.diag(gaussian_spread(k, lag))) for lag in np.linspace(0.0, span, 9)[1:]],
            axis=0,
        )
        self.pad = np.ceil(5.0 * widest / self.h).astype(int) + 2
        self.padded_shape = tuple(
            scipy.fft.next_fast_len(int(n + 2 * p))
            for n, p in zip(spatial_shape, self.pad, strict=True)
        )
        axes = tuple(range(len(spatial_shape)))
        frequencies = [
            2.0 * np.pi * scipy.fft.fftfreq(n, d=h)
            for n, h in zip(self.padded_shape[:-1], self.h[:-1], strict=True)
        ]
        frequencies.append(2.0 * np.pi * scipy.fft.rfftfreq(self.padded_shape[-1], d=self.h[-1]))
        self.wavenumbers = np.meshgrid(*frequencies, indexing="ij")
        self.spectra = []
        for j in range(f.shape[-1]):
            padded = np.zeros(self.padded_shape)
            inner = tuple(slice(p, p + n) for p, n in zip(self.pad, spatial_shape, strict=True))
            padded[inner] = f.values[..., j]
            self.spectra.append(
                scipy.fft.rfftn(padded, s=self.padded_shape, axes=axes, workers=self.threads)
            )
        self.axes = axes
        x, _ = f.coordinates(tuple(slice(None) for _ in f.shape[:-1]) + (slice(0, 1),))
        self.grid_x = x[..., 0]
        self._lag_cache: dict[int, tuple[np.ndarray, list[np.ndarray]]] = {}

    def _multiplier(self, lag: float) -> np.ndarray:
        spread = gaussian_spread(self.kernel, lag)
        exponent = sum(
            spread[a, b] * self.wavenumbers[a] * self.wavenumbers[b]
            for a in range(len(self.wavenumbers))
            for b in range(len(self.wavenumbers))
        )
        return np.exp(-0.5 * exponent)

    def _blurred(self, j: int, multiplier: np.ndarray) -> np.ndarray:
        return scipy.fft.irfftn(
            self.spectra[j] * multiplier, s=self.padded_shape, axes=self.axes, workers=self.threads
        )

    def _indices(self, points: np.ndarray) -> list[np.ndarray]:
        """Fractional padded-array indices of spatial points of shape (N, ...)."""
        lower = np.asarray(self.f.lower[:-1])
        return [
            (points[a] - lower[a]) / self.h[a] - 0.5 + self.pad[a] for a in range(points.shape[0])
        ]

    def sample_lag(self, j: int, lag_index: int) -> np.ndarray:
        """Blurred slice j at lag lag_index * h_t, sampled at E(-lag) x for every grid x."""
        if lag_index == 0:
            return self.f.values[..., j].ravel()
        if lag_index not in self._lag_cache:
            lag = lag_index * self.f.spacing[-1]
            moved = _apply_flow(self.kernel.structure, np.asarray(-lag), self.grid_x)
            self._lag_cache[lag_index] = (self._multiplier(lag), self._indices(moved))
        multiplier, indices = self._lag_cache[lag_index]
        blurred = self._blurred(j, multiplier)
        coords = [c.ravel() for c in indices]
        return ndimage.map_coordinates(blurred, coords, order=3, mode="grid-constant")

    def sample_at(self, j: int, lag: float, x: np.ndarray) -> float:
        """Blurred slice j at an arbitrary lag, sampled at E(-lag) x for one point x."""
        moved = exp_neg_BT(self.kernel.structure, -lag) @ x
        blurred = self._blurred(j, self._multiplier(lag))
        coords = [c.ravel() for c in self._indices(moved.reshape(-1, 1))]
        return float(ndimage.map_coordinates(blurred, coords, order=3, mode="grid-constant")[0])
