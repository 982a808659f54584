"""Weak solutions of div(A D_0 u) + Y u = g + div f on space-time boxes.

The marcher rearranges the equation as du/dt = div(A D_0 u) + <B^T x, grad u> - g - div f
and advances from the bottom time slice: diffusion in the m_0 diffusive directions is
implicit, transport is explicit and upwinded with the local drift, and div f is taken
in conservative face form. Dirichlet data are imposed on the outermost spatial cells.
Frozen-coefficient problems can also be solved directly by convolution with Gamma_0.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse import linalg as sparse_linalg

from ultraparabolic.errors import (
    CFLViolation,
    EllipticityViolation,
    EmptyGrid,
    GeometryOutOfDomain,
    GridTooSmall,
    ImplicitSolveDiverged,
    NonPositiveRadius,
    NumericalError,
    ShapeMismatch,
    SupportViolation,
)
from ultraparabolic.grid import AxisBox, GridFunction, Region, region_inside, window
from ultraparabolic.kernel import FrozenKernel, gamma_convolve
from ultraparabolic.presets import CoefficientField, DataField, ExactSolution
from ultraparabolic.spaces import derivatives, drift_velocity, integrate, one_sided_differences
from ultraparabolic.structure import (
    GroupBall,
    KolmogorovStructure,
    SpaceTimePoint,
    distance_field,
)

logger = logging.getLogger(__name__)

SCHEMES = ("upwind",)
SPLIT_MARGIN_CELLS = 0.5


@dataclass(frozen=True, eq=False)
class ProblemSpec:
    """Coefficients, data and grid of one problem.

    ``boundary`` supplies both the bottom-slice initial data and the lateral Dirichlet
    data; ``None`` means homogeneous data. ``f`` holds the m_0 leading flux components.
    """

    structure: KolmogorovStructure
    a_field: CoefficientField | np.ndarray
    box: AxisBox
    cells: tuple[int, ...]
    g: DataField | GridFunction | None = None
    f: list | None = None
    boundary: DataField | GridFunction | None = None
    name: str = ""

    def __post_init__(self) -> None:
        s = self.structure
        object.__setattr__(self, "cells", tuple(int(n) for n in self.cells))
        if len(self.cells) != s.N + 1:
            raise ShapeMismatch(f"Need {s.N + 1} cell counts, got {len(self.cells)}")
        if self.f is not None and len(self.f) != s.m0:
            raise ShapeMismatch(f"Flux needs {s.m0} components, got {len(self.f)}")
        if isinstance(self.a_field, np.ndarray) and self.a_field.shape != (s.m0, s.m0):
            raise ShapeMismatch(f"Constant coefficient has shape {self.a_field.shape}")

    @property
    def zero_data(self) -> bool:
        return self.boundary is None

    @property
    def homogeneous(self) -> bool:
        return self.g is None and self.f is None

    def template(self) -> GridFunction:
        """Zero grid function on the problem grid."""
        return GridFunction.from_callable(
            lambda x, t: 0.0, self.box.lower, self.box.upper, self.cells, name=self.name
        )

    def coefficient_values(self, u: GridFunction) -> np.ndarray:
        """a_ij at every cell of u's grid, shape (m_0, m_0, ...)."""
        return coefficient_values(self.a_field, u)

    def source_values(self, u: GridFunction) -> np.ndarray:
        return evaluate(self.g, u)

    def flux_values(self, u: GridFunction) -> list[np.ndarray]:
        if self.f is None:
            return [np.zeros(u.shape) for _ in range(self.structure.m0)]
        return [evaluate(component, u) for component in self.f]

    def boundary_values(self, u: GridFunction) -> np.ndarray:
        return evaluate(self.boundary, u)


@dataclass(frozen=True, eq=False)
class CutoffSpec:
    """Cutoff equal to 1 on B_rho(center) and vanishing outside B_R(center).

    The ball profile is a smoothstep of the gauge distance, so |D_0 xi| <= c / (R - rho)
    with c the largest slope of the step. The product profile multiplies a spatial
    step by the linear time ramp rising from t0 - R^2 / 2 to t0 - rho^2 / 2.
    """

    structure: KolmogorovStructure
    center: SpaceTimePoint
    rho: float
    R: float
    order: int = 2

    def __post_init__(self) -> None:
        if not 0 < self.rho < self.R:
            raise NonPositiveRadius(f"Cutoff needs 0 < rho < R, got rho={self.rho}, R={self.R}")
        if self.order not in (0, 1, 2):
            raise NumericalError(f"Cutoff order must be 0, 1 or 2, got {self.order}")

    @property
    def slope(self) -> float:
        """Largest derivative of the step profile on [0, 1]."""
        return (1.0, 1.5, 1.875)[self.order]

    def step(self, s: np.ndarray) -> np.ndarray:
        s = np.clip(s, 0.0, 1.0)
        if self.order == 0:
            return s
        if self.order == 1:
            return s * s * (3.0 - 2.0 * s)
        return s**3 * (s * (6.0 * s - 15.0) + 10.0)

    def ball(self, x: np.ndarray, t: np.ndarray) -> np.ndarray:
        distance = distance_field(self.structure, self.center, x, t)
        return 1.0 - self.step((distance - self.rho) / (self.R - self.rho))

    def spatial(self, x: np.ndarray) -> np.ndarray:
        s = self.structure
        x = np.asarray(x, dtype=float)
        offset = x - self.center.x.reshape((-1,) + (1,) * (x.ndim - 1))
        exponents = (1.0 / s.alpha).reshape((-1,) + (1,) * (x.ndim - 1))
        gauge = np.sum(np.abs(offset) ** exponents, axis=0)
        return 1.0 - self.step((gauge - self.rho) / (self.R - self.rho))

    def ramp(self, t: np.ndarray) -> np.ndarray:
        start = self.center.t - self.R**2 / 2.0
        return np.clip(2.0 * (np.asarray(t) - start) / (self.R**2 - self.rho**2), 0.0, 1.0)

    def product(self, x: np.ndarray, t: np.ndarray) -> np.ndarray:
        return self.spatial(x) * self.ramp(t)

    def on_grid(self, template: GridFunction, kind: str = "ball") -> GridFunction:
        profile = self.ball if kind == "ball" else self.product
        x, t = template.coordinates()
        return template.with_values(profile(x, t), name=f"cutoff[{kind}]")

    def gradient_constant(self, template: GridFunction, kind: str = "ball") -> float:
        """Measured max |D_0 xi| times (R - rho)."""
        bundle = derivatives(self.structure, self.on_grid(template, kind))
        return float(bundle.d0_magnitude().values.max() * (self.R - self.rho))


@dataclass(frozen=True)
class SolverConfig:
    """Time stepping of the forward marcher; ``dt=None`` picks the CFL step."""

    dt: float | None = None
    cfl_safety: float = 0.9
    scheme: str = "upwind"
    tolerance: float = 1e-10

    def __post_init__(self) -> None:
        if not 0 < self.cfl_safety <= 1:
            raise CFLViolation(f"CFL safety must lie in (0, 1], got {self.cfl_safety}")
        if self.scheme not in SCHEMES:
            raise NumericalError(f"Unknown solver scheme '{self.scheme}'")


def evaluate(data, u: GridFunction) -> np.ndarray:
    """Values of a callable, a grid function or None (zero) on u's grid."""
    if data is None:
        return np.zeros(u.shape)
    if isinstance(data, GridFunction):
        same = (
            data.shape == u.shape
            and np.allclose(data.lower, u.lower, atol=1e-12)
            and np.allclose(data.spacing, u.spacing, rtol=1e-12)
        )
        if not same:
            raise ShapeMismatch(f"Data '{data.name}' lives on a different grid")
        return data.values
    x, t = u.coordinates()
    return np.broadcast_to(np.asarray(data(x, t), dtype=float), u.shape).copy()


def coefficient_values(a_field, u: GridFunction) -> np.ndarray:
    if isinstance(a_field, np.ndarray):
        expanded = a_field.reshape(a_field.shape + (1,) * u.ndim)
        return np.broadcast_to(expanded, a_field.shape + u.shape)
    x, t = u.coordinates()
    return a_field(x, t)


def check_coefficients(A: np.ndarray, Lambda: float) -> None:
    """Raise EllipticityViolation unless every sampled a(z) has spectrum in [1/Lambda, Lambda]."""
    m0 = A.shape[0]
    stacked = np.moveaxis(A.reshape(m0, m0, -1), -1, 0)
    eigenvalues = np.linalg.eigvalsh(stacked)
    slack = 1e-12 * Lambda
    if eigenvalues.min() < 1.0 / Lambda - slack or eigenvalues.max() > Lambda + slack:
        raise EllipticityViolation(
            f"Coefficient spectrum [{eigenvalues.min():.4g}, {eigenvalues.max():.4g}] "
            f"leaves [{1.0 / Lambda:.4g}, {Lambda:.4g}]"
        )


def time_step(
    s: KolmogorovStructure, u: GridFunction, velocity: np.ndarray, cfg: SolverConfig
) -> tuple[int, float]:
    """Substeps per time cell and the substep length."""
    limit = math.inf
    for j in s.transport_axes:
        speed = float(np.abs(velocity[j]).max())
        if speed > 0:
            limit = min(limit, cfg.cfl_safety * u.spacing[j] / speed)
    h_t = u.spacing[-1]
    if cfg.dt is not None:
        if cfg.dt > limit:
            raise CFLViolation(f"dt={cfg.dt:.4g} exceeds the transport limit {limit:.4g}")
        n_sub = max(1, math.ceil(h_t / cfg.dt - 1e-9))
    else:
        n_sub = 1 if math.isinf(limit) else max(1, math.ceil(h_t / limit))
    return n_sub, h_t / n_sub


def diffusion_matrix(A: np.ndarray, spacing, shape: tuple[int, ...]) -> sparse.csr_matrix:
    """Sparse div(A D_0 .) on one time slice; A has shape (m_0, m_0, *shape)."""
    m0 = A.shape[0]
    n = math.prod(shape)
    total = sparse.csr_matrix((n, n))
    for i in range(m0):
        for j in range(m0):
            if i == j:
                G = _embed(_forward_difference(shape[i], spacing[i]), shape, i)
                face = _faces(A[i, i], i)
                total = total - G.T @ sparse.diags(face.ravel()) @ G
            else:
                Ci = _embed(_central_difference(shape[i], spacing[i]), shape, i)
                Cj = _embed(_central_difference(shape[j], spacing[j]), shape, j)
                total = total + Ci @ sparse.diags(np.ascontiguousarray(A[i, j]).ravel()) @ Cj
    return total.tocsr()


def flux_divergence(f: list[np.ndarray], spacing) -> np.ndarray:
    """Conservative face-difference divergence of the leading flux components."""
    total = np.zeros(f[0].shape)
    for i, component in enumerate(f):
        inner = np.diff(_faces(component, i), axis=i) / spacing[i]
        pad = [(0, 0)] * component.ndim
        pad[i] = (1, 1)
        total += np.pad(inner, pad)
    return total


def upwind_transport(
    s: KolmogorovStructure, values: np.ndarray, velocity: np.ndarray, spacing
) -> np.ndarray:
    """<B^T x, grad u> with one-sided differences taken downstream of the characteristics."""
    total = np.zeros(values.shape)
    for j in s.transport_axes:
        forward, backward = one_sided_differences(values, spacing[j], j)
        total += velocity[j] * np.where(velocity[j] > 0, forward, backward)
    return total


def solve_forward(ps: ProblemSpec, cfg: SolverConfig | None = None) -> GridFunction:
    """March the problem from the bottom slice to the top of its box."""
    cfg = cfg or SolverConfig()
    s = ps.structure
    template = ps.template()
    spatial_shape = template.shape[:-1]
    n_t = template.shape[-1]
    if min(spatial_shape) < 3 or n_t < 2:
        raise GridTooSmall(f"Grid {template.shape} is too small for the marcher")

    A = ps.coefficient_values(template)
    check_coefficients(A, s.Lambda)
    forcing = -ps.source_values(template) - flux_divergence(
        ps.flux_values(template), template.spacing
    )
    data = ps.boundary_values(template)
    velocity = drift_velocity(s, template)[..., 0]
    n_sub, dt = time_step(s, template, velocity, cfg)
    spacing = template.spacing[:-1]

    boundary = np.zeros(spatial_shape, dtype=bool)
    for axis in range(len(spatial_shape)):
        index = [slice(None)] * len(spatial_shape)
        index[axis] = [0, spatial_shape[axis] - 1]
        boundary[tuple(index)] = True
    keep = sparse.diags((~boundary).ravel().astype(float))
    pin = sparse.diags(boundary.ravel().astype(float))
    identity = sparse.identity(math.prod(spatial_shape), format="csr")

    logger.info(
        "Marching %s on %s cells with %d substeps of %.3g per slice",
        ps.name or "problem",
        template.shape,
        n_sub,
        dt,
    )
    values = np.empty(template.shape)
    values[..., 0] = data[..., 0]
    factor, frozen = None, None
    for n in range(n_t - 1):
        A_next = A[..., n + 1]
        if factor is None or not np.array_equal(A_next, frozen):
            diffusion = diffusion_matrix(A_next, spacing, spatial_shape)
            matrix = keep @ (identity - dt * diffusion) + pin
            try:
                factor = sparse_linalg.splu(matrix.tocsc())
            except RuntimeError as exc:
                raise ImplicitSolveDiverged(
                    f"Implicit matrix is singular at slice {n + 1}"
                ) from exc
            frozen = A_next.copy()
        u = values[..., n]
        for k in range(1, n_sub + 1):
            theta = k / n_sub
            drive = (1 - theta) * forcing[..., n] + theta * forcing[..., n + 1]
            rhs = u + dt * (upwind_transport(s, u, velocity, spacing) + drive)
            rhs[boundary] = ((1 - theta) * data[..., n] + theta * data[..., n + 1])[boundary]
            solution = factor.solve(rhs.ravel())
            residual = np.abs(matrix @ solution - rhs.ravel()).max()
            scale = max(1.0, float(np.abs(rhs).max()))
            if not np.all(np.isfinite(solution)) or residual > cfg.tolerance * scale:
                raise ImplicitSolveDiverged(
                    f"Implicit solve at slice {n + 1} left residual {residual:.3g}"
                )
            u = solution.reshape(spatial_shape)
        values[..., n + 1] = u
    return template.with_values(
        values, name=ps.name or "u", solver="imex-upwind", substeps=n_sub
    )


def solve_frozen_convolution(
    k: FrozenKernel,
    g: GridFunction | None,
    f: list[GridFunction] | None = None,
    threads: int = 1,
) -> GridFunction:
    """u = -Gamma_0(g) - sum_i Gamma_0(d_i f_i), so that L_0 u = g + div f."""
    if g is None and not f:
        raise EmptyGrid("Frozen solve needs a source or a flux")
    pieces = []
    if g is not None:
        pieces.append(gamma_convolve(k, g, "plain", threads=threads))
    for i, component in enumerate(f or []):
        pieces.append(
            gamma_convolve(k, component, "d0_of_argument", component=i, threads=threads)
        )
    total = -sum(piece.values for piece in pieces)
    return pieces[0].with_values(total, name="u_frozen", solver="convolution")


def weak_residual(ps: ProblemSpec, u: GridFunction, psi: GridFunction) -> float:
    """-int A D_0 u . D_0 psi + int psi Y u - int (g psi - f . D_0 psi) on u's grid."""
    s = ps.structure
    edge = 1e-14 * max(1.0, float(np.abs(psi.values).max()))
    for axis in range(psi.ndim):
        faces = np.take(psi.values, [0, psi.shape[axis] - 1], axis=axis)
        if np.abs(faces).max() > edge:
            raise SupportViolation(f"Test function does not vanish on the faces of axis {axis}")
    du = derivatives(s, u)
    dpsi = derivatives(s, psi)
    A = ps.coefficient_values(u)
    pairing = sum(
        A[i, j] * du.d0[j].values * dpsi.d0[i].values for i in range(s.m0) for j in range(s.m0)
    )
    flux = ps.flux_values(u)
    density = (
        -pairing
        + psi.values * du.y.values
        - ps.source_values(u) * psi.values
        + sum(fi * dpsi.d0[i].values for i, fi in enumerate(flux))
    )
    return integrate(u.with_values(density))


def coefficient_average(a_field, region: Region, grid: GridFunction) -> np.ndarray:
    """A_R: cellwise mean of a_ij over the cells of region."""
    A = coefficient_values(a_field, grid)
    slices, mask = window(grid, region)
    window_values = A[(slice(None), slice(None), *slices)]
    return np.array([[float(np.mean(entry[mask])) for entry in row] for row in window_values])


def split_frozen(
    ps: ProblemSpec, u: GridFunction, ball: GroupBall, cfg: SolverConfig | None = None
) -> tuple[GridFunction, GridFunction]:
    """(v, w) on the box around a ball: L_R v = 0 with the data of u, and w = u - v."""
    if not region_inside(u, ball, margin_cells=SPLIT_MARGIN_CELLS):
        raise GeometryOutOfDomain(f"Ball of radius {ball.radius:.3g} leaves the grid box")
    slices, _ = window(u, ball)
    local = u.restricted(slices)
    averaged = coefficient_average(ps.a_field, ball, u)
    sub = ProblemSpec(
        structure=ps.structure,
        a_field=averaged,
        box=local.box,
        cells=local.shape,
        boundary=local,
        name=f"{u.name}-frozen",
    )
    v = solve_forward(sub, cfg)
    w = local.with_values(local.values - v.values, name=f"{u.name}-remainder")
    return v, w


def observed_order(hs, errors) -> float:
    """Least-squares slope of log(error) against log(h)."""
    hs, errors = np.asarray(hs, dtype=float), np.asarray(errors, dtype=float)
    if hs.size < 2 or np.any(hs <= 0) or np.any(errors <= 0):
        raise NumericalError("Order fit needs at least two positive (h, error) pairs")
    return float(np.polyfit(np.log(hs), np.log(errors), 1)[0])


def convergence_study(
    solution: ExactSolution,
    box: AxisBox,
    cells: tuple[int, ...],
    levels: int = 3,
    cfg: SolverConfig | None = None,
) -> list[dict]:
    """Max errors of the marcher against an exact solution over factor-2 refinements."""
    rows = []
    for level in range(levels):
        refined = tuple(n * 2**level for n in cells)
        ps = ProblemSpec(
            structure=solution.structure,
            a_field=solution.coefficient_field(),
            box=box,
            cells=refined,
            g=None if solution.is_caloric else solution.source,
            boundary=solution.exact,
            name=solution.name,
        )
        u = solve_forward(ps, cfg)
        exact = evaluate(solution.exact, u)
        error = float(np.abs(u.values - exact).max())
        rows.append(
            {"case": solution.name, "cells": list(refined), "h": u.spacing[0], "error": error}
        )
        logger.info("%s at %s: max error %.3e", solution.name, refined, error)
    return rows


def _forward_difference(n: int, h: float) -> sparse.csr_matrix:
    ones = np.ones(n - 1)
    return sparse.diags([-ones, ones], [0, 1], shape=(n - 1, n), format="csr") / h


def _central_difference(n: int, h: float) -> sparse.csr_matrix:
    ones = np.ones(n - 1)
    matrix = sparse.diags([-ones, ones], [-1, 1], shape=(n, n), format="lil")
    matrix[0, 0], matrix[0, 1] = -2.0, 2.0
    matrix[n - 1, n - 2], matrix[n - 1, n - 1] = -2.0, 2.0
    return matrix.tocsr() / (2.0 * h)


def _embed(matrix: sparse.spmatrix, shape: tuple[int, ...], axis: int) -> sparse.csr_matrix:
    """Lift a one-axis operator to the row-major flattened grid."""
    before = sparse.identity(math.prod(shape[:axis]), format="csr")
    after = sparse.identity(math.prod(shape[axis + 1 :]), format="csr")
    return sparse.kron(sparse.kron(before, matrix), after, format="csr")


def _faces(values: np.ndarray, axis: int) -> np.ndarray:
    """Arithmetic means of neighbouring cells along an axis."""
    n = values.shape[axis]
    lower = np.take(values, range(n - 1), axis=axis)
    return 0.5 * (lower + np.take(values, range(1, n), axis=axis))
