"""Coefficient fields, data presets and exact solutions.

Coefficients are scalar multipliers of the reference matrix A0, so every preset keeps
the ellipticity window as long as its multiplier range times the A0 spectrum does.
Exact solutions are kept as sympy expressions; the source term of a manufactured
solution is derived symbolically from the operator and then lambdified for numpy.
"""

import logging
from collections.abc import Callable
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import sympy as sym

from ultraparabolic.errors import ConfigError, ShapeMismatch
from ultraparabolic.structure import KolmogorovStructure

logger = logging.getLogger(__name__)

DataField = Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True, eq=False)
class CoefficientField:
    """a(z) = m(z) A0 for a scalar multiplier m."""

    name: str
    base: np.ndarray
    multiplier: DataField
    vmo: bool = True
    params: dict = field(default_factory=dict)

    def __call__(self, x: np.ndarray, t: np.ndarray) -> np.ndarray:
        """Matrix values of shape (m_0, m_0, ...) at points x (N, ...), t (...)."""
        t = np.asarray(t, dtype=float)
        scalar = np.broadcast_to(np.asarray(self.multiplier(x, t), dtype=float), t.shape)
        return self.base.reshape(self.base.shape + (1,) * t.ndim) * scalar

    def scalar(self, x: np.ndarray, t: np.ndarray) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        return np.broadcast_to(np.asarray(self.multiplier(x, t), dtype=float), t.shape)


@dataclass(frozen=True, eq=False)
class ExactSolution:
    """A closed-form solution with its coefficient multiplier and derived source."""

    name: str
    structure: KolmogorovStructure
    expression: sym.Expr
    coefficient: sym.Expr
    symbols: tuple

    @cached_property
    def source_expression(self) -> sym.Expr:
        """g = L u for zero flux."""
        return apply_operator(self.structure, self.expression, self.coefficient, self.symbols)

    @cached_property
    def exact(self) -> DataField:
        return _lambdify(self.expression, self.symbols)

    @cached_property
    def source(self) -> DataField:
        return _lambdify(self.source_expression, self.symbols)

    def coefficient_field(self) -> CoefficientField:
        return CoefficientField(
            name=f"{self.name}-coefficient",
            base=np.asarray(self.structure.A0, dtype=float),
            multiplier=_lambdify(self.coefficient, self.symbols),
            vmo=True,
        )

    @property
    def is_caloric(self) -> bool:
        return sym.simplify(self.source_expression) == 0


def space_time_symbols(s: KolmogorovStructure) -> tuple:
    """sympy symbols (x1, ..., xN, t)."""
    return (*sym.symbols(f"x1:{s.N + 1}", real=True), sym.Symbol("t", real=True))


def apply_operator(
    s: KolmogorovStructure, u: sym.Expr, multiplier: sym.Expr, symbols: tuple
) -> sym.Expr:
    """div(m A0 D_0 u) + <B^T x, grad u> - du/dt, symbolically."""
    xs, t = symbols[:-1], symbols[-1]
    A0 = sym.Matrix(np.asarray(s.A0).tolist())
    diffusion = sum(
        sym.diff(multiplier * A0[i, j] * sym.diff(u, xs[j]), xs[i])
        for i in range(s.m0)
        for j in range(s.m0)
    )
    drift = sym.Matrix(np.asarray(s.B).T.tolist()) * sym.Matrix(xs)
    transport = sum(drift[j] * sym.diff(u, xs[j]) for j in range(s.N))
    return sym.expand(diffusion + transport - sym.diff(u, t))


def caloric_quadratic(s: KolmogorovStructure) -> ExactSolution:
    """x_1^2 + 2 (A0)_11 t, caloric for the frozen reference operator."""
    symbols = space_time_symbols(s)
    x1, t = symbols[0], symbols[-1]
    a11 = sym.nsimplify(float(s.A0[0, 0]))
    return ExactSolution("caloric-quadratic", s, x1**2 + 2 * a11 * t, sym.Integer(1), symbols)


def caloric_shear(s: KolmogorovStructure) -> ExactSolution:
    """x_j + t (B^T x)_j for the first transported coordinate j; x_1 without drift."""
    symbols = space_time_symbols(s)
    xs, t = symbols[:-1], symbols[-1]
    if s.r == 0:
        return ExactSolution("caloric-linear", s, xs[0], sym.Integer(1), symbols)
    j = s.m0
    drift = sum(sym.nsimplify(float(s.B[i, j])) * xs[i] for i in range(s.N))
    return ExactSolution("caloric-shear", s, xs[j] + t * drift, sym.Integer(1), symbols)


def caloric_linear(s: KolmogorovStructure) -> ExactSolution:
    """u = x_1, whose D_0 gradient is the first unit vector."""
    symbols = space_time_symbols(s)
    return ExactSolution("caloric-linear", s, symbols[0], sym.Integer(1), symbols)


def caloric_shear_squared(s: KolmogorovStructure) -> ExactSolution:
    """(x_2 + t x_1)^2 + 2 t^3 / 3 on the two-dimensional structure."""
    if s.blocks != (1, 1):
        raise ShapeMismatch("The squared shear solution is defined for blocks (1, 1)")
    x1, x2, t = space_time_symbols(s)
    a = sym.nsimplify(float(s.A0[0, 0]))
    expression = (x2 + t * x1) ** 2 + sym.Rational(2, 3) * a * t**3
    return ExactSolution("caloric-shear-squared", s, expression, sym.Integer(1), (x1, x2, t))


def manufactured(s: KolmogorovStructure) -> ExactSolution:
    """u = sin(x_1) x_N e^-t with multiplier 1 + sin(x_1) / 2 and g = L u."""
    symbols = space_time_symbols(s)
    xs, t = symbols[:-1], symbols[-1]
    expression = sym.sin(xs[0]) * xs[-1] * sym.exp(-t)
    coefficient = 1 + sym.sin(xs[0]) / 2
    return ExactSolution("manufactured", s, expression, coefficient, symbols)


EXACT_SOLUTIONS: dict[str, Callable[[KolmogorovStructure], ExactSolution]] = {
    "caloric-quadratic": caloric_quadratic,
    "caloric-shear": caloric_shear,
    "caloric-linear": caloric_linear,
    "caloric-shear-squared": caloric_shear_squared,
    "manufactured": manufactured,
}


def constant_coefficient(s: KolmogorovStructure, scale: float = 1.0) -> CoefficientField:
    def multiplier(x: np.ndarray, t: np.ndarray) -> np.ndarray:
        return np.full(np.shape(t), scale)

    return CoefficientField("constant", np.asarray(s.A0), multiplier, params={"scale": scale})


def sinusoid_coefficient(
    s: KolmogorovStructure, amplitude: float = 0.25, frequency: float = 2.0 * np.pi
) -> CoefficientField:
    """1 + amplitude sin(frequency x_1) cos(frequency t / 2), smooth and hence VMO."""

    def multiplier(x: np.ndarray, t: np.ndarray) -> np.ndarray:
        return 1.0 + amplitude * np.sin(frequency * x[0]) * np.cos(0.5 * frequency * t)

    params = {"amplitude": amplitude, "frequency": frequency}
    return CoefficientField("sinusoid", np.asarray(s.A0), multiplier, vmo=True, params=params)


def vmo_oscillation(
    s: KolmogorovStructure, amplitude: float = 0.25, offset: float = 1e-3
) -> CoefficientField:
    """1 + amplitude sin(log(1 + |log(|x_1| + offset)|)).

    Discontinuous-looking at x_1 = 0 as offset -> 0 but its mean oscillation over a ball of
    radius rho decays like 1 / |log rho|, so the field is VMO.
    """

    def multiplier(x: np.ndarray, t: np.ndarray) -> np.ndarray:
        return 1.0 + amplitude * np.sin(np.log1p(np.abs(np.log(np.abs(x[0]) + offset))))

    params = {"amplitude": amplitude, "offset": offset}
    return CoefficientField(
        "vmo-oscillation", np.asarray(s.A0), multiplier, vmo=True, params=params
    )


def bmo_checkerboard(
    s: KolmogorovStructure, amplitude: float = 0.25, frequency: float = 4.0
) -> CoefficientField:
    """1 + amplitude sign(sin(frequency x_1)) sign(sin(frequency t)): BMO but not VMO."""

    def multiplier(x: np.ndarray, t: np.ndarray) -> np.ndarray:
        return 1.0 + amplitude * np.sign(np.sin(frequency * x[0])) * np.sign(np.sin(frequency * t))

    params = {"amplitude": amplitude, "frequency": frequency}
    return CoefficientField(
        "bmo-checkerboard", np.asarray(s.A0), multiplier, vmo=False, params=params
    )


COEFFICIENT_PRESETS: dict[str, Callable[..., CoefficientField]] = {
    "constant": constant_coefficient,
    "sinusoid": sinusoid_coefficient,
    "vmo-oscillation": vmo_oscillation,
    "bmo-checkerboard": bmo_checkerboard,
}


def gaussian_bump(center, widths, amplitude: float = 1.0) -> DataField:
    """amplitude exp(-sum_j ((z_j - c_j) / w_j)^2 / 2) over all space-time axes."""
    center = np.asarray(center, dtype=float)
    widths = np.asarray(widths, dtype=float)

    def bump(x: np.ndarray, t: np.ndarray) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        coords = [*np.asarray(x), t]
        exponent = sum(((c - m) / w) ** 2 for c, m, w in zip(coords, center, widths, strict=True))
        return amplitude * np.exp(-0.5 * exponent)

    return bump


def default_bump(lower, upper, amplitude: float = 1.0, time_fraction: float = 0.3) -> DataField:
    """Bump at the spatial center of a box, early in time, with widths a sixth of the box."""
    lower, upper = np.asarray(lower, dtype=float), np.asarray(upper, dtype=float)
    center = (lower + upper) / 2.0
    center[-1] = lower[-1] + time_fraction * (upper[-1] - lower[-1])
    return gaussian_bump(center, (upper - lower) / 6.0, amplitude)


SOURCE_PRESETS = ("zero", "bump")


def build_coefficient(s: KolmogorovStructure, preset: str, params: dict | None = None):
    """Instantiate a coefficient preset by name."""
    if preset not in COEFFICIENT_PRESETS:
        raise ConfigError(f"Unknown coefficient preset '{preset}'")
    field_ = COEFFICIENT_PRESETS[preset](s, **(params or {}))
    logger.debug("Coefficient preset %s with %s", preset, field_.params)
    return field_


def build_source(preset: str, params: dict | None, lower, upper) -> DataField | None:
    """Scalar source g; None for the zero preset."""
    if preset not in SOURCE_PRESETS:
        raise ConfigError(f"Unknown source preset '{preset}'")
    if preset == "zero":
        return None
    params = dict(params or {})
    if "center" in params:
        return gaussian_bump(params["center"], params["widths"], params.get("amplitude", 1.0))
    return default_bump(lower, upper, **params)


def build_flux(
    s: KolmogorovStructure, preset: str, params: dict | None, lower, upper
) -> list[DataField] | None:
    """Flux f = (f_1, ..., f_m0, 0, ..., 0) as its m_0 leading components."""
    if preset not in SOURCE_PRESETS:
        raise ConfigError(f"Unknown flux preset '{preset}'")
    if preset == "zero":
        return None
    params = dict(params or {})
    amplitudes = params.pop("amplitudes", [1.0] + [0.0] * (s.m0 - 1))
    if len(amplitudes) != s.m0:
        raise ConfigError(f"Flux needs {s.m0} amplitudes, got {len(amplitudes)}")
    components = []
    for amplitude in amplitudes:
        if "center" in params:
            components.append(gaussian_bump(params["center"], params["widths"], amplitude))
        else:
            components.append(default_bump(lower, upper, amplitude, **params))
    return components


def _lambdify(expression: sym.Expr, symbols: tuple) -> DataField:
    compiled = sym.lambdify(symbols, expression, modules="numpy")

    def evaluate(x: np.ndarray, t: np.ndarray) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        values = compiled(*np.asarray(x, dtype=float), t)
        return np.broadcast_to(np.asarray(values, dtype=float), t.shape)

    return evaluate
