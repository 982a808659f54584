"""Tests for coefficient presets, data presets and exact solutions."""

import numpy as np
import pytest
import sympy as sym

from ultraparabolic.errors import ConfigError, ShapeMismatch
from ultraparabolic.presets import (
    COEFFICIENT_PRESETS,
    EXACT_SOLUTIONS,
    apply_operator,
    build_coefficient,
    build_flux,
    build_source,
    caloric_quadratic,
    caloric_shear,
    caloric_shear_squared,
    default_bump,
    manufactured,
    space_time_symbols,
)
from ultraparabolic.structure import build_structure, prototype_structure

LOWER, UPPER = [-1.0, -1.0, 0.0], [1.0, 1.0, 1.0]


@pytest.fixture
def s():
    """The prototype structure."""
    return prototype_structure()


@pytest.fixture
def points():
    """A handful of space-time points as (x, t)."""
    rng = np.random.default_rng(0)
    return rng.uniform(-1, 1, (2, 7)), rng.uniform(0, 1, 7)


class TestExactSolutions:
    """Test the symbolic solutions and their derived sources."""

    @pytest.mark.parametrize(
        "factory", [caloric_quadratic, caloric_shear, caloric_shear_squared]
    )
    def test_caloric_on_prototype(self, s, factory):
        """The caloric family solves L u = 0."""
        assert factory(s).is_caloric

    def test_shear_on_three_blocks(self):
        """x_3 + t x_1 is caloric for blocks (2, 1, 1)."""
        s = build_structure([2, 1, 1], [[[1.0], [0.0]], [[1.0]]], np.eye(2), 2.0)
        solution = caloric_shear(s)
        assert solution.is_caloric
        x1, _, x3, _, t = solution.symbols
        assert sym.expand(solution.expression - (x3 + t * x1)) == 0

    def test_manufactured_has_source(self, s):
        """The manufactured solution carries a nonzero g = L u."""
        solution = manufactured(s)
        assert not solution.is_caloric

    def test_manufactured_source_matches_operator(self, s, points):
        """The lambdified source agrees with a direct symbolic evaluation."""
        solution = manufactured(s)
        x, t = points
        symbols = space_time_symbols(s)
        expression = apply_operator(s, solution.expression, solution.coefficient, symbols)
        expected = [
            float(expression.subs(dict(zip(symbols, (*x[:, i], t[i]), strict=True))))
            for i in range(t.size)
        ]
        assert np.allclose(solution.source(x, t), expected)

    def test_squared_shear_needs_two_blocks(self):
        """The squared shear solution is specific to the prototype blocks."""
        s = build_structure([1, 1, 1], [[[1.0]], [[1.0]]], [[1.0]], 2.0)
        with pytest.raises(ShapeMismatch):
            caloric_shear_squared(s)

    def test_exact_values_broadcast(self, s, points):
        """exact returns values of the shape of t."""
        x, t = points
        values = caloric_quadratic(s).exact(x, t)
        assert values.shape == t.shape
        assert np.allclose(values, x[0] ** 2 + 2 * t)

    def test_registry(self):
        """Every registered solution name matches its factory."""
        s = prototype_structure()
        for name, factory in EXACT_SOLUTIONS.items():
            assert factory(s).name == name

    def test_operator_of_constant_is_zero(self, s):
        """Constants are annihilated by L."""
        symbols = space_time_symbols(s)
        assert apply_operator(s, sym.Integer(3), sym.Integer(1), symbols) == 0


class TestCoefficients:
    """Test coefficient presets."""

    @pytest.mark.parametrize("preset", sorted(COEFFICIENT_PRESETS))
    def test_within_ellipticity(self, s, preset, points):
        """Every preset keeps its multiplier inside [1/Lambda, Lambda]."""
        x, t = points
        field = build_coefficient(s, preset)
        values = field(x, t)
        assert values.shape == (1, 1, t.size)
        assert values.min() >= 1.0 / s.Lambda
        assert values.max() <= s.Lambda

    def test_checkerboard_is_not_vmo(self, s):
        """Only the checkerboard is flagged as merely BMO."""
        assert not build_coefficient(s, "bmo-checkerboard").vmo
        assert build_coefficient(s, "sinusoid").vmo

    def test_params_forwarded(self, s):
        """Preset parameters reach the multiplier."""
        field = build_coefficient(s, "constant", {"scale": 1.5})
        assert field.params == {"scale": 1.5}
        assert field.scalar(np.zeros((2, 3)), np.zeros(3)).tolist() == [1.5] * 3

    def test_unknown_preset(self, s):
        """Unknown names are configuration errors."""
        with pytest.raises(ConfigError):
            build_coefficient(s, "fractal")


class TestData:
    """Test source and flux presets."""

    def test_zero_source_is_none(self):
        """The zero preset means no source."""
        assert build_source("zero", None, LOWER, UPPER) is None

    def test_default_bump_peak(self):
        """The default bump peaks at the spatial center, early in time."""
        bump = default_bump(LOWER, UPPER, amplitude=2.0)
        assert bump(np.zeros((2, 1)), np.array([0.3]))[0] == pytest.approx(2.0)

    def test_explicit_bump(self):
        """A center and widths override the default placement."""
        source = build_source(
            "bump", {"center": [0.5, 0.0, 0.5], "widths": [0.1, 0.1, 0.1]}, LOWER, UPPER
        )
        assert source(np.array([[0.5], [0.0]]), np.array([0.5]))[0] == pytest.approx(1.0)

    def test_flux_components(self, s):
        """A bump flux has m_0 components."""
        flux = build_flux(s, "bump", {"amplitudes": [0.5]}, LOWER, UPPER)
        assert len(flux) == 1

    def test_flux_amplitude_count(self, s):
        """The amplitude list must have m_0 entries."""
        with pytest.raises(ConfigError):
            build_flux(s, "bump", {"amplitudes": [1.0, 1.0]}, LOWER, UPPER)

    def test_unknown_source(self):
        """Unknown source presets are configuration errors."""
        with pytest.raises(ConfigError):
            build_source("noise", None, LOWER, UPPER)
