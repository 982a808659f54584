"""Tests for the Kolmogorov group geometry."""

import numpy as np
import pytest

from ultraparabolic.errors import (
    EllipticityViolation,
    NonIncreasingRanks,
    NonPositiveLambda,
    NonPositiveRadius,
    RankDeficientBlock,
    ShapeMismatch,
)
from ultraparabolic.structure import (
    GroupBall,
    SpaceTimePoint,
    ball_volume,
    build_structure,
    compose,
    cube_bounds,
    dilate,
    distance_field,
    exp_neg_BT,
    group_diameter,
    hnorm,
    invert,
    measure_c0,
    prototype_structure,
    qdist,
    quasi_symmetry_constant,
    quasi_triangle_constant,
    rasterized_unit_ball_volume,
    unit_ball_volume,
)


@pytest.fixture
def prototype():
    """The two-dimensional Kolmogorov structure."""
    return prototype_structure()


@pytest.fixture
def three_block():
    """Blocks (2, 1, 1) with rank-one drift blocks."""
    return build_structure([2, 1, 1], [[[1.0], [0.0]], [[1.0]]], np.eye(2), 2.0)


def random_points(s, n, seed):
    rng = np.random.default_rng(seed)
    return [SpaceTimePoint(rng.uniform(-1, 1, s.N), rng.uniform(-1, 1)) for _ in range(n)]


class TestBuildStructure:
    """Test structure validation and derived dimensions."""

    def test_prototype_dimensions(self, prototype):
        """The prototype has Q = 4 and homogeneous dimension 6."""
        assert prototype.N == 2
        assert prototype.Q == 4
        assert prototype.homogeneous_dimension == 6
        assert prototype.alpha.tolist() == [1.0, 3.0]

    def test_three_block_dimensions(self, three_block):
        """Exponents 1, 1, 3, 5 give Q = 10."""
        assert three_block.alpha.tolist() == [1.0, 1.0, 3.0, 5.0]
        assert three_block.Q == 10
        assert three_block.m0 == 2
        assert three_block.r == 2

    def test_drift_matrix_is_block_superdiagonal(self, three_block):
        """B carries the blocks above the diagonal and is nilpotent."""
        B = three_block.B
        assert B[0, 2] == 1.0
        assert B[2, 3] == 1.0
        assert np.allclose(np.linalg.matrix_power(B, 3), 0.0)

    def test_increasing_ranks_rejected(self):
        """A later block larger than an earlier one is rejected."""
        with pytest.raises(NonIncreasingRanks):
            build_structure([1, 2], [[[1.0, 1.0]]], [[1.0]], 2.0)

    def test_rank_deficient_block_rejected(self):
        """A zero drift block is rejected."""
        with pytest.raises(RankDeficientBlock):
            build_structure([1, 1], [[[0.0]]], [[1.0]], 2.0)

    def test_wrong_block_count_rejected(self):
        """The number of drift blocks must match the ranks."""
        with pytest.raises(ShapeMismatch):
            build_structure([1, 1, 1], [[[1.0]]], [[1.0]], 2.0)

    def test_ellipticity_enforced(self):
        """A0 outside [1/Lambda, Lambda] is rejected."""
        with pytest.raises(EllipticityViolation):
            build_structure([1, 1], [[[1.0]]], [[5.0]], 2.0)

    def test_transport_axes(self, prototype):
        """Only x_2 is transported on the prototype."""
        assert prototype.transport_axes == (1,)


class TestGroupLaw:
    """Test composition, inversion and dilation."""

    def test_flow_matrix_on_prototype(self, prototype):
        """E(tau) = I - tau B^T on the prototype."""
        assert np.allclose(exp_neg_BT(prototype, 0.7), [[1.0, 0.0], [-0.7, 1.0]])

    def test_associativity(self, three_block):
        """(a o b) o c = a o (b o c)."""
        s = three_block
        for a, b, c in zip(*[iter(random_points(s, 60, 1))] * 3, strict=True):
            left = compose(s, compose(s, a, b), c).as_array()
            right = compose(s, a, compose(s, b, c)).as_array()
            assert np.allclose(left, right, atol=1e-12)

    def test_inverse(self, three_block):
        """z o z^-1 and z^-1 o z are the identity."""
        s = three_block
        for z in random_points(s, 20, 2):
            assert np.allclose(compose(s, z, invert(s, z)).as_array(), 0.0, atol=1e-12)
            assert np.allclose(compose(s, invert(s, z), z).as_array(), 0.0, atol=1e-12)

    def test_dilation_is_automorphism(self, prototype):
        """delta_lam(z o zeta) = delta_lam z o delta_lam zeta."""
        s = prototype
        points = random_points(s, 20, 3)
        for z, zeta in zip(points[::2], points[1::2], strict=True):
            left = dilate(s, 1.7, compose(s, z, zeta)).as_array()
            right = compose(s, dilate(s, 1.7, z), dilate(s, 1.7, zeta)).as_array()
            assert np.allclose(left, right, atol=1e-12)

    def test_norm_homogeneity(self, three_block):
        """||delta_lam z|| = lam ||z||."""
        s = three_block
        for z in random_points(s, 20, 4):
            assert hnorm(s, dilate(s, 0.6, z)) == pytest.approx(0.6 * hnorm(s, z), abs=1e-12)

    def test_nonpositive_dilation_rejected(self, prototype):
        """Dilation factors must be positive."""
        with pytest.raises(NonPositiveLambda):
            dilate(prototype, 0.0, SpaceTimePoint.of(1.0, 1.0, 1.0))

    def test_distance_to_self_is_zero(self, prototype):
        """d(z, z) = 0."""
        z = SpaceTimePoint.of(0.3, -0.2, 0.5)
        assert qdist(prototype, z, z) == pytest.approx(0.0, abs=1e-14)

    def test_distance_field_matches_qdist(self, prototype):
        """The vectorised field agrees with pointwise distances from the center."""
        s = prototype
        center = SpaceTimePoint.of(0.1, 0.2, 0.3)
        points = random_points(s, 10, 5)
        x = np.array([p.x for p in points]).T
        t = np.array([p.t for p in points])

        field = distance_field(s, center, x, t)

        expected = [qdist(s, center, p) for p in points]
        assert np.allclose(field, expected, atol=1e-12)


class TestBallsAndVolumes:
    """Test balls, cubes and volume estimates."""

    def test_unit_ball_volume_prototype(self, prototype):
        """The quasi-Monte-Carlo volume matches the Dirichlet integral 96 / 720."""
        assert unit_ball_volume(prototype) == pytest.approx(96.0 / 720.0, rel=1e-3)

    def test_rasterized_volume_agrees(self, prototype):
        """Counting grid cells inside the ball approaches the same volume."""
        volume = rasterized_unit_ball_volume(prototype, 128)
        assert volume == pytest.approx(96.0 / 720.0, rel=0.1)

    def test_doubling_exponent(self, three_block):
        """|B_2R| / |B_R| = 2^(Q+2)."""
        ratio = ball_volume(three_block, 0.8) / ball_volume(three_block, 0.4)
        assert np.log2(ratio) == pytest.approx(12.0, abs=1e-9)

    def test_nonpositive_radius_rejected(self, prototype):
        """Balls need a positive radius."""
        with pytest.raises(NonPositiveRadius):
            ball_volume(prototype, 0.0)
        with pytest.raises(NonPositiveRadius):
            GroupBall(prototype, SpaceTimePoint.of(0.0, 0.0, 0.0), -1.0)

    def test_ball_contains_center_and_not_far_points(self, prototype):
        """The center is inside and a far point is outside."""
        ball = GroupBall(prototype, SpaceTimePoint.of(0.2, 0.1, 0.5), 0.5)
        x = np.array([[0.2, 3.0], [0.1, 0.1]])
        t = np.array([0.5, 0.5])
        assert ball.contains(x, t).tolist() == [True, False]

    def test_bounding_box_scales_with_dilation(self, prototype):
        """Doubling the radius scales x_2 extents by 8 and t extents by 4 at the origin."""
        origin = SpaceTimePoint.of(0.0, 0.0, 0.0)
        lo1, hi1 = GroupBall(prototype, origin, 0.5).bounding_box()
        lo2, hi2 = GroupBall(prototype, origin, 1.0).bounding_box()
        widths1, widths2 = hi1 - lo1, hi2 - lo2
        assert widths2[1] / widths1[1] == pytest.approx(8.0, rel=1e-9)
        assert widths2[2] / widths1[2] == pytest.approx(4.0, rel=1e-9)

    def test_cube_half_widths(self, prototype):
        """Q_R has half-widths R, (Lambda N^2 R)^3 and R^2 / 2."""
        cube = cube_bounds(prototype, SpaceTimePoint.of(0.0, 0.0, 0.0), 0.5)
        assert np.allclose(cube.half_widths, [0.5, (2.0 * 4.0 * 0.5) ** 3, 0.125])

    def test_containment_constant(self, prototype):
        """The measured c0 dominates both containment ratios."""
        constant = measure_c0(prototype, n_points=2**10)
        assert constant.c0 >= max(constant.inner, constant.outer)
        assert constant.c0 >= 1.0


class TestQuasiMetricConstants:
    """Test sampled quasi-metric constants."""

    def test_quasi_symmetry_is_nested(self, prototype):
        """More samples never lower the sampled supremum."""
        small = quasi_symmetry_constant(prototype, 500, seed=7)
        large = quasi_symmetry_constant(prototype, 1000, seed=7)
        assert 0.0 < small <= large

    def test_quasi_triangle_is_finite(self, three_block):
        """The quasi-triangle constant is finite and positive."""
        value = quasi_triangle_constant(three_block, 2000)
        assert 0.0 < value < np.inf

    def test_group_diameter_of_unit_box(self, prototype):
        """The diameter is at least the time extent sqrt(1)."""
        assert group_diameter(prototype, [-1, -1, 0], [1, 1, 1]) >= 1.0
