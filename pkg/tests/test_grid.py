"""Tests for grid functions, regions and the grid file format."""

import numpy as np
import pytest

from ultraparabolic.errors import (
    EmptyGrid,
    EmptyIntersection,
    ShapeMismatch,
    UnderResolvedRegion,
)
from ultraparabolic.grid import (
    CSV_MAX_CELLS,
    AxisBox,
    GridFunction,
    export_csv,
    load_grid,
    region_inside,
    save_grid,
    window,
)


@pytest.fixture
def ramp():
    """u = x_1 + 2 x_2 + 3 t on [0, 1]^3 with 10 cells per axis."""
    return GridFunction.from_callable(
        lambda x, t: x[0] + 2 * x[1] + 3 * t,
        [0.0, 0.0, 0.0],
        [1.0, 1.0, 1.0],
        (10, 10, 10),
        name="ramp",
        source="test",
    )


class TestGridFunction:
    """Test construction and geometry of grid functions."""

    def test_cell_centers(self, ramp):
        """Values are sampled at cell centers."""
        assert ramp.axes[0][0] == pytest.approx(0.05)
        assert ramp.values[0, 0, 0] == pytest.approx(0.05 * 6)
        assert ramp.upper == pytest.approx((1.0, 1.0, 1.0))
        assert ramp.cell_volume == pytest.approx(1e-3)

    def test_scalar_callable_broadcasts(self):
        """A constant callable fills the whole grid."""
        u = GridFunction.from_callable(lambda x, t: 2.0, [0, 0], [1, 1], (4, 5))
        assert u.shape == (4, 5)
        assert np.all(u.values == 2.0)

    def test_empty_grid_rejected(self):
        """A grid with no cells is an error."""
        with pytest.raises(EmptyGrid):
            GridFunction(lower=(0.0, 0.0), spacing=(1.0, 1.0), values=np.zeros((0, 3)))

    def test_rank_mismatch_rejected(self):
        """lower, spacing and values must agree on the number of axes."""
        with pytest.raises(ShapeMismatch):
            GridFunction(lower=(0.0,), spacing=(1.0, 1.0), values=np.zeros((3, 3)))

    def test_with_values_merges_provenance(self, ramp):
        """New values keep the grid and extend the provenance."""
        doubled = ramp.with_values(2 * ramp.values, level=1)
        assert doubled.lower == ramp.lower
        assert doubled.provenance == {"source": "test", "level": 1}
        assert doubled.name == "ramp"

    def test_refined_doubles_cells(self, ramp):
        """refined keeps the box and multiplies the cell counts."""
        lower, upper, cells = ramp.refined()
        assert cells == (20, 20, 20)
        assert upper == ramp.upper

    def test_restricted_keeps_positions(self, ramp):
        """A sub-grid keeps its cells at the same coordinates."""
        sub = ramp.restricted((slice(2, 5), slice(0, 10), slice(3, 6)))
        assert sub.shape == (3, 10, 3)
        assert sub.axes[0][0] == pytest.approx(ramp.axes[0][2])
        assert sub.values[0, 0, 0] == ramp.values[2, 0, 3]


class TestSample:
    """Test interpolation at scattered points."""

    def test_linear_function_reproduced(self, ramp):
        """Linear interpolation is exact for linear data between cell centers."""
        points = np.array([[0.33, 0.41, 0.52], [0.5, 0.5, 0.5]])
        expected = points[:, 0] + 2 * points[:, 1] + 3 * points[:, 2]
        assert np.allclose(ramp.sample(points, order=1), expected)

    def test_zero_outside_box(self, ramp):
        """Points outside the grid box sample to zero."""
        points = np.array([[1.5, 0.5, 0.5], [0.5, 0.5, -0.1]])
        assert ramp.sample(points).tolist() == [0.0, 0.0]


class TestRegions:
    """Test windows and masks of regions on grids."""

    def test_axis_box_window(self, ramp):
        """An axis box selects exactly its cell centers."""
        slices, mask = window(ramp, AxisBox((0.2, 0.2, 0.2), (0.8, 0.8, 0.8)))
        assert np.count_nonzero(mask) == 6**3

    def test_whole_grid_without_region(self, ramp):
        """No region means every cell."""
        slices, mask = window(ramp, None)
        assert mask.all()
        assert mask.shape == ramp.shape

    def test_under_resolved_region(self, ramp):
        """Regions narrower than three cells are rejected."""
        with pytest.raises(UnderResolvedRegion):
            window(ramp, AxisBox((0.4, 0.0, 0.0), (0.5, 1.0, 1.0)))

    def test_disjoint_region(self, ramp):
        """Regions beside the grid box do not intersect it."""
        with pytest.raises(EmptyIntersection):
            window(ramp, AxisBox((2.0, 2.0, 2.0), (3.0, 3.0, 3.0)))

    def test_shrunk_box(self):
        """Shrinking keeps the midpoint and scales the half-widths."""
        box = AxisBox((0.0, -2.0), (2.0, 2.0)).shrunk(0.5)
        assert box.lower == pytest.approx((0.5, -1.0))
        assert box.upper == pytest.approx((1.5, 1.0))

    def test_region_inside_with_margin(self, ramp):
        """A box touching the grid boundary is not inside with a one-cell margin."""
        assert region_inside(ramp, AxisBox((0.2, 0.2, 0.2), (0.8, 0.8, 0.8)))
        assert not region_inside(ramp, AxisBox((0.0, 0.2, 0.2), (0.8, 0.8, 0.8)))


class TestFiles:
    """Test the binary grid format and CSV export."""

    def test_save_and_load(self, ramp, tmp_path):
        """The header carries geometry, name and provenance."""
        path = save_grid(ramp, tmp_path / "ramp.grid")

        loaded = load_grid(path)

        assert np.array_equal(loaded.values, ramp.values)
        assert loaded.lower == ramp.lower
        assert loaded.spacing == ramp.spacing
        assert loaded.name == "ramp"
        assert loaded.provenance == {"source": "test"}

    def test_foreign_file_rejected(self, tmp_path):
        """Files without the format header are rejected."""
        path = tmp_path / "other.grid"
        path.write_bytes(b'{"format": "other"}\n')
        with pytest.raises(ShapeMismatch):
            load_grid(path)

    def test_truncated_payload_rejected(self, ramp, tmp_path):
        """A payload shorter than the header's shape is rejected."""
        path = save_grid(ramp, tmp_path / "ramp.grid")
        path.write_bytes(path.read_bytes()[:-8])
        with pytest.raises(ShapeMismatch):
            load_grid(path)

    def test_csv_export(self, ramp, tmp_path):
        """One header line plus one row per cell."""
        path = export_csv(ramp, tmp_path / "ramp.csv")

        lines = path.read_text().splitlines()

        assert lines[0] == "x1,x2,t,value"
        assert len(lines) == 1 + ramp.values.size

    def test_csv_export_size_limit(self, tmp_path):
        """Large grids are not exported as CSV."""
        side = int(round(CSV_MAX_CELLS ** (1 / 3))) + 2
        big = GridFunction.from_callable(lambda x, t: t, [0, 0, 0], [1, 1, 1], (side,) * 3)
        with pytest.raises(ShapeMismatch):
            export_csv(big, tmp_path / "big.csv")
