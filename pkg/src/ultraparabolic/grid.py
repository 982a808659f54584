"""Grid functions on axis-aligned anisotropic space-time boxes.

Values live at cell centers of a uniform grid with axes (x_1, ..., x_N, t) in row-major
order. The on-disk format is one JSON header line followed by a flat little-endian
float64 payload.
"""

import json
import logging
import math
from collections.abc import Callable
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol

import numpy as np
from scipy import ndimage

from ultraparabolic.errors import (
    EmptyGrid,
    EmptyIntersection,
    ShapeMismatch,
    UnderResolvedRegion,
)

logger = logging.getLogger(__name__)

FORMAT_NAME = "ultraparabolic-grid"
FORMAT_VERSION = 1
MIN_CELLS_PER_AXIS = 3
CSV_MAX_CELLS = 100_000


class Region(Protocol):
    """Anything with a vectorised membership test and an enclosing box."""

    def contains(self, x: np.ndarray, t: np.ndarray) -> np.ndarray: ...

    def bounding_box(self) -> tuple[np.ndarray, np.ndarray]: ...


@dataclass(frozen=True)
class AxisBox:
    """Axis-aligned space-time box, used for nested interior domains."""

    lower: tuple[float, ...]
    upper: tuple[float, ...]

    def contains(self, x: np.ndarray, t: np.ndarray) -> np.ndarray:
        coords = [*np.asarray(x), np.asarray(t)]
        mask = np.ones(np.shape(coords[-1]), dtype=bool)
        for c, lo, hi in zip(coords, self.lower, self.upper, strict=True):
            mask &= (c >= lo) & (c <= hi)
        return mask

    def bounding_box(self) -> tuple[np.ndarray, np.ndarray]:
        return np.asarray(self.lower, dtype=float), np.asarray(self.upper, dtype=float)

    def shrunk(self, factor: float) -> "AxisBox":
        """Concentric box with every half-width multiplied by factor."""
        lo, hi = self.bounding_box()
        mid, half = (lo + hi) / 2.0, (hi - lo) / 2.0
        return AxisBox(tuple(mid - factor * half), tuple(mid + factor * half))


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Cell-centered values on a uniform space-time grid."""

    lower: tuple[float, ...]
    spacing: tuple[float, ...]
    values: np.ndarray
    name: str = ""
    provenance: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "lower", tuple(float(v) for v in self.lower))
        object.__setattr__(self, "spacing", tuple(float(v) for v in self.spacing))
        if values.size == 0:
            raise EmptyGrid(f"Grid function '{self.name}' has no cells")
        if not (values.ndim == len(self.lower) == len(self.spacing)):
            raise ShapeMismatch(
                f"Values of rank {values.ndim} do not match {len(self.lower)} axes"
            )
        if any(h <= 0 for h in self.spacing):
            raise ShapeMismatch(f"Spacings must be positive, got {self.spacing}")

    @classmethod
    def from_callable(
        cls,
        func: Callable[[np.ndarray, np.ndarray], np.ndarray],
        lower,
        upper,
        cells,
        name: str = "",
        **provenance,
    ) -> "GridFunction":
        """Sample func(x, t) at cell centers; x has shape (N, ...) and t shape (...)."""
        lower = np.asarray(lower, dtype=float)
        upper = np.asarray(upper, dtype=float)
        spacing = (upper - lower) / np.asarray(cells, dtype=float)
        template = cls(tuple(lower), tuple(spacing), np.zeros(tuple(int(n) for n in cells)))
        x, t = template.coordinates()
        values = np.broadcast_to(np.asarray(func(x, t), dtype=float), template.shape)
        return template.with_values(values.copy(), name=name, **provenance)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape

    @property
    def ndim(self) -> int:
        return self.values.ndim

    @property
    def N(self) -> int:
        """Number of spatial axes."""
        return self.values.ndim - 1

    @property
    def upper(self) -> tuple[float, ...]:
        return tuple(
            lo + n * h for lo, n, h in zip(self.lower, self.shape, self.spacing, strict=True)
        )

    @property
    def cell_volume(self) -> float:
        return math.prod(self.spacing)

    @property
    def axes(self) -> list[np.ndarray]:
        """Cell-center coordinates along every axis."""
        return [
            lo + h * (np.arange(n) + 0.5)
            for lo, h, n in zip(self.lower, self.spacing, self.shape, strict=True)
        ]

    @property
    def times(self) -> np.ndarray:
        return self.axes[-1]

    @property
    def box(self) -> AxisBox:
        return AxisBox(self.lower, self.upper)

    def coordinates(self, slices: tuple[slice, ...] | None = None) -> tuple[np.ndarray, np.ndarray]:
        """Meshgrid coordinates (x of shape (N, ...), t of shape (...)), optionally windowed."""
        axes = self.axes
        if slices is not None:
            axes = [a[sl] for a, sl in zip(axes, slices, strict=True)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.array(mesh[:-1]), mesh[-1]

    def with_values(
        self, values: np.ndarray, name: str | None = None, **provenance
    ) -> "GridFunction":
        """Grid function on the same grid with new values."""
        return GridFunction(
            lower=self.lower,
            spacing=self.spacing,
            values=values,
            name=self.name if name is None else name,
            provenance={**self.provenance, **provenance},
        )

    def refined(
        self, factor: int = 2
    ) -> tuple[tuple[float, ...], tuple[float, ...], tuple[int, ...]]:
        """(lower, upper, cells) of the same box with every axis refined by factor."""
        return self.lower, self.upper, tuple(n * factor for n in self.shape)

    def sample(self, points: np.ndarray, order: int = 3) -> np.ndarray:
        """Spline interpolation at rows of an (n, N + 1) array; zero outside the box."""
        points = np.atleast_2d(points)
        coords = [
            (points[:, j] - lo) / h - 0.5
            for j, (lo, h) in enumerate(zip(self.lower, self.spacing, strict=True))
        ]
        values = ndimage.map_coordinates(self.values, coords, order=order, mode="nearest")
        inside = np.all((points >= self.lower) & (points <= self.upper), axis=1)
        return np.where(inside, values, 0.0)

    def restricted(self, slices: tuple[slice, ...]) -> "GridFunction":
        """The sub-grid selected by index slices, keeping cell positions."""
        lower = tuple(
            lo + h * sl.indices(n)[0]
            for lo, h, sl, n in zip(self.lower, self.spacing, slices, self.shape, strict=True)
        )
        return GridFunction(
            lower=lower,
            spacing=self.spacing,
            values=self.values[slices].copy(),
            name=self.name,
            provenance=dict(self.provenance),
        )


def window(
    u: GridFunction, region: Region | None, min_cells: int = MIN_CELLS_PER_AXIS
) -> tuple[tuple[slice, ...], np.ndarray]:
    """Index window of the grid around a region and the membership mask inside it.

    Raises EmptyIntersection when no cell center lies in the region and
    UnderResolvedRegion when the region spans fewer than ``min_cells`` cells along an axis.
    """
    if region is None:
        return tuple(slice(0, n) for n in u.shape), np.ones(u.shape, dtype=bool)
    lo, hi = region.bounding_box()
    extents = (hi - lo) / np.asarray(u.spacing)
    if np.any(extents < min_cells):
        raise UnderResolvedRegion(
            f"Region spans {np.round(extents, 2).tolist()} cells, need {min_cells} per axis"
        )
    slices = []
    for lower, h, n, a, b in zip(u.lower, u.spacing, u.shape, lo, hi, strict=True):
        start = max(0, int(math.floor((a - lower) / h - 0.5)))
        stop = min(n, int(math.ceil((b - lower) / h + 0.5)))
        if start >= stop:
            raise EmptyIntersection("Region does not intersect the grid box")
        slices.append(slice(start, stop))
    slices = tuple(slices)
    x, t = u.coordinates(slices)
    mask = region.contains(x, t)
    if not mask.any():
        raise EmptyIntersection("No cell centers lie inside the region")
    return slices, mask


def region_inside(u: GridFunction, region: Region, margin_cells: float = 1.0) -> bool:
    """True when the region's bounding box sits inside the grid box with a cell margin."""
    lo, hi = region.bounding_box()
    margin = margin_cells * np.asarray(u.spacing)
    return bool(
        np.all(lo >= np.asarray(u.lower) + margin) and np.all(hi <= np.asarray(u.upper) - margin)
    )


def save_grid(u: GridFunction, path: Path | str) -> Path:
    """Write the self-describing binary format."""
    path = Path(path)
    header = {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "axes": [f"x{j + 1}" for j in range(u.N)] + ["t"],
        "lower": list(u.lower),
        "spacing": list(u.spacing),
        "shape": list(u.shape),
        "order": "C",
        "dtype": "<f8",
        "name": u.name,
        "provenance": u.provenance,
    }
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("wb") as handle:
        handle.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        handle.write(np.ascontiguousarray(u.values, dtype="<f8").tobytes())
    logger.debug("Wrote grid '%s' %s to %s", u.name, u.shape, path)
    return path


def load_grid(path: Path | str) -> GridFunction:
    """Read a grid written by :func:`save_grid`."""
    raw = Path(path).read_bytes()
    newline = raw.index(b"\n")
    header = json.loads(raw[:newline])
    if header.get("format") != FORMAT_NAME:
        raise ShapeMismatch(f"{path} is not a {FORMAT_NAME} file")
    values = np.frombuffer(raw[newline + 1 :], dtype="<f8")
    shape = tuple(header["shape"])
    if values.size != math.prod(shape):
        raise ShapeMismatch(f"{path}: payload has {values.size} values, header says {shape}")
    return GridFunction(
        lower=tuple(header["lower"]),
        spacing=tuple(header["spacing"]),
        values=values.reshape(shape).copy(),
        name=header.get("name", ""),
        provenance=header.get("provenance", {}),
    )


def export_csv(u: GridFunction, path: Path | str) -> Path:
    """Write one row per cell: x_1, ..., x_N, t, value."""
    if u.values.size > CSV_MAX_CELLS:
        raise ShapeMismatch(
            f"CSV export is limited to {CSV_MAX_CELLS} cells, grid has {u.values.size}"
        )
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    x, t = u.coordinates()
    columns = [*(c.ravel() for c in x), t.ravel(), u.values.ravel()]
    header = ",".join([f"x{j + 1}" for j in range(u.N)] + ["t", "value"])
    np.savetxt(
        path, np.column_stack(columns), delimiter=",", header=header, comments="", fmt="%.17g"
    )
    return path
