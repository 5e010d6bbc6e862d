"""Spatial grids with integration weights, fields on them, and HF-to-LF restriction."""

from dataclasses import dataclass, field
from typing import Tuple

import numpy as np

from ..core.exceptions import IncompatibleGridsError, InvalidArgumentError

_MEASURE_RTOL = 1e-12


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.array(array, dtype=float, copy=True)
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class Grid:
    """
    Discretized 1D or 2D index set.

    Points are linearized row-major over ``shape``; for 2D grids point
    ``(i, j)`` sits at index ``i * n_y + j`` with ``i`` along x.
    """
    dim: int
    coordinates: np.ndarray
    weights: np.ndarray
    shape: Tuple[int, ...]
    lower: Tuple[float, ...]
    upper: Tuple[float, ...]
    periodic: bool = False
    cell_centered: bool = False

    def __post_init__(self):
        object.__setattr__(self, "coordinates", _frozen(np.reshape(self.coordinates, (-1, self.dim))))
        object.__setattr__(self, "weights", _frozen(self.weights))
        if self.dim not in (1, 2) or len(self.shape) != self.dim:
            raise InvalidArgumentError(f"Grid dimension {self.dim} does not match shape {self.shape}")
        n_points = int(np.prod(self.shape))
        if self.coordinates.shape[0] != n_points or self.weights.shape != (n_points,):
            raise InvalidArgumentError("Coordinate and weight counts must match the grid shape")
        if np.any(self.weights <= 0.0):
            raise InvalidArgumentError("Grid weights must be strictly positive")
        if not np.isclose(self.weights.sum(), self.measure, rtol=_MEASURE_RTOL, atol=0.0):
            raise InvalidArgumentError(
                f"Weights sum {self.weights.sum()!r} differs from domain measure {self.measure!r}"
            )
        for axis in self.axes():
            if np.any(np.diff(axis) <= 0.0):
                raise InvalidArgumentError("Grid coordinates must be strictly increasing along each axis")

    @property
    def n_points(self) -> int:
        return int(self.weights.shape[0])

    @property
    def measure(self) -> float:
        return float(np.prod(np.subtract(self.upper, self.lower)))

    @property
    def spacing(self) -> Tuple[float, ...]:
        return tuple((hi - lo) / n for lo, hi, n in zip(self.lower, self.upper, self.shape)) \
            if self.cell_centered else \
            tuple((hi - lo) / (n - 1) for lo, hi, n in zip(self.lower, self.upper, self.shape))

    def axes(self) -> Tuple[np.ndarray, ...]:
        """1D coordinate arrays along each axis."""
        if self.dim == 1:
            return (self.coordinates[:, 0],)
        n_x, n_y = self.shape
        grid_x = self.coordinates[:, 0].reshape(n_x, n_y)
        grid_y = self.coordinates[:, 1].reshape(n_x, n_y)
        return grid_x[:, 0], grid_y[0, :]

    def integrate(self, values: np.ndarray) -> np.ndarray:
        """Quadrature of one field (n_g,) or of every column of (n_g, M)."""
        return self.weights @ np.asarray(values, dtype=float)

    def matches(self, other: "Grid") -> bool:
        """True when both grids carry the same points and weights."""
        return (
            self is other
            or (self.dim == other.dim
                and self.shape == other.shape
                and np.allclose(self.lower, other.lower, rtol=0.0, atol=1e-14)
                and np.allclose(self.upper, other.upper, rtol=0.0, atol=1e-14)
                and np.array_equal(self.weights, other.weights))
        )

    def metadata(self) -> dict:
        """Key-value description used by CSV sidecars."""
        return {
            "dim": self.dim,
            "shape": list(self.shape),
            "lower": list(self.lower),
            "upper": list(self.upper),
            "layout": "cell_centered" if self.cell_centered else "nodal",
        }


@dataclass(frozen=True, eq=False)
class Field:
    """One scalar per grid point."""
    grid: Grid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        values = _frozen(np.ravel(self.values))
        if values.shape[0] != self.grid.n_points:
            raise InvalidArgumentError(
                f"Field has {values.shape[0]} values for a grid of {self.grid.n_points} points"
            )
        if not np.all(np.isfinite(values)):
            raise InvalidArgumentError("Field values must be finite")
        object.__setattr__(self, "values", values)

    def integral(self) -> float:
        return float(self.grid.integrate(self.values))

    def norm(self) -> float:
        """Grid-weighted L2 norm."""
        return float(np.sqrt(self.grid.weights @ (self.values * self.values)))

    def __add__(self, other: "Field") -> "Field":
        _require_same_grid(self.grid, other.grid)
        return Field(self.grid, self.values + other.values)

    def __sub__(self, other: "Field") -> "Field":
        _require_same_grid(self.grid, other.grid)
        return Field(self.grid, self.values - other.values)


def _require_same_grid(a: Grid, b: Grid) -> None:
    if not a.matches(b):
        raise IncompatibleGridsError(f"Grids differ: shape {a.shape} vs {b.shape}")


def make_uniform_grid_1d(n_g: int, lo: float, hi: float) -> Grid:
    """
    Equispaced nodes on ``[lo, hi]`` with composite trapezoidal weights.

    Args:
        n_g: Point count (>= 2)
        lo: Left end
        hi: Right end

    Returns:
        1D Grid
    """
    if n_g < 2:
        raise InvalidArgumentError(f"A 1D grid needs at least 2 points, got {n_g}")
    if not (np.isfinite(lo) and np.isfinite(hi)) or lo >= hi:
        raise InvalidArgumentError(f"Degenerate interval [{lo}, {hi}]")
    nodes = np.linspace(lo, hi, n_g)
    h = (hi - lo) / (n_g - 1)
    weights = np.full(n_g, h)
    weights[[0, -1]] = 0.5 * h
    return Grid(dim=1, coordinates=nodes, weights=weights, shape=(n_g,),
                lower=(float(lo),), upper=(float(hi),))


def make_uniform_grid_2d(n_x: int, n_y: int, lower: Tuple[float, float] = (0.0, 0.0),
                         upper: Tuple[float, float] = (1.0, 1.0)) -> Grid:
    """
    Cell-centered periodic grid on a rectangle (the unit square by default).

    Args:
        n_x: Cells along x (>= 2)
        n_y: Cells along y (>= 2)
        lower: Lower domain corner
        upper: Upper domain corner

    Returns:
        2D Grid with uniform weights
    """
    if n_x < 2 or n_y < 2:
        raise InvalidArgumentError(f"A 2D grid needs at least 2 cells per axis, got ({n_x}, {n_y})")
    (x0, y0), (x1, y1) = lower, upper
    if x0 >= x1 or y0 >= y1:
        raise InvalidArgumentError(f"Degenerate domain {lower} - {upper}")
    x = x0 + (np.arange(n_x) + 0.5) * (x1 - x0) / n_x
    y = y0 + (np.arange(n_y) + 0.5) * (y1 - y0) / n_y
    grid_x, grid_y = np.meshgrid(x, y, indexing="ij")
    coordinates = np.column_stack([grid_x.ravel(), grid_y.ravel()])
    weights = np.full(n_x * n_y, (x1 - x0) * (y1 - y0) / (n_x * n_y))
    return Grid(dim=2, coordinates=coordinates, weights=weights, shape=(n_x, n_y),
                lower=(float(x0), float(y0)), upper=(float(x1), float(y1)),
                periodic=True, cell_centered=True)


def restriction_ratio(fine: Grid, coarse: Grid) -> Tuple[int, int]:
    """Integer block sizes mapping ``fine`` cells onto ``coarse`` cells."""
    if fine.dim != 2 or coarse.dim != 2 or not (fine.cell_centered and coarse.cell_centered):
        raise IncompatibleGridsError("Restriction needs two cell-centered 2D grids")
    if fine.lower != coarse.lower or fine.upper != coarse.upper:
        raise IncompatibleGridsError("Restriction needs grids over the same domain")
    ratios = []
    for n_fine, n_coarse in zip(fine.shape, coarse.shape):
        if n_fine % n_coarse != 0:
            raise IncompatibleGridsError(f"Fine extent {n_fine} is not a multiple of coarse extent {n_coarse}")
        ratios.append(n_fine // n_coarse)
    return ratios[0], ratios[1]


def restrict_values(values: np.ndarray, fine: Grid, coarse: Grid) -> np.ndarray:
    """
    Block-average fine values onto the coarse grid.

    Args:
        values: (n_fine,) field or (n_fine, M) matrix of fields

    Returns:
        (n_coarse,) or (n_coarse, M)
    """
    r_x, r_y = restriction_ratio(fine, coarse)
    c_x, c_y = coarse.shape
    values = np.asarray(values, dtype=float)
    trailing = values.shape[1:]
    blocks = values.reshape((c_x, r_x, c_y, r_y) + trailing)
    return blocks.mean(axis=(1, 3)).reshape((c_x * c_y,) + trailing)


def restrict_field(hf: Field, lf_grid: Grid) -> Field:
    """Restrict a fine 2D field to ``lf_grid`` by arithmetic block means."""
    return Field(lf_grid, restrict_values(hf.values, hf.grid, lf_grid))


def grid_from_metadata(meta: dict) -> Grid:
    """Rebuild a grid from :meth:`Grid.metadata` output (values may be strings)."""
    def _floats(value):
        if isinstance(value, str):
            return [float(v) for v in value.split(",")]
        return [float(v) for v in value]

    dim = int(meta["dim"])
    shape = [int(float(v)) for v in _floats(meta["shape"])]
    lower = _floats(meta["lower"])
    upper = _floats(meta["upper"])
    if dim == 1:
        return make_uniform_grid_1d(shape[0], lower[0], upper[0])
    if dim == 2:
        return make_uniform_grid_2d(shape[0], shape[1], lower=tuple(lower), upper=tuple(upper))
    raise InvalidArgumentError(f"Unsupported grid dimension {dim}")
