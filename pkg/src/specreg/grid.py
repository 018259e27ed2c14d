"""Grid functions on [0, 1]: quadrature, norms, and the trigonometric basis.

Functions are represented by their values on a uniform midpoint grid with
attached quadrature weights.  The midpoint rule keeps the trigonometric
system numerically orthonormal (exactly, up to aliasing) which every other
module relies on: projections, operator discretizations and the Monte Carlo
density constructions all reduce to weighted sums over these nodes.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable

import numpy as np

from .errors import GridMismatchError, InvalidArgumentError

__all__ = [
    "Grid",
    "GridFunction",
    "BasisSpec",
    "make_grid",
    "on_grid",
    "inner",
    "l2_norm",
    "sup_norm",
    "trig_basis",
    "basis_matrix",
    "project_onto_span",
]


def _frozen(values, dtype=float) -> np.ndarray:
    out = np.array(values, dtype=dtype)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class Grid:
    """Uniform quadrature grid on [0, 1].

    ``points`` are strictly increasing nodes in [0, 1] and ``weights`` are
    the matching quadrature weights, summing to one (the length of [0, 1]).
    Instances are immutable and safe to share across threads.
    """

    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "points", _frozen(self.points))
        object.__setattr__(self, "weights", _frozen(self.weights))
        p, w = self.points, self.weights
        if p.ndim != 1 or w.shape != p.shape:
            raise InvalidArgumentError("points and weights must be 1-d and equal length")
        if p.size < 2 or np.any(np.diff(p) <= 0) or p[0] < 0 or p[-1] > 1:
            raise InvalidArgumentError("points must be strictly increasing within [0, 1]")
        if np.any(w <= 0):
            raise InvalidArgumentError("quadrature weights must be positive")
        if abs(w.sum() - 1.0) > 1e-12:
            raise InvalidArgumentError("quadrature weights must sum to 1 within 1e-12")

    @property
    def size(self) -> int:
        return self.points.size

    def matches(self, other: "Grid") -> bool:
        return self is other or (
            self.points.shape == other.points.shape
            and np.array_equal(self.points, other.points)
            and np.array_equal(self.weights, other.weights)
        )


def make_grid(m: int) -> Grid:
    """Uniform midpoint grid with ``m`` nodes and weights 1/m each."""
    if not isinstance(m, (int, np.integer)) or m < 4:
        raise InvalidArgumentError(f"grid size must be an integer >= 4, got {m!r}")
    points = (np.arange(m) + 0.5) / m
    return Grid(points=points, weights=np.full(m, 1.0 / m))


@dataclass(frozen=True)
class GridFunction:
    """A real-valued function sampled on a :class:`Grid`.

    Values must be finite.  Instances are immutable; arithmetic returns new
    functions on the same grid.
    """

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen(self.values))
        if self.values.shape != self.grid.points.shape:
            raise GridMismatchError("values length does not match grid size")
        if not np.all(np.isfinite(self.values)):
            raise InvalidArgumentError("grid function values must be finite")

    def __add__(self, other: "GridFunction") -> "GridFunction":
        _require_same_grid(self, other)
        return GridFunction(self.grid, self.values + other.values)

    def __sub__(self, other: "GridFunction") -> "GridFunction":
        _require_same_grid(self, other)
        return GridFunction(self.grid, self.values - other.values)

    def __mul__(self, scalar: float) -> "GridFunction":
        return GridFunction(self.grid, self.values * float(scalar))

    __rmul__ = __mul__

    def __neg__(self) -> "GridFunction":
        return GridFunction(self.grid, -self.values)


def on_grid(fn: Callable[[np.ndarray], np.ndarray], grid: Grid) -> GridFunction:
    """Sample a vectorized callable on the grid nodes."""
    return GridFunction(grid, np.asarray(fn(grid.points), dtype=float))


def _require_same_grid(f: GridFunction, g: GridFunction) -> None:
    if not f.grid.matches(g.grid):
        raise GridMismatchError("grid functions live on different grids")


def inner(f: GridFunction, g: GridFunction) -> float:
    """Quadrature L2 inner product sum_i w_i f(x_i) g(x_i)."""
    _require_same_grid(f, g)
    return float(np.dot(f.grid.weights * f.values, g.values))


def l2_norm(f: GridFunction) -> float:
    return float(np.sqrt(np.dot(f.grid.weights, f.values**2)))


def sup_norm(f: GridFunction) -> float:
    return float(np.max(np.abs(f.values)))


@dataclass(frozen=True)
class BasisSpec:
    """A finite orthonormal system; only the trigonometric one is supported.

    Ordering is (1, cos_1, sin_1, cos_2, sin_2, ...): index 1 is the constant,
    index 2k is sqrt(2) cos(2 pi k x) and index 2k+1 is sqrt(2) sin(2 pi k x).
    """

    kind: str = "trigonometric"
    count: int = 25

    def __post_init__(self):
        if self.kind != "trigonometric":
            raise InvalidArgumentError(f"unsupported basis kind {self.kind!r}")
        if not isinstance(self.count, (int, np.integer)) or self.count < 1:
            raise InvalidArgumentError("basis count must be a positive integer")


def _trig_values(j: int, x: np.ndarray) -> np.ndarray:
    if j < 1:
        raise InvalidArgumentError("basis index must be >= 1")
    if j == 1:
        return np.ones_like(x)
    k = j // 2
    if j % 2 == 0:
        return np.sqrt(2.0) * np.cos(2.0 * np.pi * k * x)
    return np.sqrt(2.0) * np.sin(2.0 * np.pi * k * x)


def trig_basis(j: int, grid: Grid) -> GridFunction:
    """The j-th trigonometric basis function sampled on the grid."""
    return GridFunction(grid, _trig_values(int(j), grid.points))


def basis_matrix(basis: BasisSpec, points: np.ndarray) -> np.ndarray:
    """Matrix of basis values, shape (len(points), basis.count)."""
    points = np.asarray(points, dtype=float)
    return np.column_stack([_trig_values(j, points) for j in range(1, basis.count + 1)])


def project_onto_span(
    f: GridFunction, basis: BasisSpec, indices: Iterable[int]
) -> GridFunction:
    """Orthogonal projection of ``f`` onto span{phi_j : j in indices}.

    This is the best-approximation operator: coefficients are quadrature
    inner products with the (orthonormal) basis functions.
    """
    idx = sorted(set(int(j) for j in indices))
    if any(j < 1 or j > basis.count for j in idx):
        raise InvalidArgumentError(
            f"indices must lie in 1..{basis.count}, got {idx!r}"
        )
    if not idx:
        return GridFunction(f.grid, np.zeros(f.grid.size))
    cols = np.column_stack([_trig_values(j, f.grid.points) for j in idx])
    coeffs = cols.T @ (f.grid.weights * f.values)
    return GridFunction(f.grid, cols @ coeffs)
