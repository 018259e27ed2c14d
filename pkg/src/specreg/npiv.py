"""Nonparametric IV: kernel estimators and the regularized fit.

The model E[Y|W] = E[phi(Z)|W] is rewritten as the integral equation
r(w) = int phi(z) f_ZW(z, w) dz.  Both sides are estimated by kernel
smoothing: r by a kernel average of Y against W, the operator by the joint
kernel density estimate on a product grid.  Scalar Z and W on [0, 1] only.

No boundary correction is applied and the raw density estimate feeds the
operator as-is; the Monte Carlo designs concentrate mass in the interior.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import GridMismatchError, InvalidArgumentError
from .grid import Grid, GridFunction
from .operators import DiscreteOperator, FilterSpec, regularize

__all__ = [
    "NpivSample",
    "KernelSpec",
    "DensityEstimate",
    "kernel_values",
    "kernel_l2sq",
    "kernel_selfconv",
    "kde_joint",
    "estimate_r",
    "build_operator",
    "npiv_fit",
]

KERNELS = ("gaussian", "epanechnikov")


@dataclass(frozen=True)
class NpivSample:
    """Observations (y_i, z_i, w_i) with scalar z, w supported on [0, 1]."""

    y: np.ndarray
    z: np.ndarray
    w: np.ndarray

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float)
        z = np.asarray(self.z, dtype=float)
        w = np.asarray(self.w, dtype=float)
        if y.ndim != 1 or y.size < 2 or z.shape != y.shape or w.shape != y.shape:
            raise InvalidArgumentError("y, z, w must be equal-length vectors, n >= 2")
        if not (np.all(np.isfinite(y)) and np.all(np.isfinite(z)) and np.all(np.isfinite(w))):
            raise InvalidArgumentError("sample contains non-finite values")
        if z.min() < 0 or z.max() > 1 or w.min() < 0 or w.max() > 1:
            raise InvalidArgumentError("z and w must lie in [0, 1]")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "w", w)

    @property
    def n(self) -> int:
        return self.y.size


@dataclass(frozen=True)
class KernelSpec:
    """Kernel family and the two bandwidths."""

    kernel: str = "gaussian"
    h_z: float = 0.15
    h_w: float = 0.1

    def __post_init__(self):
        if self.kernel not in KERNELS:
            raise InvalidArgumentError(f"unknown kernel {self.kernel!r}")
        if not (self.h_z > 0 and self.h_w > 0):
            raise InvalidArgumentError("bandwidths must be > 0")


def kernel_values(kernel: str, u: np.ndarray) -> np.ndarray:
    """Evaluate the kernel function at u."""
    u = np.asarray(u, dtype=float)
    if kernel == "gaussian":
        return np.exp(-0.5 * u**2) / np.sqrt(2.0 * np.pi)
    return np.where(np.abs(u) <= 1.0, 0.75 * (1.0 - u**2), 0.0)


def kernel_l2sq(kernel: str) -> float:
    """int K(u)^2 du."""
    if kernel == "gaussian":
        return 1.0 / (2.0 * np.sqrt(np.pi))
    return 0.6


def kernel_selfconv(kernel: str, x: np.ndarray) -> np.ndarray:
    """The self-convolution (K * K)(x); equals kernel_l2sq at x = 0."""
    x = np.asarray(x, dtype=float)
    if kernel == "gaussian":
        return np.exp(-0.25 * x**2) / (2.0 * np.sqrt(np.pi))
    ax = np.abs(x)
    val = (3.0 / 160.0) * (2.0 - ax) ** 3 * (ax**2 + 6.0 * ax + 4.0)
    return np.where(ax <= 2.0, val, 0.0)


@dataclass(frozen=True)
class DensityEstimate:
    """Bivariate density values on the product grid; rows index z, columns w."""

    values: np.ndarray
    z_grid: Grid
    w_grid: Grid

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        if vals.shape != (self.z_grid.size, self.w_grid.size):
            raise GridMismatchError("density shape does not match grids")
        if not np.all(np.isfinite(vals)):
            raise InvalidArgumentError("density values must be finite")

    def mass(self) -> float:
        return float(self.z_grid.weights @ self.values @ self.w_grid.weights)


def _kernel_matrix(kernel: str, data: np.ndarray, nodes: np.ndarray, h: float) -> np.ndarray:
    # (n, m) matrix of K((data_i - node_j) / h)
    return kernel_values(kernel, (data[:, None] - nodes[None, :]) / h)


def kde_joint(sample: NpivSample, spec: KernelSpec, grid: Grid) -> DensityEstimate:
    """Joint kernel density of (Z, W) evaluated on the product grid."""
    kz = _kernel_matrix(spec.kernel, sample.z, grid.points, spec.h_z)
    kw = _kernel_matrix(spec.kernel, sample.w, grid.points, spec.h_w)
    vals = kz.T @ kw / (sample.n * spec.h_z * spec.h_w)
    return DensityEstimate(vals, grid, grid)


def estimate_r(sample: NpivSample, spec: KernelSpec, grid: Grid) -> GridFunction:
    """Kernel average r_hat(w) = (1/(n h_w)) sum_i y_i K((W_i - w)/h_w)."""
    kw = _kernel_matrix(spec.kernel, sample.w, grid.points, spec.h_w)
    return GridFunction(grid, sample.y @ kw / (sample.n * spec.h_w))


def build_operator(density: DensityEstimate) -> DiscreteOperator:
    """The integral operator phi -> int phi(z) f(z, w) dz with kernel f.

    Rows of the operator matrix index the output (w) grid, so the kernel
    matrix is the transposed density table; the adjoint transposes back.
    """
    return DiscreteOperator(density.values.T, density.z_grid, density.w_grid)


def npiv_fit(
    sample: NpivSample, kspec: KernelSpec, fspec: FilterSpec, grid: Grid
) -> GridFunction:
    """Full pipeline: KDE -> operator -> regularized solve on the grid."""
    op = build_operator(kde_joint(sample, kspec, grid))
    r_hat = estimate_r(sample, kspec, grid)
    return regularize(op, r_hat, fspec)
