"""Functional linear IV regression: Y = <Z, phi> + U with instrument W.

The cross-moment r = E[YW] and the cross-covariance operator
K: phi -> E[W <Z, phi>] are estimated by sample averages; the regularized
fit is then the generic spectral solve from :mod:`specreg.operators`.  The
estimated operator has rank at most n, so the non-identified machinery is
exercised for every finite sample.

A synthetic generator is included for experiments: Z is a truncated random
trigonometric series with coefficient decay j^{-1.5}, W = Z plus an
independent series of the same form, and the target is a fixed smooth
trigonometric polynomial.  Restricting the series of Z to its first ``j0``
basis directions makes everything beyond index ``j0`` non-identified.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import GridMismatchError, InvalidArgumentError
from .grid import Grid, GridFunction, basis_matrix, BasisSpec, make_grid
from .operators import DiscreteOperator, FilterSpec, SvdCache, regularize, svd

__all__ = [
    "FlirSample",
    "FlirDgpConfig",
    "estimate_r",
    "estimate_K",
    "flir_fit",
    "flir_sample",
    "flir_target",
    "flir_best_approx",
]


@dataclass(frozen=True)
class FlirSample:
    """Observations (y_i, z_i, w_i) with z, w grid functions on one grid.

    ``z`` and ``w`` are stored as (n, m) arrays of values on ``grid``.
    """

    y: np.ndarray
    z: np.ndarray
    w: np.ndarray
    grid: Grid

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float)
        z = np.asarray(self.z, dtype=float)
        w = np.asarray(self.w, dtype=float)
        for name, arr in (("y", y), ("z", z), ("w", w)):
            if not np.all(np.isfinite(arr)):
                raise InvalidArgumentError(f"{name} contains non-finite values")
        if y.ndim != 1 or y.size < 1:
            raise InvalidArgumentError("y must be a nonempty vector")
        m = self.grid.size
        if z.shape != (y.size, m) or w.shape != (y.size, m):
            raise GridMismatchError("z and w must have shape (n, grid size)")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "w", w)

    @property
    def n(self) -> int:
        return self.y.size


def _demeaned(sample: FlirSample) -> FlirSample:
    return FlirSample(
        y=sample.y - sample.y.mean(),
        z=sample.z - sample.z.mean(axis=0),
        w=sample.w - sample.w.mean(axis=0),
        grid=sample.grid,
    )


def estimate_r(sample: FlirSample, demean: bool = False) -> GridFunction:
    """Sample cross moment (1/n) sum_i y_i w_i as a grid function."""
    s = _demeaned(sample) if demean else sample
    return GridFunction(s.grid, s.y @ s.w / s.n)


def estimate_K(sample: FlirSample, demean: bool = False) -> DiscreteOperator:
    """Sample cross-covariance operator phi -> (1/n) sum_i <z_i, phi> w_i.

    The adjoint is the swapped form phi -> (1/n) sum_i <w_i, phi> z_i.
    Rank is at most n.
    """
    s = _demeaned(sample) if demean else sample
    return DiscreteOperator(s.w.T @ s.z / s.n, s.grid, s.grid)


def flir_fit(
    sample: FlirSample,
    spec: FilterSpec,
    demean: bool = False,
    cache: Optional[SvdCache] = None,
) -> GridFunction:
    """Regularized estimate of the structural function."""
    return regularize(
        estimate_K(sample, demean=demean),
        estimate_r(sample, demean=demean),
        spec,
        cache=cache,
    )


# ---------------------------------------------------------------------------
# Synthetic generator
# ---------------------------------------------------------------------------

# Fixed smooth target: a trigonometric polynomial on the first 8 basis
# directions with mixed-sign decaying coefficients.
TARGET_COEFFS = np.array([0.9, -0.5, 0.35, -0.25, 0.18, 0.12, -0.08, 0.05])


@dataclass(frozen=True)
class FlirDgpConfig:
    """Synthetic design: Z spans the first ``j0`` basis directions (all
    ``series_terms`` when ``j0`` is None), W = Z + an independent series.

    Coefficients scale as j^{-decay}; U is Gaussian noise.  Everything
    beyond index ``j0`` lies in the null space of the cross-covariance
    operator.
    """

    n: int
    seed: int
    j0: Optional[int] = None
    series_terms: int = 10
    decay: float = 1.5
    noise_sd: float = 0.5
    m: int = 100

    def __post_init__(self):
        if self.n < 2:
            raise InvalidArgumentError("need n >= 2")
        if self.j0 is not None and not 1 <= self.j0 <= self.series_terms:
            raise InvalidArgumentError("j0 must lie in 1..series_terms")


def flir_target(grid: Grid) -> GridFunction:
    """The fixed smooth structural function of the synthetic design."""
    cols = basis_matrix(BasisSpec(count=TARGET_COEFFS.size), grid.points)
    return GridFunction(grid, cols @ TARGET_COEFFS)


def flir_best_approx(config: FlirDgpConfig, grid: Grid) -> GridFunction:
    """Projection of the target onto the identified span {phi_1..phi_j0}."""
    j0 = config.series_terms if config.j0 is None else config.j0
    keep = min(j0, TARGET_COEFFS.size)
    coeffs = np.zeros_like(TARGET_COEFFS)
    coeffs[:keep] = TARGET_COEFFS[:keep]
    cols = basis_matrix(BasisSpec(count=TARGET_COEFFS.size), grid.points)
    return GridFunction(grid, cols @ coeffs)


def flir_sample(config: FlirDgpConfig) -> FlirSample:
    """Draw a synthetic sample; deterministic given the seed."""
    rng = np.random.default_rng(np.random.Philox(key=np.uint64(config.seed)))
    grid = make_grid(config.m)
    terms = config.series_terms
    j0 = terms if config.j0 is None else config.j0
    scales = np.arange(1, terms + 1, dtype=float) ** -config.decay
    cols = basis_matrix(BasisSpec(count=terms), grid.points)  # (m, terms)

    z_scales = scales.copy()
    z_scales[j0:] = 0.0
    z_coef = rng.standard_normal((config.n, terms)) * z_scales
    v_coef = rng.standard_normal((config.n, terms)) * scales
    z = z_coef @ cols.T
    w = z + v_coef @ cols.T

    target = flir_target(grid)
    u = rng.standard_normal(config.n) * config.noise_sd
    y = z @ (grid.weights * target.values) + u
    return FlirSample(y=y, z=z, w=w, grid=grid)
