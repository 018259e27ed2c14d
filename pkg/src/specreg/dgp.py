"""Monte Carlo data-generating process with a controllable null space.

The joint density of (Z, W) starts from a bivariate normal truncated to the
unit square and is projected onto a truncated tensor trigonometric basis:
keeping only the first ``j0`` z-frequencies makes every higher frequency
non-identified (the integral operator annihilates it).  ``j0 = None`` is the
fully identified case where the z-sum runs as far as the k-sum.

The projection of a density need not stay nonnegative, so negative values
are clipped to zero and the result renormalized; the inner k-sum is
truncated at ``k_max`` (default 25, which reproduces the smooth target
density to well under 5% in L2).  Draws use rejection sampling against a
uniform envelope at 1.01x the maximum density value seen on a fine internal
grid; outcomes are Y = phi(Z) + eps * Z with standard normal eps, so the
noise is heteroskedastic by construction.

All randomness flows through a counter-based Philox generator keyed by the
64-bit seed; replication r of an experiment uses seed + r.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional, Tuple

import numpy as np
from scipy.stats import norm

from .errors import (
    DegenerateDensityError,
    EnvelopeError,
    InvalidArgumentError,
)
from .grid import BasisSpec, Grid, GridFunction, basis_matrix, on_grid, project_onto_span
from .npiv import DensityEstimate, NpivSample

__all__ = [
    "DgpConfig",
    "DEFAULT_MEAN",
    "DEFAULT_COV",
    "true_phi",
    "truncated_normal_density",
    "build_nid_density",
    "best_approx",
    "sample",
    "parse_j0",
    "format_j0",
]

DEFAULT_MEAN: Tuple[float, float] = (0.5, 0.5)
DEFAULT_COV: Tuple[Tuple[float, float], Tuple[float, float]] = (
    (0.05, 0.01),
    (0.01, 0.05),
)

# Structural polynomial coefficients, degree 10 down to the constant term.
PHI_COEFFS = np.array([1, -1, 1, -1, 1, -1, 1, 1, -1, -1, 0], dtype=float)

_FINE_M = 512  # internal resolution for coefficients, normalizer, envelope


@dataclass(frozen=True)
class DgpConfig:
    """Full parameterization of one Monte Carlo design.

    ``j0 = None`` denotes the fully identified (infinite) case.  The
    aliasing guard j0, k_max <= m/4 is enforced against whichever grid the
    density is evaluated on.
    """

    n: int
    seed: int
    j0: Optional[int] = None
    k_max: int = 25
    mean: Tuple[float, float] = DEFAULT_MEAN
    cov: Tuple[Tuple[float, float], Tuple[float, float]] = DEFAULT_COV

    def __post_init__(self):
        if self.n < 1:
            raise InvalidArgumentError("need n >= 1")
        if self.j0 is not None and self.j0 < 1:
            raise InvalidArgumentError("j0 must be a positive integer or None")
        if self.k_max < 1:
            raise InvalidArgumentError("k_max must be a positive integer")
        c = np.asarray(self.cov, dtype=float)
        if c.shape != (2, 2) or abs(c[0, 1] - c[1, 0]) > 0 or np.any(
            np.linalg.eigvalsh(c) <= 0
        ):
            raise InvalidArgumentError("cov must be symmetric positive definite")

    @property
    def j_count(self) -> int:
        return self.k_max if self.j0 is None else self.j0


def parse_j0(token) -> Optional[int]:
    """Accept an integer or an infinity token ("inf", "infinity", None)."""
    if token is None:
        return None
    if isinstance(token, str):
        if token.lower() in ("inf", "infinity"):
            return None
        raise InvalidArgumentError(f"cannot parse j0 token {token!r}")
    if isinstance(token, float) and math.isinf(token):
        return None
    return int(token)


def format_j0(j0: Optional[int]) -> str:
    return "inf" if j0 is None else str(j0)


def true_phi(z):
    """The degree-10 structural polynomial, vanishing at 0 and 1."""
    return np.polyval(PHI_COEFFS, z)


@lru_cache(maxsize=8)
def _unit_square_mass(mean: tuple, cov: tuple) -> float:
    # mass of the bivariate normal on [0,1]^2 by 1-d quadrature of the
    # conditional decomposition f_Z(z) * P(W in [0,1] | Z = z)
    mz, mw = mean
    (szz, szw), (_, sww) = cov
    sd_z = math.sqrt(szz)
    slope = szw / szz
    cond_sd = math.sqrt(sww - szw**2 / szz)
    z = (np.arange(8192) + 0.5) / 8192
    fz = norm.pdf(z, mz, sd_z)
    cm = mw + slope * (z - mz)
    inside = norm.cdf((1.0 - cm) / cond_sd) - norm.cdf((0.0 - cm) / cond_sd)
    return float(np.mean(fz * inside))


def truncated_normal_density(z, w, mean=DEFAULT_MEAN, cov=DEFAULT_COV):
    """Bivariate normal density truncated (renormalized) to the unit square;
    zero outside it.  Vectorized over broadcastable z, w."""
    z = np.asarray(z, dtype=float)
    w = np.asarray(w, dtype=float)
    c = np.asarray(cov, dtype=float)
    det = np.linalg.det(c)
    inv = np.linalg.inv(c)
    dz = z - mean[0]
    dw = w - mean[1]
    quad = inv[0, 0] * dz**2 + 2.0 * inv[0, 1] * dz * dw + inv[1, 1] * dw**2
    pdf = np.exp(-0.5 * quad) / (2.0 * np.pi * np.sqrt(det))
    mass = _unit_square_mass(tuple(mean), tuple(tuple(r) for r in cov))
    out = pdf / mass
    inside = (z >= 0) & (z <= 1) & (w >= 0) & (w <= 1)
    return np.where(inside, out, 0.0)


@dataclass(frozen=True)
class _NidModel:
    """Cached continuous representation of the truncated-basis density."""

    coeffs: np.ndarray  # (j_count, k_max) tensor-basis coefficients
    c_norm: float  # normalizer of the clipped continuous density
    peak: float  # max of the normalized density on the fine grid
    mean: Tuple[float, float]
    cov: tuple


@lru_cache(maxsize=16)
def _nid_model(j_count: int, k_max: int, mean: tuple, cov: tuple) -> _NidModel:
    fine = (np.arange(_FINE_M) + 0.5) / _FINE_M
    wq = 1.0 / _FINE_M
    zz, ww = np.meshgrid(fine, fine, indexing="ij")
    f_id = truncated_normal_density(zz, ww, mean=mean, cov=cov)
    bz = basis_matrix(BasisSpec(count=j_count), fine)
    bw = basis_matrix(BasisSpec(count=k_max), fine)
    coeffs = (bz.T @ f_id @ bw) * wq * wq
    raw = bz @ coeffs @ bw.T
    clipped = np.clip(raw, 0.0, None)
    mass = clipped.sum() * wq * wq
    if mass <= 0:
        raise DegenerateDensityError("truncated-basis density has no mass")
    c_norm = 1.0 / mass
    return _NidModel(
        coeffs=coeffs,
        c_norm=c_norm,
        peak=float(clipped.max() * c_norm),
        mean=mean,
        cov=cov,
    )


def _model_for(config: DgpConfig) -> _NidModel:
    return _nid_model(
        config.j_count,
        config.k_max,
        tuple(config.mean),
        tuple(tuple(r) for r in config.cov),
    )


def _nid_density_at(model: _NidModel, z: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Normalized clipped density at paired points (z_i, w_i)."""
    j_count, k_max = model.coeffs.shape
    bz = basis_matrix(BasisSpec(count=j_count), z)
    bw = basis_matrix(BasisSpec(count=k_max), w)
    raw = np.einsum("ij,jk,ik->i", bz, model.coeffs, bw)
    return np.clip(raw, 0.0, None) * model.c_norm


def _check_alias_guard(config: DgpConfig, m: int) -> None:
    if config.j_count > m // 4 or config.k_max > m // 4:
        raise InvalidArgumentError(
            f"aliasing guard: j0 and k_max must be <= m/4 = {m // 4}"
        )


def build_nid_density(config: DgpConfig, grid: Grid) -> DensityEstimate:
    """The truncated-basis density sampled on the grid, clipped at zero and
    renormalized to unit mass under the grid quadrature."""
    _check_alias_guard(config, grid.size)
    model = _model_for(config)
    j_count, k_max = model.coeffs.shape
    bz = basis_matrix(BasisSpec(count=j_count), grid.points)
    bw = basis_matrix(BasisSpec(count=k_max), grid.points)
    raw = bz @ model.coeffs @ bw.T
    clipped = np.clip(raw, 0.0, None)
    mass = float(grid.weights @ clipped @ grid.weights)
    if mass <= 0:
        raise DegenerateDensityError("clipped density has nonpositive mass")
    return DensityEstimate(clipped / mass, grid, grid)


def best_approx(config: DgpConfig, grid: Grid) -> GridFunction:
    """The estimand: projection of the structural polynomial onto the
    identified span {phi_1, ..., phi_j0}; the polynomial itself when j0 is
    infinite."""
    phi = on_grid(true_phi, grid)
    if config.j0 is None:
        return phi
    _check_alias_guard(config, grid.size)
    return project_onto_span(phi, BasisSpec(count=config.j0), range(1, config.j0 + 1))


def sample(config: DgpConfig, return_stats: bool = False):
    """Draw n observations; deterministic given the config seed.

    (Z, W) are drawn from the truncated-basis density by rejection against a
    uniform envelope at 1.01x the fine-grid peak; a target value above the
    envelope raises :class:`EnvelopeError`.  With ``return_stats`` the
    counts (proposals, acceptances) are returned alongside the sample.
    """
    model = _model_for(config)
    rng = np.random.default_rng(np.random.Philox(key=np.uint64(config.seed)))
    envelope = 1.01 * model.peak
    z_acc: list[np.ndarray] = []
    w_acc: list[np.ndarray] = []
    remaining = config.n
    proposals = 0
    accepted = 0
    while remaining > 0:
        batch = min(max(int(1.3 * remaining * envelope) + 64, 256), 400_000)
        zp = rng.random(batch)
        wp = rng.random(batch)
        up = rng.random(batch)
        dens = _nid_density_at(model, zp, wp)
        if np.any(dens > envelope):
            raise EnvelopeError("density exceeds the rejection envelope")
        keep = up * envelope <= dens
        proposals += batch
        accepted += int(keep.sum())
        z_acc.append(zp[keep][:remaining])
        w_acc.append(wp[keep][:remaining])
        remaining -= z_acc[-1].size
    z = np.concatenate(z_acc)
    w = np.concatenate(w_acc)
    eps = rng.standard_normal(config.n)
    y = true_phi(z) + eps * z
    out = NpivSample(y=y, z=z, w=w)
    if return_stats:
        return out, proposals, accepted
    return out
