"""Inference: uniform confidence bands, chi-square mixture limits, and
normalized linear-functional intervals.

Bands are honest for the best approximation: their half-widths use the
crude resolvent bound 1/alpha (or alpha^{-3/2} with the sup-norm resolvent
inequality in the kernel case), a Gaussian-process quantile estimated from
the empirical covariance of the influence terms, and an optional additive
constant whose scale theory leaves free.  Quantiles are simulated from the
eigendecomposition of the covariance matrix on the grid with a fixed
sub-seed, so bands are deterministic given the data.

The degenerate (irrelevant instrument) limit is a centered chi-square
mixture plus a deterministic offset; its eigenvalues are estimated by
evaluating the U-statistic kernel on one large sample.  The limit check
fits with the operator restricted to mean-zero functions of Z, the
construction under which the n * alpha scaling has a nondegenerate law.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np
from scipy.stats import norm as normal_dist

from .dgp import DgpConfig, sample as dgp_sample, true_phi
from .errors import DegenerateFunctionalError, InvalidArgumentError
from .flir import FlirSample, estimate_K, flir_fit
from .grid import Grid, GridFunction, inner, l2_norm, sup_norm
from .npiv import (
    KernelSpec,
    NpivSample,
    build_operator,
    estimate_r as npiv_estimate_r,
    kde_joint,
    kernel_selfconv,
    kernel_values,
)
from .operators import (
    DiscreteOperator,
    FilterSpec,
    adjoint,
    apply_operator,
    compose,
    norm_2inf,
    regularize,
)

__all__ = [
    "ConfBand",
    "ChiSqMixture",
    "FunctionalCI",
    "LimitCheckReport",
    "flir_confband",
    "npiv_confband",
    "ustat_mixture",
    "degenerate_limit_check",
    "functional_ci",
]

QUANTILE_SEED = 0x51AB1E  # fixed sub-seed for quantile simulation
MIXTURE_SEED = 0x31337


@dataclass(frozen=True)
class ConfBand:
    """Uniform band center(z) +/- half_width at miscoverage level ``level``."""

    center: GridFunction
    half_width: float
    level: float
    degenerate: bool = False  # all residuals were zero

    def __post_init__(self):
        if not np.isfinite(self.half_width) or self.half_width < 0:
            raise InvalidArgumentError("half width must be finite and >= 0")
        if not 0.0 < self.level < 1.0:
            raise InvalidArgumentError("level must lie in (0, 1)")

    def covers(self, f: GridFunction) -> bool:
        return sup_norm(self.center - f) <= self.half_width


@dataclass(frozen=True)
class ChiSqMixture:
    """The law offset + sum_j lambda_j (chi^2_1j - 1)."""

    eigenvalues: np.ndarray
    offset: float = 0.0

    def __post_init__(self):
        ev = np.asarray(self.eigenvalues, dtype=float)
        if not np.all(np.isfinite(ev)):
            raise InvalidArgumentError("mixture eigenvalues must be finite")
        object.__setattr__(self, "eigenvalues", ev)

    @property
    def variance(self) -> float:
        return float(2.0 * np.sum(self.eigenvalues**2))

    def draw(self, count: int, seed: int = MIXTURE_SEED) -> np.ndarray:
        rng = np.random.default_rng(np.random.Philox(key=np.uint64(seed)))
        ev = self.eigenvalues
        if ev.size == 0:
            return np.full(count, self.offset)
        out = np.full(count, self.offset)
        # blockwise to bound memory at large counts
        block = max(1, int(5_000_000 // max(ev.size, 1)))
        for start in range(0, count, block):
            stop = min(start + block, count)
            xi = rng.standard_normal((stop - start, ev.size))
            out[start:stop] += (xi**2 - 1.0) @ ev
        return out


def ustat_mixture(h_matrix: np.ndarray, offset: float = 0.0) -> ChiSqMixture:
    """Mixture with eigenvalues of h_matrix / n, the empirical analogue of
    the kernel integral operator of a degenerate U-statistic."""
    h = np.asarray(h_matrix, dtype=float)
    if h.ndim != 2 or h.shape[0] != h.shape[1]:
        raise InvalidArgumentError("kernel matrix must be square")
    scale = max(np.max(np.abs(h)), 1.0)
    if np.max(np.abs(h - h.T)) > 1e-10 * scale:
        raise InvalidArgumentError("kernel matrix must be symmetric")
    n = h.shape[0]
    eigs = np.linalg.eigvalsh((h + h.T) / 2.0) / n
    order = np.argsort(-np.abs(eigs))
    return ChiSqMixture(eigenvalues=eigs[order], offset=float(offset))


def _truncate_energy(mix: ChiSqMixture, energy: float) -> ChiSqMixture:
    ev = mix.eigenvalues
    total = np.sum(ev**2)
    if total == 0.0:
        return ChiSqMixture(np.zeros(0), mix.offset)
    cum = np.cumsum(ev**2)
    keep = int(np.searchsorted(cum, energy * total) + 1)
    return ChiSqMixture(ev[:keep], mix.offset)


# ---------------------------------------------------------------------------
# Gaussian process quantiles from empirical covariance matrices
# ---------------------------------------------------------------------------


def _l2sq_quantile(cov: np.ndarray, grid: Grid, gamma: float, draws: int, seed: int) -> float:
    """(1-gamma) quantile of ||G||_{L2}^2 for G ~ GP(0, cov on the grid)."""
    sqw = np.sqrt(grid.weights)
    lam = np.linalg.eigvalsh(sqw[:, None] * cov * sqw[None, :])
    lam = np.clip(lam, 0.0, None)
    rng = np.random.default_rng(np.random.Philox(key=np.uint64(seed)))
    sims = rng.standard_normal((draws, lam.size)) ** 2 @ lam
    return float(np.quantile(sims, 1.0 - gamma))


def _sup_quantile(cov: np.ndarray, gamma: float, draws: int, seed: int) -> float:
    """(1-gamma) quantile of sup |G| over the grid for G ~ GP(0, cov)."""
    lam, vecs = np.linalg.eigh((cov + cov.T) / 2.0)
    lam = np.clip(lam, 0.0, None)
    factor = vecs * np.sqrt(lam)
    rng = np.random.default_rng(np.random.Philox(key=np.uint64(seed)))
    sims = rng.standard_normal((draws, lam.size)) @ factor.T
    return float(np.quantile(np.max(np.abs(sims), axis=1), 1.0 - gamma))


# ---------------------------------------------------------------------------
# Uniform confidence bands
# ---------------------------------------------------------------------------


def flir_confband(
    sample: FlirSample,
    fit: GridFunction,
    alpha: float,
    gamma: float,
    c_const: float = 0.0,
    draws: int = 10_000,
    seed: int = QUANTILE_SEED,
) -> ConfBand:
    """Uniform band for the functional-regression best approximation.

    The quantile is that of ||G||^2 where G has the empirical covariance of
    the influence terms u_hat_i * w_i; the half-width is
    (||K_hat*||_{2,inf} sqrt(c_{1-gamma}) + c_const) / (alpha sqrt(n)).
    """
    if not 0.0 < gamma < 1.0:
        raise InvalidArgumentError("gamma must lie in (0, 1)")
    if not alpha > 0:
        raise InvalidArgumentError("alpha must be > 0")
    resid = sample.y - sample.z @ (sample.grid.weights * fit.values)
    degenerate = bool(np.max(np.abs(resid)) == 0.0)
    v = resid[:, None] * sample.w
    cov = v.T @ v / sample.n
    c_quant = _l2sq_quantile(cov, sample.grid, gamma, draws, seed)
    two_inf = norm_2inf(adjoint(estimate_K(sample)))
    half = (two_inf * np.sqrt(c_quant) + c_const) / (alpha * np.sqrt(sample.n))
    return ConfBand(center=fit, half_width=half, level=gamma, degenerate=degenerate)


def _fzw_at_data(
    sample: NpivSample, kspec: KernelSpec, grid: Grid, chunk: int = 512
) -> np.ndarray:
    """Plug-in density slices f_hat(z_grid, W_i), shape (n, grid size)."""
    kz = kernel_values(kspec.kernel, (sample.z[:, None] - grid.points[None, :]) / kspec.h_z)
    scale = 1.0 / (sample.n * kspec.h_z * kspec.h_w)
    out = np.empty((sample.n, grid.size))
    for start in range(0, sample.n, chunk):
        stop = min(start + chunk, sample.n)
        kw = kernel_values(
            kspec.kernel, (sample.w[:, None] - sample.w[None, start:stop]) / kspec.h_w
        )
        out[start:stop] = kw.T @ kz * scale
    return out


def npiv_confband(
    sample: NpivSample,
    fit: GridFunction,
    kspec: KernelSpec,
    alpha: float,
    gamma: float,
    c_const: float = 0.0,
    draws: int = 10_000,
    seed: int = QUANTILE_SEED,
) -> ConfBand:
    """Uniform band for the NPIV best approximation.

    The quantile is that of sup |G| where G has the empirical covariance
    built from residuals and plug-in density slices f_hat(z, W_i); the
    half-width is (||K_hat*||_{2,inf}/2 + sqrt(alpha) + c_const)
    * c_{1-gamma} / (alpha^{3/2} sqrt(n)).
    """
    if not 0.0 < gamma < 1.0:
        raise InvalidArgumentError("gamma must lie in (0, 1)")
    if not alpha > 0:
        raise InvalidArgumentError("alpha must be > 0")
    grid = fit.grid
    resid = sample.y - np.interp(sample.z, grid.points, fit.values)
    degenerate = bool(np.max(np.abs(resid)) == 0.0)
    slices = _fzw_at_data(sample, kspec, grid)
    cov = slices.T @ (resid[:, None] ** 2 * slices) / sample.n
    c_quant = _sup_quantile(cov, gamma, draws, seed)
    k_hat = build_operator(kde_joint(sample, kspec, grid))
    two_inf = norm_2inf(adjoint(k_hat))
    half = (two_inf / 2.0 + np.sqrt(alpha) + c_const) * c_quant / (
        alpha**1.5 * np.sqrt(sample.n)
    )
    return ConfBand(center=fit, half_width=half, level=gamma, degenerate=degenerate)


# ---------------------------------------------------------------------------
# Linear functional inference
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FunctionalCI:
    estimate: float
    lower: float
    upper: float
    pi_n: float  # normalizer: sqrt(n) over the plug-in influence sd


def functional_ci(
    sample: FlirSample, mu: GridFunction, spec: FilterSpec, gamma: float
) -> FunctionalCI:
    """Pointwise CLT interval for <phi_1, mu> in the functional model.

    The normalizer plugs the estimated operator into
    sqrt(n) / || Sigma^{1/2} K (alpha I + K*K)^{-1} mu || with Sigma the
    empirical second moment of the influence terms u_hat_i w_i.  A functional
    numerically in the null space of the plug-in has no CLT normalizer; the
    degenerate-functional error points callers at the mixture limit instead.
    """
    if spec.scheme != "tikhonov":
        raise InvalidArgumentError("functional intervals are defined for tikhonov")
    if not 0.0 < gamma < 1.0:
        raise InvalidArgumentError("gamma must lie in (0, 1)")
    k_hat = estimate_K(sample)
    fit = flir_fit(sample, spec)
    grid = sample.grid
    w_q = grid.weights
    m = k_hat.matrix
    system = spec.alpha * np.eye(grid.size) + (m.T * w_q) @ (m * w_q)
    x = np.linalg.solve(system, mu.values)
    v = apply_operator(k_hat, GridFunction(grid, x))
    resid = sample.y - sample.z @ (w_q * fit.values)
    proj = sample.w @ (w_q * v.values)
    sigma = float(np.sqrt(np.mean(resid**2 * proj**2)))
    if not np.isfinite(sigma) or sigma <= 1e-14 * max(l2_norm(mu), 1e-300):
        raise DegenerateFunctionalError(
            "functional is numerically in the plug-in null space; "
            "use the degenerate mixture limit instead"
        )
    pi_n = np.sqrt(sample.n) / sigma
    est = inner(fit, mu)
    z_crit = float(normal_dist.ppf(1.0 - gamma / 2.0))
    return FunctionalCI(
        estimate=est, lower=est - z_crit / pi_n, upper=est + z_crit / pi_n, pi_n=pi_n
    )


# ---------------------------------------------------------------------------
# Degenerate limit check
# ---------------------------------------------------------------------------


def _marginal_projector(s: NpivSample, kspec: KernelSpec, grid: Grid) -> DiscreteOperator:
    """Projector onto the orthocomplement of the estimated z-marginal.

    The estimated projection (rather than the population one, orthogonal to
    the constant) is essential at finite n: the truncated kernel smoothing
    tilts the drift direction toward the estimated marginal, and projecting
    it out removes an O(n) mean drift from the scaled statistic.
    """
    fz = kernel_values(kspec.kernel, (s.z[:, None] - grid.points[None, :]) / kspec.h_z)
    fz = fz.sum(axis=0) / (s.n * kspec.h_z)
    nrm_sq = float(np.dot(grid.weights, fz**2))
    mat = np.diag(1.0 / grid.weights) - np.outer(fz, fz) / nrm_sq
    return DiscreteOperator(mat, grid, grid)


def _restricted_fit(
    s: NpivSample, kspec: KernelSpec, alpha: float, grid: Grid, y_mean: float
) -> GridFunction:
    """Tikhonov fit with the estimated operator restricted to mean-zero
    functions of z (the extreme-nonidentification construction).

    The response is centered by the design mean of Y: that mean is the
    identified component of the restricted model (set to zero there), and
    leaving it in pollutes the n*alpha-scaled statistic with a root-n
    mean-interaction term the mixture limit does not carry.  Centering by
    the sample average is not enough at this scaling, since its O(n^{-1/2})
    error hits all n^2 kernel terms.
    """
    centered = NpivSample(y=s.y - y_mean, z=s.z, w=s.w)
    k_hat = build_operator(kde_joint(centered, kspec, grid))
    p0 = _marginal_projector(centered, kspec, grid)
    k0 = compose(k_hat, p0)
    r_hat = npiv_estimate_r(centered, kspec, grid)
    return apply_operator(p0, regularize(k0, r_hat, FilterSpec("tikhonov", alpha)))


@dataclass(frozen=True)
class LimitCheckReport:
    ks: float
    eigenvalues_retained: int
    offset: float
    n: int
    reps: int
    stats: np.ndarray


DEFAULT_LIMIT_KSPEC = KernelSpec("gaussian", h_z=0.06, h_w=0.1)


def default_limit_alpha(n: int) -> float:
    """Tuning rule for the limit check, calibrated on pilot replications."""
    return 2.0 * n**-0.5


def degenerate_limit_check(
    config: DgpConfig,
    mu0: GridFunction,
    alpha_rule: Union[float, Callable[[int], float], None],
    n: int,
    reps: int,
    kspec: KernelSpec = DEFAULT_LIMIT_KSPEC,
    mixture_size: int = 2000,
    mixture_draws: int = 100_000,
    energy: float = 0.999,
) -> LimitCheckReport:
    """Compare n*alpha <fit - phi_1, mu0> with its chi-square mixture limit.

    Requires the independence design (j0 = 1, so the z-marginal is uniform
    and W carries no information) and a mean-zero mu0.  Returns the
    two-sample Kolmogorov-Smirnov distance between the replication
    statistics and draws from the mixture built on one large sample.
    """
    if config.j0 != 1:
        raise InvalidArgumentError("limit check requires the independence design j0=1")
    grid = mu0.grid
    mean_mu = float(np.dot(grid.weights, mu0.values))
    scale_mu = sup_norm(mu0)
    if scale_mu > 0 and abs(mean_mu) > 1e-8 * scale_mu:
        raise InvalidArgumentError("mu0 must be mean zero under the uniform marginal")

    if alpha_rule is None:
        alpha_rule = default_limit_alpha
    alpha = alpha_rule(n) if callable(alpha_rule) else float(alpha_rule)

    if scale_mu == 0.0:
        return LimitCheckReport(
            ks=0.0, eigenvalues_retained=0, offset=0.0, n=n, reps=reps,
            stats=np.zeros(reps),
        )

    # design mean of Y: Z is uniform under j0 = 1, so E[Y] = int phi
    fine = (np.arange(8192) + 0.5) / 8192
    y_mean = float(np.mean(true_phi(fine)))

    stats = np.empty(reps)
    for r in range(reps):
        rep_cfg = DgpConfig(
            n=n, seed=config.seed + r, j0=config.j0, k_max=config.k_max,
            mean=config.mean, cov=config.cov,
        )
        s = dgp_sample(rep_cfg)
        fit = _restricted_fit(s, kspec, alpha, grid, y_mean)
        # <phi_1, mu0> = 0: the j0=1 best approximation is a constant and
        # mu0 is mean zero, so the centered statistic reduces to <fit, mu0>
        stats[r] = n * alpha * inner(fit, mu0)

    big_cfg = DgpConfig(
        n=mixture_size, seed=config.seed + 10_000_019, j0=config.j0,
        k_max=config.k_max, mean=config.mean, cov=config.cov,
    )
    big = dgp_sample(big_cfg)
    y_c = big.y - y_mean  # centered by the design mean, as in the fits
    mu_at = np.interp(big.z, grid.points, mu0.values)
    conv = kernel_selfconv(kspec.kernel, (big.w[:, None] - big.w[None, :]) / kspec.h_w)
    h_m = 0.5 * (y_c[:, None] * mu_at[None, :] + y_c[None, :] * mu_at[:, None])
    h_m = h_m * conv / kspec.h_w
    offset = float(
        np.mean(y_c * mu_at) * kernel_selfconv(kspec.kernel, 0.0) / kspec.h_w
    )
    mixture = _truncate_energy(ustat_mixture(h_m, offset), energy)
    draws = mixture.draw(mixture_draws)

    from scipy.stats import ks_2samp

    if np.ptp(stats) == 0.0 and np.ptp(draws) == 0.0 and stats[0] == draws[0]:
        ks = 0.0
    else:
        ks = float(ks_2samp(stats, draws).statistic)
    return LimitCheckReport(
        ks=ks,
        eigenvalues_retained=int(mixture.eigenvalues.size),
        offset=offset,
        n=n,
        reps=reps,
        stats=stats,
    )
