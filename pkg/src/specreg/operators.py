"""Discretized operator algebra and spectral regularization filters.

A linear operator K between grid-function spaces is stored as the kernel
matrix of a quadrature integral operator: ``(K f)(y_i) = sum_j M[i, j]
w_dom[j] f(x_j)``.  The adjoint is then the transposed kernel, and singular
value decompositions are computed on the quadrature-whitened matrix
``W_out^{1/2} M W_in^{1/2}`` so that singular functions come out orthonormal
in the L2 quadrature inner product.

Four regularization filters g_alpha are provided (ridge/Tikhonov, spectral
cut-off, iterated Tikhonov, Landweber-Fridman), all approximating 1/lambda
as alpha -> 0.  The regularized solve of ``K phi = r`` is
``phi = g_alpha(K* K) K* r``, evaluated through the SVD; it is well defined
even for rank-deficient K.  ``tikhonov_direct`` solves the ridge normal
equations by dense factorization and serves as an independent cross-check of
the SVD path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np

from .errors import DecompositionError, GridMismatchError, InvalidArgumentError
from .grid import Grid, GridFunction

__all__ = [
    "DiscreteOperator",
    "SvdCache",
    "FilterSpec",
    "Qualification",
    "identity_operator",
    "rank_one",
    "apply_operator",
    "adjoint",
    "compose",
    "operator_norm",
    "hs_norm",
    "svd",
    "filter_value",
    "regularize",
    "tikhonov_direct",
    "operator_power",
    "source_element",
    "qualification",
    "norm_2inf",
]

# Relative threshold under which singular values count as exact zeros when
# classifying the numerical null space.
NULLSPACE_RTOL = 1e-12

SCHEMES = ("tikhonov", "spectral_cutoff", "iterated_tikhonov", "landweber")


@dataclass(frozen=True)
class DiscreteOperator:
    """Quadrature integral operator between two grid-function spaces."""

    matrix: np.ndarray  # shape (range size, domain size), kernel values
    domain_grid: Grid
    range_grid: Grid

    def __post_init__(self):
        mat = np.array(self.matrix, dtype=float)
        mat.setflags(write=False)
        object.__setattr__(self, "matrix", mat)
        if mat.shape != (self.range_grid.size, self.domain_grid.size):
            raise GridMismatchError(
                f"matrix shape {mat.shape} does not match grids "
                f"({self.range_grid.size}, {self.domain_grid.size})"
            )
        if not np.all(np.isfinite(mat)):
            raise InvalidArgumentError("operator kernel must be finite")


def identity_operator(grid: Grid) -> DiscreteOperator:
    """Operator acting as the identity on grid functions."""
    return DiscreteOperator(np.diag(1.0 / grid.weights), grid, grid)


def rank_one(v_out: GridFunction, u_in: GridFunction) -> DiscreteOperator:
    """The operator f -> <u_in, f> v_out."""
    return DiscreteOperator(
        np.outer(v_out.values, u_in.values), u_in.grid, v_out.grid
    )


def apply_operator(op: DiscreteOperator, f: GridFunction) -> GridFunction:
    if not op.domain_grid.matches(f.grid):
        raise GridMismatchError("function grid does not match operator domain")
    values = op.matrix @ (op.domain_grid.weights * f.values)
    return GridFunction(op.range_grid, values)


def adjoint(op: DiscreteOperator) -> DiscreteOperator:
    """Adjoint under the quadrature inner products: the transposed kernel."""
    return DiscreteOperator(op.matrix.T, op.range_grid, op.domain_grid)


def compose(outer: DiscreteOperator, inner_op: DiscreteOperator) -> DiscreteOperator:
    """The composition ``outer o inner_op`` as a quadrature operator."""
    if not inner_op.range_grid.matches(outer.domain_grid):
        raise GridMismatchError("composition grids do not chain")
    mid_w = outer.domain_grid.weights
    return DiscreteOperator(
        outer.matrix @ (mid_w[:, None] * inner_op.matrix),
        inner_op.domain_grid,
        outer.range_grid,
    )


def _whitened(op: DiscreteOperator) -> np.ndarray:
    s_out = np.sqrt(op.range_grid.weights)
    s_in = np.sqrt(op.domain_grid.weights)
    return s_out[:, None] * op.matrix * s_in[None, :]


def operator_norm(op: DiscreteOperator) -> float:
    """L2(quadrature) -> L2(quadrature) operator norm."""
    return float(np.linalg.norm(_whitened(op), ord=2))


def hs_norm(op: DiscreteOperator) -> float:
    """Hilbert-Schmidt norm, i.e. the quadrature L2 norm of the kernel."""
    return float(np.linalg.norm(_whitened(op), ord="fro"))


@dataclass(frozen=True)
class SvdCache:
    """Singular system of a :class:`DiscreteOperator`.

    ``K phi_j = lambda_j psi_j`` and ``K* psi_j = lambda_j phi_j`` hold under
    the quadrature inner products; both function families are orthonormal.
    """

    singular_values: np.ndarray  # nonincreasing, >= 0
    left_functions: np.ndarray  # (range size, r) values of psi_j
    right_functions: np.ndarray  # (domain size, r) values of phi_j
    domain_grid: Grid
    range_grid: Grid

    @property
    def rank(self) -> int:
        """Numerical rank: singular values above NULLSPACE_RTOL * lambda_1."""
        sv = self.singular_values
        if sv.size == 0 or sv[0] <= 0.0:
            return 0
        return int(np.count_nonzero(sv > NULLSPACE_RTOL * sv[0]))


def svd(op: DiscreteOperator) -> SvdCache:
    """SVD of the quadrature-whitened kernel, mapped back to function space."""
    try:
        u, s, vt = np.linalg.svd(_whitened(op), full_matrices=False)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK failure
        raise DecompositionError(f"SVD failed: {exc}") from exc
    psi = u / np.sqrt(op.range_grid.weights)[:, None]
    phi = vt.T / np.sqrt(op.domain_grid.weights)[:, None]
    return SvdCache(
        singular_values=s,
        left_functions=psi,
        right_functions=phi,
        domain_grid=op.domain_grid,
        range_grid=op.range_grid,
    )


@dataclass(frozen=True)
class FilterSpec:
    """A regularization scheme and its level alpha.

    ``iterations`` is required for iterated Tikhonov (m >= 2); ``step`` is
    the Landweber step size c, with 1/alpha the (integer) iteration count.
    """

    scheme: str
    alpha: float
    iterations: Optional[int] = None
    step: Optional[float] = None

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise InvalidArgumentError(
                f"unknown scheme {self.scheme!r}; expected one of {SCHEMES}"
            )
        if not self.alpha > 0:
            raise InvalidArgumentError("alpha must be > 0")
        if self.scheme == "iterated_tikhonov":
            if self.iterations is None or int(self.iterations) < 2:
                raise InvalidArgumentError("iterated_tikhonov needs iterations >= 2")
            object.__setattr__(self, "iterations", int(self.iterations))
        if self.scheme == "landweber":
            if self.step is None or not self.step > 0:
                raise InvalidArgumentError("landweber needs a step size c > 0")
            n_iter = 1.0 / self.alpha
            if abs(n_iter - round(n_iter)) > 1e-9 or round(n_iter) < 1:
                raise InvalidArgumentError(
                    "landweber requires 1/alpha to be a positive integer "
                    f"iteration count, got alpha={self.alpha}"
                )

    @property
    def landweber_iterations(self) -> int:
        return int(round(1.0 / self.alpha))


def filter_value(
    spec: FilterSpec, lam: Union[float, np.ndarray]
) -> Union[float, np.ndarray]:
    """Evaluate the scalar filter g_alpha at lambda >= 0 (scalar or array).

    Removable singularities at lambda = 0 are evaluated by their finite
    limits: m/alpha for iterated Tikhonov and c/alpha for Landweber.
    """
    lam_arr = np.asarray(lam, dtype=float)
    scalar = lam_arr.ndim == 0
    lam_arr = np.atleast_1d(lam_arr)
    if np.any(lam_arr < 0):
        raise InvalidArgumentError("lambda must be >= 0")
    a = spec.alpha

    if spec.scheme == "tikhonov":
        out = 1.0 / (a + lam_arr)
    elif spec.scheme == "spectral_cutoff":
        out = np.zeros_like(lam_arr)
        keep = lam_arr >= a
        out[keep] = 1.0 / lam_arr[keep]
    elif spec.scheme == "iterated_tikhonov":
        # sum_{j=0}^{m-1} a^j / (a + lambda)^{j+1}: stable at lambda = 0.
        m = int(spec.iterations)
        ratio = a / (a + lam_arr)
        out = np.zeros_like(lam_arr)
        term = 1.0 / (a + lam_arr)
        for _ in range(m):
            out = out + term
            term = term * ratio
    else:  # landweber
        c = float(spec.step)
        n_iter = spec.landweber_iterations
        out = np.empty_like(lam_arr)
        pos = lam_arr > 0
        x = c * lam_arr[pos]
        with np.errstate(divide="ignore", invalid="ignore"):
            small = x < 1.0
            vals = np.empty_like(x)
            # 1 - (1-x)^N = -expm1(N log1p(-x)), stable for small x
            vals[small] = -np.expm1(n_iter * np.log1p(-x[small]))
            vals[~small] = 1.0 - (1.0 - x[~small]) ** n_iter
        out[pos] = vals / lam_arr[pos]
        out[~pos] = c * n_iter
    return float(out[0]) if scalar else out


def regularize(
    k_hat: DiscreteOperator,
    r_hat: GridFunction,
    spec: FilterSpec,
    cache: Optional[SvdCache] = None,
) -> GridFunction:
    """Regularized solve of ``K phi = r``: g_alpha(K* K) K* r via the SVD.

    Each singular triple contributes g_alpha(lambda_j^2) lambda_j
    <r, psi_j> phi_j, so exact zero singular values contribute nothing and
    the output is finite for rank-deficient operators.
    """
    if not k_hat.range_grid.matches(r_hat.grid):
        raise GridMismatchError("right-hand side grid does not match operator range")
    sv = cache if cache is not None else svd(k_hat)
    coeffs = sv.left_functions.T @ (k_hat.range_grid.weights * r_hat.values)
    lam = sv.singular_values
    weights = filter_value(spec, lam**2) * lam * coeffs
    return GridFunction(k_hat.domain_grid, sv.right_functions @ weights)


def tikhonov_direct(
    k_hat: DiscreteOperator, r_hat: GridFunction, alpha: float
) -> GridFunction:
    """Dense solve of the ridge normal equations (alpha I + K*K) phi = K* r.

    Independent of the SVD path; used as its cross-check.
    """
    if not alpha > 0:
        raise InvalidArgumentError("alpha must be > 0")
    if not k_hat.range_grid.matches(r_hat.grid):
        raise GridMismatchError("right-hand side grid does not match operator range")
    w_out = k_hat.range_grid.weights
    w_in = k_hat.domain_grid.weights
    m = k_hat.matrix
    # K*K in value coordinates is M^T W_out M W_in; the system matrix acts on
    # plain value vectors.
    system = alpha * np.eye(k_hat.domain_grid.size) + (m.T * w_out) @ (m * w_in)
    rhs = m.T @ (w_out * r_hat.values)
    try:
        sol = np.linalg.solve(system, rhs)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - alpha > 0 guards
        raise DecompositionError(f"ridge solve failed: {exc}") from exc
    return GridFunction(k_hat.domain_grid, sol)


def _self_adjoint_eigh(op: DiscreteOperator) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a self-adjoint PSD operator in whitened space."""
    if not op.domain_grid.matches(op.range_grid):
        raise InvalidArgumentError("operator must map a grid space to itself")
    white = _whitened(op)
    scale = max(np.max(np.abs(white)), 1.0)
    if np.max(np.abs(white - white.T)) > 1e-8 * scale:
        raise InvalidArgumentError("operator is not self-adjoint")
    try:
        eigvals, eigvecs = np.linalg.eigh((white + white.T) / 2.0)
    except np.linalg.LinAlgError as exc:  # pragma: no cover
        raise DecompositionError(f"eigendecomposition failed: {exc}") from exc
    return eigvals, eigvecs


def operator_power(op: DiscreteOperator, beta: float) -> DiscreteOperator:
    """Fractional power of a self-adjoint PSD operator (same eigenfunctions,
    eigenvalues raised to ``beta``).  Tiny negative eigenvalues from roundoff
    are clipped to zero."""
    if not beta > 0:
        raise InvalidArgumentError("beta must be > 0")
    eigvals, eigvecs = _self_adjoint_eigh(op)
    powered = np.clip(eigvals, 0.0, None) ** beta
    sqrt_w = np.sqrt(op.domain_grid.weights)
    mat = (eigvecs * powered) @ eigvecs.T
    mat = mat / sqrt_w[:, None] / sqrt_w[None, :]
    return DiscreteOperator(mat, op.domain_grid, op.range_grid)


def source_element(
    k: DiscreteOperator,
    beta: float,
    psi: GridFunction,
    cache: Optional[SvdCache] = None,
) -> GridFunction:
    """(K*K)^{beta/2} psi: manufactures targets of known smoothness beta.

    At beta = 0 the convention is the spectral-calculus limit: the
    projection of psi onto the span of the nonzero singular functions.
    """
    if beta < 0:
        raise InvalidArgumentError("beta must be >= 0")
    if not k.domain_grid.matches(psi.grid):
        raise GridMismatchError("psi grid does not match operator domain")
    sv = cache if cache is not None else svd(k)
    rank = sv.rank
    phi = sv.right_functions[:, :rank]
    lam = sv.singular_values[:rank]
    coeffs = phi.T @ (k.domain_grid.weights * psi.values)
    return GridFunction(k.domain_grid, phi @ (lam**beta * coeffs))


@dataclass(frozen=True)
class Qualification:
    """Filter constants: sup|g sqrt(lam)| <= c1/sqrt(alpha),
    sup|(g lam - 1) lam^{beta/2}| <= c2 alpha^{beta/2} for beta <= beta0,
    and sup|g| <= c3/alpha.  ``beta0`` is the scheme's qualification.

    For Landweber the third constant depends on the source smoothness and is
    reported as a function of beta.
    """

    c1: float
    c2: float
    c3: Union[float, Callable[[float], float]]
    beta0: float

    def c3_at(self, beta: float) -> float:
        return self.c3(beta) if callable(self.c3) else self.c3


def qualification(spec: FilterSpec) -> Qualification:
    if spec.scheme == "tikhonov":
        return Qualification(c1=0.5, c2=1.0, c3=1.0, beta0=2.0)
    if spec.scheme == "spectral_cutoff":
        return Qualification(c1=1.0, c2=1.0, c3=1.0, beta0=math.inf)
    if spec.scheme == "iterated_tikhonov":
        m = float(spec.iterations)
        return Qualification(c1=math.sqrt(m), c2=1.0, c3=m, beta0=m)
    c = float(spec.step)

    def c3(beta: float, _c: float = c) -> float:
        return max((beta / (_c * math.e)) ** (beta / 2.0), 1.0)

    return Qualification(c1=math.sqrt(c), c2=max(c, 1.0), c3=c3, beta0=math.inf)


def norm_2inf(op: DiscreteOperator) -> float:
    """The 2,inf norm sup_{||psi|| <= 1} ||T psi||_inf of a quadrature
    operator: the largest L2(domain) norm over kernel rows."""
    row_norms_sq = op.matrix**2 @ op.domain_grid.weights
    return float(np.sqrt(np.max(row_norms_sq)))
