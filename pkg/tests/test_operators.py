"""Operator algebra, SVD, filters, regularized solves, powers."""

import math

import numpy as np
import pytest

from specreg.errors import GridMismatchError, InvalidArgumentError
from specreg.grid import GridFunction, inner, l2_norm, make_grid, on_grid, sup_norm, trig_basis
from specreg.operators import (
    FilterSpec,
    adjoint,
    apply_operator,
    compose,
    filter_value,
    identity_operator,
    norm_2inf,
    operator_norm,
    operator_power,
    qualification,
    rank_one,
    regularize,
    source_element,
    svd,
    tikhonov_direct,
)


def random_operator(rng, m_out, m_in, normalize=True):
    g_in, g_out = make_grid(m_in), make_grid(m_out)
    from specreg.operators import DiscreteOperator

    op = DiscreteOperator(rng.normal(size=(m_out, m_in)), g_in, g_out)
    if normalize:
        op = DiscreteOperator(op.matrix / operator_norm(op), g_in, g_out)
    return op


def test_identity_apply(grid100, rng):
    op = identity_operator(grid100)
    f = GridFunction(grid100, rng.normal(size=grid100.size))
    assert np.allclose(apply_operator(op, f).values, f.values, atol=1e-12)


def test_rank_one_apply(grid100, rng):
    one = trig_basis(1, grid100)
    op = rank_one(one, one)
    f = GridFunction(grid100, rng.normal(size=grid100.size))
    out = apply_operator(op, f)
    assert np.allclose(out.values, inner(one, f), atol=1e-12)


def test_adjoint_consistency(rng):
    # <Kf, g> = <f, K*g> by direct quadrature evaluation on both sides
    op = random_operator(rng, 60, 40)
    for _ in range(10):
        f = GridFunction(op.domain_grid, rng.normal(size=40))
        g = GridFunction(op.range_grid, rng.normal(size=60))
        lhs = inner(apply_operator(op, f), g)
        rhs = inner(f, apply_operator(adjoint(op), g))
        assert abs(lhs - rhs) < 1e-10
    assert np.array_equal(adjoint(adjoint(op)).matrix, op.matrix)


def test_apply_grid_mismatch(rng):
    op = random_operator(rng, 30, 30)
    f = trig_basis(1, make_grid(31))
    with pytest.raises(GridMismatchError):
        apply_operator(op, f)


def test_svd_identity(grid100):
    cache = svd(identity_operator(grid100))
    assert np.allclose(cache.singular_values, 1.0, atol=1e-12)


def test_svd_rank_one(grid100):
    u = trig_basis(2, grid100)
    v = trig_basis(3, grid100)
    cache = svd(rank_one(v, u))
    assert cache.singular_values[0] == pytest.approx(1.0, abs=1e-10)
    assert np.all(cache.singular_values[1:] < 1e-10)
    assert cache.rank == 1


def test_svd_reconstruction(rng):
    op = random_operator(rng, 50, 35)
    cache = svd(op)
    w_out = op.range_grid.weights
    # orthonormality of singular functions under quadrature
    psi, phi = cache.left_functions, cache.right_functions
    assert np.max(np.abs(psi.T @ (w_out[:, None] * psi) - np.eye(psi.shape[1]))) < 1e-8
    for _ in range(5):
        f = GridFunction(op.domain_grid, rng.normal(size=35))
        direct = apply_operator(op, f)
        coeffs = phi.T @ (op.domain_grid.weights * f.values)
        rebuilt = psi @ (cache.singular_values * coeffs)
        assert np.max(np.abs(rebuilt - direct.values)) < 1e-8


def test_svd_eigenrelations(rng):
    op = random_operator(rng, 40, 40)
    cache = svd(op)
    for j in range(cache.rank):
        phi_j = GridFunction(op.domain_grid, cache.right_functions[:, j])
        psi_j = GridFunction(op.range_grid, cache.left_functions[:, j])
        lam = cache.singular_values[j]
        assert np.allclose(
            apply_operator(op, phi_j).values, lam * psi_j.values, atol=1e-8
        )
        assert np.allclose(
            apply_operator(adjoint(op), psi_j).values, lam * phi_j.values, atol=1e-8
        )


def test_filter_values_closed_forms():
    assert filter_value(FilterSpec("tikhonov", 1.0), 1.0) == pytest.approx(0.5)
    cut = FilterSpec("spectral_cutoff", 0.1)
    assert filter_value(cut, 0.2) == pytest.approx(5.0)
    assert filter_value(cut, 0.05) == 0.0
    it2 = FilterSpec("iterated_tikhonov", 1.0, iterations=2)
    assert filter_value(it2, 1.0) == pytest.approx(0.75)
    lw = FilterSpec("landweber", 0.5, step=1.0)
    assert filter_value(lw, 0.5) == pytest.approx(1.5)


def test_filter_zero_limits():
    it3 = FilterSpec("iterated_tikhonov", 0.25, iterations=3)
    assert filter_value(it3, 0.0) == pytest.approx(3.0 / 0.25)
    lw = FilterSpec("landweber", 0.1, step=0.7)
    assert filter_value(lw, 0.0) == pytest.approx(0.7 / 0.1)


def test_filter_spec_validation():
    with pytest.raises(InvalidArgumentError):
        FilterSpec("tikhonov", 0.0)
    with pytest.raises(InvalidArgumentError):
        FilterSpec("iterated_tikhonov", 0.1, iterations=1)
    with pytest.raises(InvalidArgumentError):
        FilterSpec("landweber", 0.3, step=0.5)  # 1/alpha not integer
    with pytest.raises(InvalidArgumentError):
        FilterSpec("banana", 0.1)


def test_filter_limit_to_inverse():
    # g_alpha(lambda) -> 1/lambda with decreasing relative error
    for lam in (0.1, 1.0):
        for spec_fn in (
            lambda a: FilterSpec("tikhonov", a),
            lambda a: FilterSpec("spectral_cutoff", a),
            lambda a: FilterSpec("iterated_tikhonov", a, iterations=3),
            lambda a: FilterSpec("landweber", a, step=0.9),
        ):
            errs = []
            for a in (1e-2, 1e-4, 1e-6):
                g = filter_value(spec_fn(a), lam)
                errs.append(abs(g - 1.0 / lam) * lam)
            assert errs[0] >= errs[1] >= errs[2]
            assert errs[2] < 1e-3


FILTER_CASES = [
    ("tikhonov", dict(), (0.5, 1.0, 2.0)),
    ("spectral_cutoff", dict(), (0.5, 1.0, 2.0, 4.0)),
    ("iterated_tikhonov", dict(iterations=3), (0.5, 1.0, 2.0, 3.0)),
    ("landweber", dict(step=0.9), (0.5, 1.0, 2.0)),
]


@pytest.mark.parametrize("scheme,kw,betas", FILTER_CASES)
@pytest.mark.parametrize("alpha", [1e-1, 1e-2, 1e-3])
def test_filter_inequalities(scheme, kw, betas, alpha):
    # the three filter bounds on a dense lambda grid in [0, Lambda], Lambda=1
    spec = FilterSpec(scheme, alpha, **kw)
    q = qualification(spec)
    lam = np.linspace(0.0, 1.0, 10_000)
    g = filter_value(spec, lam)
    assert np.max(np.abs(g * np.sqrt(lam))) <= q.c1 / math.sqrt(alpha) * (1 + 1e-12)
    for beta in betas:
        assert beta <= q.beta0
        lhs = np.max(np.abs((g * lam - 1.0) * lam ** (beta / 2.0)))
        assert lhs <= q.c2 * alpha ** (beta / 2.0) * (1 + 1e-12)
    c3 = q.c3_at(max(betas))
    assert np.max(np.abs(g)) <= c3 / alpha * (1 + 1e-12)


def test_qualification_constants():
    assert qualification(FilterSpec("tikhonov", 0.1)).beta0 == 2.0
    assert qualification(FilterSpec("tikhonov", 0.1)).c1 == 0.5
    it3 = qualification(FilterSpec("iterated_tikhonov", 0.1, iterations=3))
    assert it3.beta0 == 3.0 and it3.c3 == 3.0
    assert math.isinf(qualification(FilterSpec("spectral_cutoff", 0.1)).beta0)
    lw = qualification(FilterSpec("landweber", 0.1, step=0.9))
    assert math.isinf(lw.beta0) and lw.c1 == pytest.approx(math.sqrt(0.9))
    assert lw.c3_at(2.0) >= 1.0


def test_regularize_identity(grid100, rng):
    f = GridFunction(grid100, rng.normal(size=grid100.size))
    out = regularize(identity_operator(grid100), f, FilterSpec("tikhonov", 1.0))
    assert np.allclose(out.values, f.values / 2.0, atol=1e-10)


def test_regularize_rank_one_cutoff(grid100):
    u = trig_basis(2, grid100)
    v = trig_basis(3, grid100)
    out = regularize(rank_one(v, u), v, FilterSpec("spectral_cutoff", 0.5))
    assert np.allclose(out.values, u.values, atol=1e-8)


def test_regularize_matches_direct_solve(rng):
    for trial in range(20):
        m = int(rng.integers(10, 60))
        op = random_operator(rng, m, m)
        r = GridFunction(op.range_grid, rng.normal(size=m))
        alpha = float(10 ** rng.uniform(-2, 0))
        a = regularize(op, r, FilterSpec("tikhonov", alpha))
        b = tikhonov_direct(op, r, alpha)
        assert l2_norm(a - b) < 1e-10


def test_tikhonov_direct_bounds(rng, grid100):
    op = random_operator(rng, 100, 100)
    r = GridFunction(grid100, rng.normal(size=100))
    big = tikhonov_direct(op, r, 1e6)
    kr = apply_operator(adjoint(op), r)
    assert l2_norm(big) <= l2_norm(kr) / 1e6 + 1e-15
    from specreg.operators import DiscreteOperator

    zero = DiscreteOperator(np.zeros((100, 100)), grid100, grid100)
    assert l2_norm(tikhonov_direct(zero, r, 0.5)) == 0.0


def test_tikhonov_norm_bound(rng):
    # ||phi_alpha||^2 <= ||r||^2 / (4 alpha)
    for _ in range(10):
        op = random_operator(rng, 40, 40)
        r = GridFunction(op.range_grid, rng.normal(size=40))
        alpha = float(10 ** rng.uniform(-3, 0))
        fit = regularize(op, r, FilterSpec("tikhonov", alpha))
        assert l2_norm(fit) ** 2 <= l2_norm(r) ** 2 / (4 * alpha) * (1 + 1e-10)


def test_regularize_rank_deficient(rng):
    # numerical rank 1 on a 50-node grid still yields finite output
    g = make_grid(50)
    u = GridFunction(g, rng.normal(size=50))
    op = rank_one(u, u)
    r = GridFunction(g, rng.normal(size=50))
    for scheme, kw in [
        ("tikhonov", {}),
        ("spectral_cutoff", {}),
        ("iterated_tikhonov", dict(iterations=4)),
        ("landweber", dict(step=0.01)),
    ]:
        fit = regularize(op, r, FilterSpec(scheme, 0.01, **kw))
        assert np.all(np.isfinite(fit.values))


def test_operator_power_basics(rng, grid100):
    op = random_operator(rng, 100, 100)
    kk = compose(adjoint(op), op)
    p1 = operator_power(kk, 1.0)
    assert np.max(np.abs(p1.matrix - kk.matrix)) < 1e-10
    ident = identity_operator(grid100)
    for beta in (0.5, 2.0):
        p = operator_power(ident, beta)
        assert np.max(np.abs(p.matrix - ident.matrix)) < 1e-8


def test_operator_power_square_root(rng):
    op = random_operator(rng, 40, 40)
    kk = compose(adjoint(op), op)
    half = operator_power(kk, 0.5)
    squared = compose(half, half)
    assert np.max(np.abs(squared.matrix - kk.matrix)) < 1e-8


def test_operator_power_rejects_nonselfadjoint(rng):
    op = random_operator(rng, 30, 30)
    with pytest.raises(InvalidArgumentError):
        operator_power(op, 0.5)


def test_source_element(rng):
    op = random_operator(rng, 60, 60)
    cache = svd(op)
    j = 4
    phi_j = GridFunction(op.domain_grid, cache.right_functions[:, j])
    lam = cache.singular_values[j]
    beta = 1.7
    out = source_element(op, beta, phi_j, cache=cache)
    assert np.allclose(out.values, lam**beta * phi_j.values, atol=1e-8)
    # spectral bound on random inputs
    for _ in range(5):
        psi = GridFunction(op.domain_grid, rng.normal(size=60))
        s = source_element(op, beta, psi, cache=cache)
        assert l2_norm(s) <= cache.singular_values[0] ** beta * l2_norm(psi) * (1 + 1e-10)


def test_source_element_beta_zero_projects(rng):
    g = make_grid(40)
    u = trig_basis(2, g)
    op = rank_one(u, u)
    psi = GridFunction(g, rng.normal(size=40))
    out = source_element(op, 0.0, psi)
    assert np.allclose(out.values, inner(u, psi) * u.values, atol=1e-8)


def test_norm_2inf_rank_one(grid100, rng):
    u = trig_basis(2, grid100)  # unit L2 norm
    vals = rng.normal(size=grid100.size)
    v = GridFunction(grid100, vals)
    op = rank_one(v, u)
    assert norm_2inf(op) == pytest.approx(sup_norm(v), rel=1e-12)
    from specreg.operators import DiscreteOperator

    zero = DiscreteOperator(np.zeros((100, 100)), grid100, grid100)
    assert norm_2inf(zero) == 0.0


def test_norm_2inf_random_search_lower_bound(rng):
    # brute maximization of ||K* psi||_inf over unit candidates evaluated
    # through operator application; candidates include the normalized kernel
    # rows, where Cauchy-Schwarz is attained
    op = random_operator(rng, 50, 50)
    adj = adjoint(op)
    bound = norm_2inf(adj)
    candidates = [rng.normal(size=50) for _ in range(10_000)]
    candidates += [row.copy() for row in adj.matrix]
    best = 0.0
    for psi in candidates:
        f = GridFunction(adj.domain_grid, psi)
        f = f * (1.0 / l2_norm(f))
        best = max(best, sup_norm(apply_operator(adj, f)))
    assert best <= bound * (1 + 1e-10)
    assert best >= 0.98 * bound


def test_fractional_power_perturbation_rates(rng):
    # ||(Khat*Khat)^{beta/2} - (K*K)^{beta/2}|| / eps^{min(beta,1)} bounded;
    # for beta=1 the same ratio divided by log(1/eps) stays bounded
    g = make_grid(30)
    from specreg.operators import DiscreteOperator

    u, _ = np.linalg.qr(rng.normal(size=(30, 30)))
    v, _ = np.linalg.qr(rng.normal(size=(30, 30)))
    sv = np.zeros(30)
    sv[:10] = 2.0 ** -np.arange(10)
    base = (u * sv) @ v.T
    sqw = np.sqrt(g.weights)
    k_true = DiscreteOperator(base / sqw[:, None] / sqw[None, :], g, g)
    pert = rng.normal(size=(30, 30))
    pert_op = DiscreteOperator(pert / sqw[:, None] / sqw[None, :], g, g)
    pert_op = DiscreteOperator(pert_op.matrix / operator_norm(pert_op), g, g)

    eps_grid = [1e-1, 1e-2, 1e-3, 1e-4]
    for beta in (0.5, 1.5, 2.0, 3.0):
        ratios = []
        for eps in eps_grid:
            k_hat = DiscreteOperator(k_true.matrix + eps * pert_op.matrix, g, g)
            d = operator_norm(
                _power_diff(k_hat, k_true, beta)
            )
            ratios.append(d / eps ** min(beta, 1.0))
        assert max(ratios) < 50 * min(r for r in ratios if r > 0)
    ratios = []
    for eps in eps_grid:
        k_hat = DiscreteOperator(k_true.matrix + eps * pert_op.matrix, g, g)
        d = operator_norm(_power_diff(k_hat, k_true, 1.0))
        ratios.append(d / (eps * np.log(1.0 / eps)))
    assert max(ratios) < 50 * min(ratios)


def _power_diff(k_hat, k_true, beta):
    from specreg.operators import DiscreteOperator, adjoint, compose, operator_power

    a = operator_power(compose(adjoint(k_hat), k_hat), beta / 2.0)
    b = operator_power(compose(adjoint(k_true), k_true), beta / 2.0)
    return DiscreteOperator(a.matrix - b.matrix, a.domain_grid, a.range_grid)
