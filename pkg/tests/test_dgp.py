"""Monte Carlo DGP: density construction, projections, rejection sampling."""

from fractions import Fraction

import numpy as np
import pytest
from scipy.stats import norm

from specreg.dgp import (
    DgpConfig,
    best_approx,
    build_nid_density,
    format_j0,
    parse_j0,
    sample,
    true_phi,
    truncated_normal_density,
    _model_for,
)
from specreg.errors import InvalidArgumentError
from specreg.grid import inner, l2_norm, make_grid, on_grid, trig_basis
from specreg.npiv import build_operator
from specreg.operators import apply_operator


def test_true_phi_endpoints():
    assert true_phi(0.0) == 0.0
    assert abs(true_phi(1.0)) < 1e-15


def test_true_phi_exact_rational():
    z = Fraction(1, 2)
    coeffs = [1, -1, 1, -1, 1, -1, 1, 1, -1, -1, 0]
    acc = Fraction(0)
    for c in coeffs:
        acc = acc * z + c
    assert true_phi(0.5) == pytest.approx(float(acc), abs=1e-15)


def test_truncated_normal_symmetry(rng):
    pts = rng.uniform(size=(50, 2))
    a = truncated_normal_density(pts[:, 0], pts[:, 1])
    b = truncated_normal_density(pts[:, 1], pts[:, 0])
    assert np.max(np.abs(a - b)) < 1e-12


def test_truncated_normal_peak_and_mass():
    # 2-d quadrature oracle for the normalizer
    m = 800
    x = (np.arange(m) + 0.5) / m
    zz, ww = np.meshgrid(x, x, indexing="ij")
    det = 0.05 * 0.05 - 0.01 * 0.01
    inv = np.linalg.inv(np.array([[0.05, 0.01], [0.01, 0.05]]))
    quad_form = (
        inv[0, 0] * (zz - 0.5) ** 2
        + 2 * inv[0, 1] * (zz - 0.5) * (ww - 0.5)
        + inv[1, 1] * (ww - 0.5) ** 2
    )
    raw = np.exp(-0.5 * quad_form) / (2 * np.pi * np.sqrt(det))
    mass_oracle = raw.sum() / m**2
    peak_untruncated = 1.0 / (2 * np.pi * np.sqrt(det))
    got = truncated_normal_density(0.5, 0.5)
    assert got == pytest.approx(peak_untruncated / mass_oracle, rel=1e-6)
    # full density integrates to one on the square
    vals = truncated_normal_density(zz, ww)
    assert vals.sum() / m**2 == pytest.approx(1.0, abs=1e-6)
    assert truncated_normal_density(1.2, 0.5) == 0.0


def test_parse_and_format_j0():
    assert parse_j0("inf") is None
    assert parse_j0(None) is None
    assert parse_j0(3) == 3
    assert format_j0(None) == "inf"
    assert format_j0(2) == "2"
    with pytest.raises(InvalidArgumentError):
        parse_j0("nope")


def test_nid_density_j0_1_constant_in_z(grid100):
    cfg = DgpConfig(n=10, seed=0, j0=1)
    dens = build_nid_density(cfg, grid100)
    spread = dens.values.max(axis=0) - dens.values.min(axis=0)
    assert np.max(spread) < 1e-12


def test_nid_density_mass_one(grid100):
    for j0 in (1, 2, None):
        dens = build_nid_density(DgpConfig(n=10, seed=0, j0=j0), grid100)
        assert dens.mass() == pytest.approx(1.0, abs=1e-8)


def test_nid_density_close_to_target(grid100):
    dens = build_nid_density(DgpConfig(n=10, seed=0, j0=None), grid100)
    zz, ww = np.meshgrid(grid100.points, grid100.points, indexing="ij")
    f_id = truncated_normal_density(zz, ww)
    num = np.sqrt(np.mean((dens.values - f_id) ** 2))
    den = np.sqrt(np.mean(f_id**2))
    assert num / den < 0.05


def test_nid_operator_annihilates_excluded_frequencies(grid100):
    for j0 in (1, 2):
        cfg = DgpConfig(n=10, seed=0, j0=j0)
        op = build_operator(build_nid_density(cfg, grid100))
        for j in range(j0 + 1, 26):
            assert l2_norm(apply_operator(op, trig_basis(j, grid100))) < 1e-6


def test_nid_marginal_consistency(grid100):
    # int f(z, .) dz equals the k-projection of the w-marginal up to the
    # normalizing constant: compare shapes after normalizing both
    cfg = DgpConfig(n=10, seed=0, j0=2)
    dens = build_nid_density(cfg, grid100)
    marg = dens.values.T @ grid100.weights  # function of w
    fine = grid100.points
    f_w = np.array(
        [
            np.sum(
                truncated_normal_density(np.linspace(0.001, 0.999, 1200), w)
            )
            / 1200
            for w in fine
        ]
    )
    from specreg.grid import BasisSpec, GridFunction, project_onto_span

    proj = project_onto_span(
        GridFunction(grid100, f_w), BasisSpec(count=cfg.k_max), range(1, cfg.k_max + 1)
    )
    a = marg / np.sqrt(np.sum(marg**2))
    b = proj.values / np.sqrt(np.sum(proj.values**2))
    assert np.max(np.abs(a - b)) < 5e-3


def test_aliasing_guard(grid100):
    with pytest.raises(InvalidArgumentError):
        build_nid_density(DgpConfig(n=10, seed=0, j0=30), grid100)
    with pytest.raises(InvalidArgumentError):
        best_approx(DgpConfig(n=10, seed=0, j0=40), grid100)


def test_best_approx_cases(grid100):
    full = best_approx(DgpConfig(n=10, seed=0, j0=None), grid100)
    assert np.allclose(full.values, true_phi(grid100.points))
    const = best_approx(DgpConfig(n=10, seed=0, j0=1), grid100)
    phi = on_grid(true_phi, grid100)
    c1 = inner(phi, trig_basis(1, grid100))
    assert np.allclose(const.values, c1, atol=1e-12)
    two = best_approx(DgpConfig(n=10, seed=0, j0=2), grid100)
    c2 = inner(phi, trig_basis(2, grid100))
    want = c1 + c2 * trig_basis(2, grid100).values
    assert np.allclose(two.values, want, atol=1e-10)


def test_sample_deterministic():
    cfg = DgpConfig(n=500, seed=11, j0=2)
    s1, s2 = sample(cfg), sample(cfg)
    assert np.array_equal(s1.y, s2.y)
    assert np.array_equal(s1.z, s2.z)
    assert np.array_equal(s1.w, s2.w)


def test_sample_acceptance_rate():
    cfg = DgpConfig(n=60_000, seed=5, j0=None)
    _, proposals, accepted = sample(cfg, return_stats=True)
    model = _model_for(cfg)
    expect = 1.0 / (1.01 * model.peak)  # mass one over envelope height
    rate = accepted / proposals
    se = np.sqrt(expect * (1 - expect) / proposals)
    assert abs(rate - expect) < 3 * se


def test_sample_marginal_mean():
    cfg = DgpConfig(n=100_000, seed=9, j0=None)
    s = sample(cfg)
    # quadrature oracle for E[Z] under the model density
    g = make_grid(400)
    dens = build_nid_density(DgpConfig(n=10, seed=0, j0=None, k_max=25), g)
    f_z = dens.values @ g.weights
    mean_oracle = float(np.sum(g.weights * g.points * f_z))
    se = s.z.std() / np.sqrt(s.n)
    assert abs(s.z.mean() - mean_oracle) < 3 * se


def test_sample_heteroskedastic():
    s = sample(DgpConfig(n=100_000, seed=13, j0=None))
    resid = s.y - true_phi(s.z)
    hi = resid[s.z >= 0.8]
    lo = resid[s.z <= 0.2]
    assert hi.var() > lo.var()


def test_config_validation():
    with pytest.raises(InvalidArgumentError):
        DgpConfig(n=10, seed=0, cov=((0.05, 0.2), (0.2, 0.05)))
    with pytest.raises(InvalidArgumentError):
        DgpConfig(n=10, seed=0, j0=0)
