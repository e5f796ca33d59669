"""Orthonormal families, quadrature, projection, and sampling."""

import numpy as np
import pytest
from numpy.polynomial import legendre
from scipy import stats
from scipy.integrate import quad

from tumorkin import BetaOn, RandomVector, TensorBasis, Uniform, build_basis, gauss_rule
from tumorkin.uq_basis import multi_indices, project, project_values, tensor_rule


def test_uniform_moments_match_scipy():
    d = Uniform(0.2, 0.4)
    ref = stats.uniform(loc=0.2, scale=0.2)
    assert d.mean == pytest.approx(ref.mean())
    assert d.var == pytest.approx(ref.var())
    x = np.linspace(0.2, 0.4, 7)
    assert d.pdf(x) == pytest.approx(ref.pdf(x))
    assert d.cdf(x) == pytest.approx(ref.cdf(x))


def test_beta_moments_match_scipy():
    d = BetaOn(0.705, 0.574, 0.4, 1.1)
    ref = stats.beta(0.705, 0.574, loc=0.4, scale=0.7)
    assert d.mean == pytest.approx(ref.mean())
    assert d.var == pytest.approx(ref.var())
    x = np.linspace(0.41, 1.09, 9)
    assert d.pdf(x) == pytest.approx(ref.pdf(x))
    assert d.cdf(x) == pytest.approx(ref.cdf(x))
    assert d.cdf(0.3) == 0.0 and d.cdf(1.2) == 1.0


def test_dist_validation():
    with pytest.raises(ValueError):
        Uniform(1.0, 1.0)
    with pytest.raises(ValueError):
        BetaOn(0.0, 1.0, 0.0, 1.0)
    with pytest.raises(ValueError):
        BetaOn(1.0, 1.0, 2.0, 1.0)


def test_gauss_rule_uniform_matches_leggauss():
    d = Uniform(-1.0, 1.0)
    nodes, weights = gauss_rule(d, 6)
    ref_nodes, ref_weights = legendre.leggauss(6)
    assert nodes == pytest.approx(np.sort(ref_nodes), abs=1e-13)
    # probability normalization: Lebesgue weights over measure 2
    assert weights == pytest.approx(ref_weights[np.argsort(ref_nodes)] / 2.0)
    assert weights.sum() == pytest.approx(1.0, abs=1e-14)


@pytest.mark.parametrize("dist", [
    Uniform(0.001, 0.03),
    BetaOn(0.705, 0.574, 0.4, 1.1),
    BetaOn(3.2, 1.5, -1.0, 2.0),
])
def test_gauss_rule_integrates_moments_exactly(dist):
    # an n-point rule is exact through degree 2n - 1; compare raw moments
    # against quadrature of the scipy density
    n = 5
    nodes, weights = gauss_rule(dist, n)
    assert weights.sum() == pytest.approx(1.0, abs=1e-12)
    if isinstance(dist, Uniform):
        ref = stats.uniform(loc=dist.lo, scale=dist.hi - dist.lo)
    else:
        ref = stats.beta(dist.c1, dist.c2, loc=dist.lo, scale=dist.hi - dist.lo)
    for k in range(2 * n):
        mk = float((weights * nodes**k).sum())
        ref_mk = ref.moment(k)
        assert mk == pytest.approx(ref_mk, rel=5e-9, abs=1e-12)


@pytest.mark.parametrize("dist", [
    Uniform(0.2, 0.4),
    BetaOn(0.656, 0.193, 0.69, 0.8),
])
def test_basis_orthonormal_under_quadrature(dist):
    basis = build_basis((dist,), 6)
    nodes, weights = basis.quadrature()
    psi = basis.eval(nodes[:, None] if nodes.ndim == 1 else nodes)
    gram = (psi * weights[:, None]).T @ psi
    assert np.abs(gram - np.eye(basis.n_terms)).max() < 1e-10


def test_basis_orthonormal_against_quad():
    # independent continuous route: direct integration of psi_i psi_j rho
    dist = BetaOn(1.7, 2.4, 0.0, 1.0)
    basis = build_basis((dist,), 3)

    def gram_entry(i, j):
        val, _ = quad(
            lambda z: basis.eval(np.array([[z]]))[0, i]
            * basis.eval(np.array([[z]]))[0, j] * dist.pdf(z),
            0.0, 1.0, epsabs=1e-12, epsrel=1e-12)
        return val

    for i in range(4):
        for j in range(i, 4):
            assert gram_entry(i, j) == pytest.approx(1.0 if i == j else 0.0,
                                                     abs=1e-8)


def test_tensor_basis_counts_and_eval():
    dists = (Uniform(0.0, 1.0), BetaOn(2.0, 3.0, 0.0, 1.0))
    basis = build_basis(dists, 2)
    assert basis.dim == 2
    assert basis.n_terms == 9
    assert multi_indices(2, 2).shape == (9, 2)
    Z = np.array([[0.3, 0.6], [0.9, 0.1]])
    psi = basis.eval(Z)
    assert psi.shape == (2, 9)
    # the constant term of an orthonormal family is identically one
    assert psi[:, 0] == pytest.approx([1.0, 1.0])


def test_projection_recovers_polynomials():
    dists = (Uniform(0.001, 0.03),)
    basis = build_basis(dists, 4)

    def fn(Z):
        z = Z[:, 0]
        return 2.0 + 3.0 * z - 7.0 * z**3

    coeffs = project(fn, basis)
    zs = np.linspace(0.001, 0.03, 11)
    rec = basis.eval(zs[:, None]) @ coeffs
    assert rec == pytest.approx(fn(zs[:, None]), rel=1e-12)
    # degree-4 and higher-order content of a cubic must vanish
    assert abs(coeffs[-1]) < 1e-13


def test_project_values_matches_project():
    dists = (Uniform(-1.0, 2.0),)
    basis = build_basis(dists, 3)
    nodes, weights = basis.quadrature()
    Z = nodes if nodes.ndim == 2 else nodes[:, None]
    vals = np.cos(Z[:, 0])
    psi = basis.eval(Z)
    c1 = project_values(vals, psi, weights)
    c2 = project(lambda Zq: np.cos(Zq[:, 0]), basis)
    assert c1 == pytest.approx(c2, rel=1e-12)


def test_tensor_rule_weights():
    dists = (Uniform(0.0, 1.0), BetaOn(0.5, 0.5, 0.0, 1.0))
    nodes, weights = tensor_rule([gauss_rule(d, 3) for d in dists])
    assert nodes.shape == (9, 2)
    assert weights.sum() == pytest.approx(1.0, abs=1e-12)
    # product structure: first-coordinate marginal mean matches the law
    assert (weights * nodes[:, 0]).sum() == pytest.approx(0.5, abs=1e-12)


def test_random_vector_sampling(rng):
    rv = RandomVector(names=("x_L", "a"),
                      dists=(BetaOn(0.705, 0.574, 0.4, 1.1),
                             Uniform(0.69, 0.8)))
    Z = rv.sample(rng, 4000)
    assert Z.shape == (4000, 2)
    p1 = stats.kstest(Z[:, 0], rv.dists[0].cdf).pvalue
    p2 = stats.kstest(Z[:, 1], rv.dists[1].cdf).pvalue
    assert min(p1, p2) > 1e-4


def test_random_vector_validation():
    with pytest.raises(ValueError):
        RandomVector(names=("a", "a"),
                     dists=(Uniform(0, 1), Uniform(0, 1)))
    with pytest.raises(ValueError):
        RandomVector(names=("a", "b"), dists=(Uniform(0, 1),))


def test_beta_rule_singular_shapes_stay_finite():
    # Table-style concentrations below one push mass onto the edges; the
    # recurrence still must produce strictly interior, finite nodes
    d = BetaOn(0.112, 0.238, 0.007, 0.12)
    nodes, weights = gauss_rule(d, 8)
    assert np.all(np.isfinite(nodes)) and np.all(np.isfinite(weights))
    assert np.all((nodes > 0.007) & (nodes < 0.12))
    assert np.all(weights > 0.0)
    assert (weights * nodes).sum() == pytest.approx(
        stats.beta(0.112, 0.238, loc=0.007, scale=0.113).mean(), rel=1e-10)
