import math

import numpy as np
import pytest

from conftest import GRAPHS, tree_for
from kbratteli import ParamOutOfRange, SpectralParams, TruncationError, annotate_measure
from kbratteli.heat import (
    asymp_band_stability,
    audit_asymp,
    audit_pbound,
    heat_closed,
    heat_eigen,
    heat_eigen_matrix,
    heat_expm_matrix,
    heat_matrix,
    node_offdiag_values,
    regress_exponent,
    semigroup_apply,
    tail_bound,
)
from kbratteli.spectral import annotate_lambda, eigenbasis

P1 = SpectralParams(s=1.0, delta=0.5)
TIMES = [1e-3, 0.05, 0.3, 2.0]


def _mu(tree, m):
    return annotate_measure(tree)[tree.level_ids(m)]


@pytest.mark.parametrize("name", sorted(GRAPHS))
@pytest.mark.parametrize("t", TIMES)
def test_closed_eigen_expm_agree(name, t):
    m = 3
    tree = tree_for(name, m)
    for p in (P1, SpectralParams(1.7, 0.4), SpectralParams(2.2, 0.5)):
        P = heat_matrix(tree, p, t, m)
        E = heat_eigen_matrix(tree, p, t, m)
        X = heat_expm_matrix(tree, p, t, m)
        scale = np.abs(P).max()
        assert np.max(np.abs(P - E)) <= 1e-9 * scale
        assert np.max(np.abs(P - X)) <= 1e-7 * scale


@pytest.mark.parametrize("name", sorted(GRAPHS))
def test_symmetric_stochastic_positive(name):
    m = 4
    tree = tree_for(name, m)
    mu = _mu(tree, m)
    for t in TIMES:
        P = heat_matrix(tree, SpectralParams(1.3, 0.5), t, m)
        np.testing.assert_allclose(P, P.T, rtol=1e-13, atol=0)
        np.testing.assert_allclose(P @ mu, 1.0, rtol=1e-11)
        assert P.min() >= 0


def test_chapman_kolmogorov():
    m = 4
    tree = tree_for("skew_two_graph", m)
    mu = _mu(tree, m)
    a, b = 0.07, 0.19
    Pa, Pb = heat_matrix(tree, P1, a, m), heat_matrix(tree, P1, b, m)
    Pab = heat_matrix(tree, P1, a + b, m)
    np.testing.assert_allclose((Pa * mu) @ Pb, Pab, rtol=1e-10)


@pytest.mark.parametrize("name", sorted(GRAPHS))
def test_large_time_limit(name):
    tree = tree_for(name, 3)
    P = heat_matrix(tree, P1, 200.0, 3)
    ids = tree.level_ids(3)
    roots = tree.root[ids]
    kappa = tree.perron.kappa
    expected = np.where(roots[:, None] == roots[None, :], 1.0 / kappa[roots][:, None], 0.0)
    np.testing.assert_allclose(P, expected, rtol=1e-12, atol=1e-12)


def test_offdiag_recurrence_matches_pairs():
    tree = tree_for("flip", 4)
    t = np.array([0.01, 0.5])
    off = node_offdiag_values(tree, P1, t)
    leaves = tree.leaves()
    x, y = leaves[0], leaves[5]
    val = heat_closed(tree, P1, 0.5, x, y).value
    meet = next(n for n in range(4, -1, -1) if tree.ancestor_at(x, n) == tree.ancestor_at(y, n))
    assert val == pytest.approx(off[tree.ancestor_at(x, meet), 1], rel=1e-14)


def test_closed_cross_root_is_zero():
    tree = tree_for("two_graph", 3)
    ev = heat_closed(tree, P1, 0.2, tree.leaves()[0], tree.leaves()[-1])
    assert ev.value == 0.0


def test_closed_dyadic_ondiag_closed_form():
    tree = tree_for("dyadic", 8)
    x = tree.leaves()[0]
    t = 0.5
    lam = annotate_lambda(tree, P1)
    chain = [tree.ancestor_at(x, n) for n in range(9)]
    ref = 1.0 + sum(2.0 ** n * math.exp(lam[chain[n]] * t) for n in range(8))
    assert heat_closed(tree, P1, t, x, x).value == pytest.approx(ref, rel=1e-14)


def test_tail_bound_is_an_upper_bound():
    deep = tree_for("skew_two_graph", 7)
    mu = annotate_measure(deep)
    lam = annotate_lambda(deep, P1)
    t = 1e-6
    for x in deep.level_ids(7)[::97]:
        chain = np.array([deep.ancestor_at(x, j) for j in range(8)])
        terms = (1.0 / mu[chain[1:]] - 1.0 / mu[chain[:-1]]) * np.exp(lam[chain[:-1]] * t)
        for n in (1, 2, 3):
            assert 0 < terms[n:].sum() <= tail_bound(deep, P1, chain[n], t)


def test_truncation_error_at_small_t():
    tree = tree_for("dyadic", 3)
    x = tree.leaves()[0]
    with pytest.raises(TruncationError):
        heat_closed(tree, P1, 1e-7, x, x)
    ev = heat_closed(tree, P1, 1e-7, x, x, tail_tol=None)
    assert ev.tail_bound > 1e-9
    assert heat_closed(tree, P1, 1.0, x, x).tail_bound < 1e-9


def test_heat_requires_divergent_params():
    tree = tree_for("dyadic", 3)
    with pytest.raises(ParamOutOfRange):
        heat_matrix(tree, SpectralParams(2.6, 0.5), 0.1, 3)
    with pytest.raises(ParamOutOfRange):
        heat_closed(tree, P1, 0.0, 1, 2)


def test_semigroup_on_eigenfunctions():
    m = 4
    tree = tree_for("skew_two_graph", m)
    basis = eigenbasis(tree, P1, m)
    Psi, lams = basis.matrix(tree, m)
    for j in (0, 3, len(lams) - 1):
        for t in (0.01, 0.3):
            out = semigroup_apply(tree, P1, t, Psi[j], m)
            np.testing.assert_allclose(out, math.exp(lams[j] * t) * Psi[j], atol=1e-10 * np.abs(Psi[j]).max())
    const = np.ones(tree.level_sizes()[m])
    np.testing.assert_allclose(semigroup_apply(tree, P1, 0.4, const, m), const, rtol=1e-12)
    np.testing.assert_array_equal(semigroup_apply(tree, P1, 0.0, const, m), const)


def test_heat_eigen_pointwise():
    tree = tree_for("flip", 4)
    leaves = tree.leaves()
    x, y = leaves[1], leaves[7]
    assert heat_eigen(tree, P1, 0.2, x, y, 4) == pytest.approx(heat_closed(tree, P1, 0.2, x, y).value, rel=1e-10)


@pytest.mark.parametrize("name", sorted(GRAPHS))
def test_pbound_and_asymp(name):
    tree = tree_for(name, 6 if name != "skew_two_graph" else 5)
    t_grid = np.logspace(-3, 0, 12)
    for p in (P1, SpectralParams(1.6, 0.4)):
        a = audit_pbound(tree, p, t_grid)
        assert a.pass_, a.to_dict()
        assert a.extra["checked_a"] > 0 and a.extra["checked_b"] > 0
        b = audit_asymp(tree, p, t_grid)
        assert b.pass_ and 0 < b.c1 <= b.c2


def test_asymp_band_stable_dyadic():
    t_grid = np.logspace(-3, 0, 12)
    res = asymp_band_stability(tree_for("dyadic", 6), tree_for("dyadic", 8), P1, t_grid)
    assert res["pass"], res


def test_estimates_need_s_below_two():
    tree = tree_for("dyadic", 4)
    with pytest.raises(ParamOutOfRange):
        audit_pbound(tree, SpectralParams(2.0, 0.5), [0.1])


def test_regression_dyadic():
    tree = tree_for("dyadic", 10)
    p = SpectralParams(1.5, 0.5)
    res = regress_exponent(tree, p)
    # 2 + delta - s = 1 and (2 + delta - s)/delta = 2 here
    assert res["node_slope"] == pytest.approx(1.0, abs=5e-3)
    d = res["distance_to_candidates"]
    assert d["2+delta-s"] < 0.05 < d["(2+delta-s)/delta"]
    with pytest.raises(ParamOutOfRange):
        regress_exponent(tree, P1)
