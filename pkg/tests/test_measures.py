import math
from fractions import Fraction

import numpy as np
import pytest

from conftest import GRAPHS, tree_for
from kbratteli import WeightParams, annotate_measure, annotate_weight, d_w, vd_audit_dw
from kbratteli.measures import (
    ball_dw,
    diam_check,
    dw_matrix,
    level_log_scale,
    level_scale,
    level_weight_scale,
    vd_constant_dw,
)
from oracle import enumerate_paths, mu as mu_exact, weight_half

HALF = WeightParams(0.5)


def test_delta_range():
    for bad in (0.0, 1.0, -0.2, 1.5):
        with pytest.raises(ValueError):
            WeightParams(bad)


def test_measure_examples():
    dy = tree_for("dyadic", 3)
    assert annotate_measure(dy)[dy.leaves()].tolist() == [0.125] * 8
    two = tree_for("two_graph", 3)
    np.testing.assert_allclose(annotate_measure(two)[two.leaves()], 1 / 16, rtol=1e-14)


@pytest.mark.parametrize("name", sorted(GRAPHS))
def test_leaf_mass_sums_to_one(name):
    tree = tree_for(name, 5)
    assert math.fsum(annotate_measure(tree)[tree.leaves()]) == pytest.approx(1.0, abs=1e-12)


def test_weight_examples():
    dy = tree_for("dyadic", 2)
    w = annotate_weight(dy, HALF)
    assert w[dy.leaves()[0]] == 0.0625
    tri = tree_for("triadic", 1)
    assert annotate_weight(tri, HALF)[tri.leaves()[0]] == pytest.approx(1 / 9, rel=1e-15)
    skew = tree_for("skew_two_graph", 2)
    ws = annotate_weight(skew, WeightParams(0.3))
    np.testing.assert_allclose(ws[skew.level_ids(0)], skew.perron.kappa, rtol=1e-15)


@pytest.mark.parametrize("name", ["skew_two_graph", "flip", "two_graph"])
def test_exact_rational_oracle(name):
    """mu and w at delta = 1/2 against Fraction enumeration."""
    mats = GRAPHS[name]
    tree = tree_for(name, 3)
    paths = enumerate_paths(mats, 3)
    kappa = [Fraction(x).limit_denominator(1000) for x in tree.perron.kappa]
    rho = [Fraction(r).limit_denominator(1000) for r in tree.perron.rho]
    mu = annotate_measure(tree)
    w = annotate_weight(tree, HALF)
    for p in paths:
        node = tree.find(p[0], list(p[1:]))
        assert mu[node] == pytest.approx(float(mu_exact(paths, kappa, rho, p)), rel=1e-13)
        assert w[node] == pytest.approx(float(weight_half(paths, kappa, rho, p)), rel=1e-13)


@pytest.mark.parametrize("delta", [0.3, 0.5, 0.8])
def test_weight_measure_relation(delta):
    tree = tree_for("skew_two_graph", 5)
    mu = annotate_measure(tree)
    w = annotate_weight(tree, WeightParams(delta))
    kappa = tree.perron.kappa[tree.source]
    np.testing.assert_allclose(w, (mu / kappa) ** (1 / delta) * kappa, rtol=1e-12)


def test_weight_strictly_decreasing_and_vanishing():
    tree = tree_for("two_graph", 8)
    w = annotate_weight(tree, WeightParams(0.7))
    nonroot = np.arange(tree.offsets[1], tree.n_nodes)
    assert np.all(w[nonroot] < w[tree.parent[nonroot]])
    sup = [w[tree.level_ids(n)].max() for n in range(tree.depth + 1)]
    assert all(a > b for a, b in zip(sup, sup[1:]))
    assert sup[-1] < 1e-3


def test_log_domain_scales():
    perron = tree_for("skew_two_graph", 1).perron
    for n in (150, 199, 201, 400):
        expected = -math.fsum(math.log(perron.rho[j % 2]) for j in range(n))
        assert math.log(level_scale(perron, 2, n)) == pytest.approx(expected, rel=1e-13)
        assert level_log_scale(perron, 2, n) == pytest.approx(-expected, rel=1e-14)
    for n in (150, 300):
        got = math.log(level_weight_scale(perron, 2, n, 0.8))
        assert got == pytest.approx(-level_log_scale(perron, 2, n) / 0.8, rel=1e-13)


def test_d_w_examples():
    dy = tree_for("dyadic", 3)
    x = dy.find(0, [(0, 0)] * 3)
    y = dy.find(0, [(0, 0), (0, 0), (0, 1)])
    assert d_w(dy, x, x, HALF) == 0.0
    assert d_w(dy, x, y, HALF) == 2.0 ** -4
    two = tree_for("two_graph", 3)
    assert d_w(two, two.leaves()[0], two.leaves()[-1], HALF) == 1.0


@pytest.mark.parametrize("name, depth", [("dyadic", 6), ("two_graph", 5), ("skew_two_graph", 4),
                                         ("triadic", 4)])
def test_ultrametric_exhaustive(name, depth):
    tree = tree_for(name, depth)
    D = dw_matrix(tree, WeightParams(0.6), depth)
    assert np.all(D == D.T)
    for j in range(D.shape[0]):
        assert not np.any(D > np.maximum(D[:, j][:, None], D[j, :][None, :]))


def test_ball_dw_examples():
    dy = tree_for("dyadic", 3)
    x = dy.find(0, [(0, 0)] * 3)
    assert ball_dw(dy, x, 0.1, HALF) == dy.find(0, [(0, 0), (0, 0)])
    assert ball_dw(dy, x, 1.5, HALF) is None
    assert ball_dw(dy, x, 1e-9, HALF) == x


@pytest.mark.parametrize("name, depth", [("dyadic", 5), ("two_graph", 4), ("skew_two_graph", 3)])
def test_ball_is_cylinder_brute_force(name, depth):
    tree = tree_for(name, depth)
    D = dw_matrix(tree, HALF, depth)
    leaves = tree.leaves()
    anc = tree.ancestors(depth)
    w = annotate_weight(tree, HALF)
    radii = np.unique(np.concatenate([w, w * 1.0001, w * 0.9999, [1.0, 1.2]]))
    for i in range(0, leaves.size, 3):
        for r in radii:
            node = ball_dw(tree, leaves[i], r, HALF)
            brute = set(np.nonzero(D[i] < r)[0].tolist())
            if node is None:
                assert brute == set(range(leaves.size))
            else:
                under = set(np.nonzero(anc[:, tree.level[node]] == node)[0].tolist())
                assert brute == under


def test_vd_dyadic():
    tree = tree_for("dyadic", 8)
    rows = []
    rep = vd_audit_dw(tree, HALF, rows_out=rows)
    assert rep.pass_ and rep.empirical_constant <= rep.theoretical_bound
    ratios = np.array([r for _, _, r in rows])
    # every ratio is a power of two
    np.testing.assert_allclose(np.exp2(np.round(np.log2(ratios))), ratios, rtol=1e-12)
    assert rep.extra["constants"]["Y"] == 1.0
    assert rep.to_dict()["pass"] is True


def test_vd_equal_balls_ratio_one():
    tree = tree_for("dyadic", 6)
    rows = []
    vd_audit_dw(tree, HALF, radius_grid=[0.3], center_set=tree.leaves()[:4], rows_out=rows)
    # B(x, 0.3) and B(x, 0.6) are both the whole space of the single root
    assert [r for _, _, r in rows] == [1.0] * 4


def test_vd_constant_closed_form():
    perron = tree_for("two_graph", 1).perron
    bound, c = vd_constant_dw(perron, 0.5)
    R = -0.5 * math.log(2) / math.log(4) - 2
    assert c["R"] == pytest.approx(R)
    assert bound == pytest.approx(4 ** (-R))


@pytest.mark.parametrize("name", ["skew_two_graph", "two_graph", "triadic"])
def test_vd_within_bound(name):
    for delta in (0.3, 0.7):
        rep = vd_audit_dw(tree_for(name, 5), WeightParams(delta))
        assert rep.pass_, rep.to_dict()


@pytest.mark.parametrize("name", sorted(GRAPHS))
def test_diameter_equals_weight(name):
    assert diam_check(tree_for(name, 5), WeightParams(0.5)) == []
