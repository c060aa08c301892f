import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kbratteli import (
    DimensionMismatch,
    KGraphSpec,
    NotCommuting,
    NotIrreducible,
    SpectralRadiusAtMostOne,
    perron_data,
    validate,
)
from kbratteli.kgraph import commutes, is_irreducible


def test_dyadic_valid():
    vk = validate([[[2]]])
    assert vk.perron.rho == (2.0,)
    assert vk.perron.kappa.tolist() == [1.0]


def test_two_graph_valid():
    vk = validate([[[1, 1], [1, 1]], [[1, 1], [1, 1]]])
    assert vk.perron.rho == pytest.approx((2.0, 2.0), rel=1e-14)
    np.testing.assert_allclose(vk.perron.kappa, [0.5, 0.5], rtol=1e-14)
    assert vk.perron.rho_product == pytest.approx(4.0)


def test_not_commuting():
    with pytest.raises(NotCommuting) as exc:
        validate([[[1, 1], [1, 1]], [[1, 0], [0, 2]]])
    assert (exc.value.i, exc.value.j) == (1, 2)
    assert exc.value.to_dict()["reason"] == "NotCommuting"


def test_radius_at_most_one():
    with pytest.raises(SpectralRadiusAtMostOne) as exc:
        validate([[[1]]])
    assert exc.value.i == 1


def test_not_irreducible():
    with pytest.raises(NotIrreducible):
        validate([[[2, 1], [0, 2]]])


@pytest.mark.parametrize("mats", [
    [[[1, 2]]],
    [[[2]], [[1, 1], [1, 1]]],
])
def test_dimension_mismatch(mats):
    with pytest.raises(DimensionMismatch):
        validate(mats)


@pytest.mark.parametrize("mats", [[[[-1, 2], [2, 1]]], [[[1.5, 2], [2, 1]]]])
def test_rejects_non_integer_or_negative(mats):
    with pytest.raises(ValueError):
        KGraphSpec(mats)


def test_flip_kappa():
    vk = validate([[[0, 2], [2, 0]]])
    assert vk.perron.rho[0] == pytest.approx(2.0, rel=1e-14)
    np.testing.assert_allclose(vk.perron.kappa, [0.5, 0.5], rtol=1e-14)


def test_skew_kappa_exact():
    # hand oracle: A_1 kappa = 3 kappa forces kappa_0 = 2 kappa_1
    vk = validate([[[2, 2], [1, 1]], [[3, 2], [1, 2]]])
    assert vk.perron.rho == pytest.approx((3.0, 4.0), rel=1e-13)
    np.testing.assert_allclose(vk.perron.kappa, [2 / 3, 1 / 3], rtol=1e-13)


def test_perron_data_deterministic():
    mats = [[[2, 2], [1, 1]], [[3, 2], [1, 2]]]
    a, b = perron_data(validate(mats)), perron_data(validate(mats))
    assert a.rho == b.rho
    assert a.kappa.tobytes() == b.kappa.tobytes()


def test_commutation_is_exact_for_large_entries():
    big = 2**62
    a = np.array([[big, 1], [1, big]], dtype=np.int64)
    b = np.array([[big, 0], [0, big + 1]], dtype=np.int64)
    # int64 products overflow; the object-dtype check must not be fooled
    assert not commutes(a, b)
    assert commutes(a, a)


def test_irreducible_union_digraph():
    # neither matrix alone is irreducible, the family is
    a = np.array([[1, 1], [0, 1]])
    b = np.array([[1, 0], [1, 1]])
    assert is_irreducible([a, b])
    assert not is_irreducible([a])


@st.composite
def commuting_family(draw):
    n = draw(st.integers(1, 3))
    lo = 2 if n == 1 else 1     # positive entries, row sums >= 2 so rho > 1
    base = np.array(draw(st.lists(st.lists(st.integers(lo, 3), min_size=n, max_size=n),
                                  min_size=n, max_size=n)), dtype=np.int64)
    a0 = draw(st.integers(0, 2))
    a1 = draw(st.integers(1, 2))
    second = a0 * np.eye(n, dtype=np.int64) + a1 * base
    return [base.tolist(), second.tolist()]


@settings(max_examples=40, deadline=None)
@given(commuting_family())
def test_perron_invariants_property(mats):
    vk = validate(mats)
    kappa = vk.perron.kappa
    assert abs(kappa.sum() - 1.0) <= 1e-12
    assert np.all(kappa > 0)
    for a, r in zip(vk.matrices, vk.perron.rho):
        assert r > 1
        assert np.max(np.abs(a @ kappa - r * kappa)) <= 1e-10 * r
