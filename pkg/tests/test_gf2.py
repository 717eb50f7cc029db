import numpy as np
from hypothesis import given, strategies as st

from oracles import rank_by_span
from sharedcache import gf2

matrices = st.integers(1, 6).flatmap(
    lambda r: st.integers(1, 7).flatmap(
        lambda c: st.lists(st.lists(st.integers(0, 1), min_size=c, max_size=c),
                           min_size=r, max_size=r)))


@given(matrices)
def test_rank_matches_span_enumeration(rows):
    expected = rank_by_span(rows)
    assert gf2.rank(rows) == expected
    assert gf2.rank_rows([gf2.pack_row(r) for r in rows]) == expected


@given(matrices)
def test_nullspace_is_orthogonal_and_complete(rows):
    a = np.array(rows, dtype=np.uint8)
    ns = gf2.nullspace(a)
    assert ns.shape[0] == a.shape[1] - gf2.rank(a)
    if ns.size:
        assert not gf2.matmul(a, ns.T).any()
        assert gf2.rank(ns) == ns.shape[0]


@given(matrices)
def test_rref_is_reduced(rows):
    r, pivots = gf2.rref(rows)
    for i, p in enumerate(pivots):
        assert r[i, p] == 1
        assert r[:, p].sum() == 1
    assert not r[len(pivots):].any()


def test_inverse_round_trip():
    rng = np.random.default_rng(0)
    found = 0
    while found < 20:
        a = rng.integers(0, 2, size=(5, 5))
        if gf2.rank(a) < 5:
            continue
        found += 1
        assert np.array_equal(gf2.matmul(a, gf2.inverse(a)), np.eye(5, dtype=np.uint8))


def test_inverse_of_singular_matrix_raises():
    import pytest
    with pytest.raises(np.linalg.LinAlgError):
        gf2.inverse([[1, 1], [1, 1]])


@given(matrices, st.integers(0, 6))
def test_solve_unit_agrees_with_span_membership(rows, col):
    width = len(rows[0])
    col = col % width
    packed = [gf2.pack_row(r) for r in rows]
    target = [1 if i == col else 0 for i in range(width)]
    in_span = rank_by_span(rows + [target]) == rank_by_span(rows)
    combo = gf2.solve_unit(packed, col)
    assert (combo is not None) == in_span
    if combo is not None:
        acc = 0
        for i, row in enumerate(packed):
            if combo >> i & 1:
                acc ^= row
        assert acc == 1 << col


def test_pack_unpack_round_trip():
    bits = [1, 0, 1, 1, 0, 0, 1]
    assert gf2.unpack_row(gf2.pack_row(bits), len(bits)).tolist() == bits
