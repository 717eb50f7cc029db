from fractions import Fraction
from itertools import combinations, product

import numpy as np
import pytest
from hypothesis import given, strategies as st

from sharedcache import ecc
from sharedcache.delivery import decode_all, deliver_distinct
from sharedcache.errors import (DimensionMismatch, TooManyErrors, UncorrectableSyndrome,
                                UnknownCodeParameters)


def min_distance_oracle(G: np.ndarray) -> int:
    """Minimum pairwise Hamming distance over all distinct codewords."""
    k = G.shape[0]
    words = [tuple(np.array(m) @ G % 2) for m in product((0, 1), repeat=k)]
    return min(sum(a != b for a, b in zip(u, v)) for u, v in combinations(words, 2))


def test_shipped_code_parameters():
    code = ecc.hamming_11_7_3()
    assert (code.n, code.k, code.d) == (11, 7, 3)
    assert min_distance_oracle(code.G) == 3
    assert not ecc.gf2.matmul(code.G, code.H.T).any()
    assert code.table_size == 12          # zero syndrome plus 11 single errors


def test_shortened_hamming_matches_shipped_matrix():
    assert np.array_equal(ecc.shortened_hamming(7).G, ecc.hamming_11_7_3().G)


@pytest.mark.parametrize("k", range(1, 12))
def test_shortened_hamming_family(k):
    code = ecc.shortened_hamming(k)
    assert code.d == 3 == min_distance_oracle(code.G)
    assert code.n == ecc.lookup_optimal_length(k, 3)


@pytest.mark.parametrize("k,d,n", [(7, 3, 11), (5, 1, 5), (1, 3, 3), (1, 5, 5), (4, 3, 7),
                                   (4, 2, 5)])
def test_lookup(k, d, n):
    assert ecc.lookup_optimal_length(k, d) == n


def test_lookup_flags_and_unknown():
    assert ecc.lookup_entry(7, 3)[1] == ecc.TABLE
    assert ecc.lookup_entry(4, 3)[1] == ecc.CONSTRUCTIVE
    with pytest.raises(UnknownCodeParameters):
        ecc.lookup_optimal_length(7, 5)


def test_concatenated_times(ex1):
    _, pl, a = ex1
    log = deliver_distinct(pl, a, (1, 2, 3, 4))
    run = ecc.encode_concatenated(log, ecc.hamming_11_7_3(), 1)
    assert run.coded_time == Fraction(11, 4) and run.padding == 0
    assert ecc.encode_concatenated(log, ecc.identity_code(7), 0).coded_time == Fraction(7, 4)
    rep = ecc.encode_concatenated(log, ecc.repetition_code(3), 1)
    assert rep.coded_time == Fraction(21, 4) == ecc.repetition_per_bit_time(log, 1)
    assert rep.coded_time > run.coded_time


def test_padding_is_reported(ex1):
    _, pl, a = ex1
    log = deliver_distinct(pl, a, (1, 2, 3, 4))
    run = ecc.encode_concatenated(log, ecc.shortened_hamming(8), 1)
    assert run.padding == 1 and run.padding_time == Fraction(1, 4)
    assert np.array_equal(ecc.syndrome_decode(run), run.plaintext)
    with pytest.raises(DimensionMismatch):
        ecc.encode_concatenated(log, ecc.shortened_hamming(4), 1, single_block=True)
    with pytest.raises(DimensionMismatch):
        ecc.encode_concatenated(log, ecc.identity_code(7), 1)


def test_inject_errors(ex1):
    _, pl, a = ex1
    run = ecc.encode_concatenated(deliver_distinct(pl, a, (1, 2, 3, 4)),
                                  ecc.hamming_11_7_3(), 1)
    assert np.array_equal(ecc.inject_errors(run, []).received, run.codeword)
    one = ecc.inject_errors(run, [4])
    assert int((one.received ^ one.codeword).sum()) == 1
    with pytest.raises(TooManyErrors):
        ecc.inject_errors(run, [1, 2])


@pytest.mark.parametrize("pos", range(11))
def test_single_errors_still_decode_every_user(ex1, pos):
    _, pl, a = ex1
    log = deliver_distinct(pl, a, (1, 2, 3, 4))
    _, restored = ecc.ecc_roundtrip(log, ecc.hamming_11_7_3(), 1, [pos])
    assert all(decode_all(a, pl, restored).values())


def test_exhaustive_single_error_sweep():
    code = ecc.hamming_11_7_3()
    for msg in product((0, 1), repeat=7):
        c = code.encode(msg)
        assert np.array_equal(code.decode(c), msg)
        for pos in range(11):
            r = c.copy()
            r[pos] ^= 1
            assert np.array_equal(code.decode(r), msg)


def test_double_error_is_uncorrectable_or_wrong():
    code = ecc.hamming_11_7_3()
    c = code.encode([1, 0, 1, 1, 0, 0, 1])
    r = c.copy()
    r[[0, 1]] ^= 1
    try:
        decoded = code.decode(r)
    except UncorrectableSyndrome:
        return
    assert not np.array_equal(decoded, [1, 0, 1, 1, 0, 0, 1])


def test_matrix_format_round_trip(tmp_path):
    G = ecc.hamming_11_7_3().G
    text = ecc.format_matrix(G, "test")
    assert np.array_equal(ecc.parse_matrix(text), G)
    with pytest.raises(ValueError):
        ecc.parse_matrix("0102\n")


@given(st.integers(1, 6), st.integers(1, 3), st.data())
def test_decode_inverts_bounded_errors(k, delta, data):
    try:
        code = ecc.code_for(k, delta)
    except UnknownCodeParameters:
        code = ecc.repetition_code(2 * delta + 1) if k == 1 else None
    if code is None:
        return
    msg = data.draw(st.lists(st.integers(0, 1), min_size=k, max_size=k))
    w = data.draw(st.integers(0, code.t))
    pos = data.draw(st.lists(st.integers(0, code.n - 1), min_size=w, max_size=w, unique=True))
    r = code.encode(msg)
    r[pos] ^= 1
    assert code.decode(r).tolist() == msg
