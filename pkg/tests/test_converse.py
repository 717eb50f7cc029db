from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from oracles import mais_exhaustive, minrank_exhaustive, random_groups
from sharedcache import converse, online
from sharedcache.association import Association
from sharedcache.converse import (IndexCodingInstance, Message, Receiver, alpha_bruteforce,
                                  build_instance, certify_optimality, construct_H,
                                  dump_instance, is_acyclic, minrank_bruteforce)
from sharedcache.delivery import deliver_distinct
from sharedcache.errors import NonDistinctDemand, TooLarge
from sharedcache.placement import SystemParams, place_exact


def synthetic(side: list[set[int]]) -> IndexCodingInstance:
    msgs = tuple(Message(i, (), 0) for i in range(len(side)))
    recv = tuple(Receiver(i + 1, 1, i, frozenset(s)) for i, s in enumerate(side))
    return IndexCodingInstance(msgs, recv, len(side))


def _subfiles(instance, members):
    return {(instance.messages[m].file, instance.messages[m].label) for m in members}


def test_first_example_instance(ex1):
    _, pl, a = ex1
    inst = build_instance(pl, a, (1, 2, 3, 4))
    # 8 wanted subfiles of one bit each
    assert inst.num_messages == 8 == inst.requested_subfiles
    H = construct_H(inst, a, (1, 2, 3, 4))
    assert _subfiles(inst, H.members) == {(1, (2,)), (1, ()), (2, (2,)), (2, ()), (3, (2,)),
                                          (3, ()), (4, ())}
    assert Fraction(H.size, 4) == Fraction(7, 4)


def test_first_example_certificate(ex1):
    _, pl, a = ex1
    log = deliver_distinct(pl, a, (1, 2, 3, 4))
    v = certify_optimality(pl, a, (1, 2, 3, 4), log)
    assert v.status == "OPTIMAL"
    assert v.h_bits == v.alpha == v.kappa == log.total_bits == 7


def _second_example_slot2(ex2_params):
    s = online.initial_state(ex2_params, [1, 2, 3, 4, 5], [2, 3, 4, 5], order=[1, 2, 3, 4, 5])
    a = Association.from_profile((3, 1))
    s, _ = online.run_slot(s, a, [], (2, 3, 4, 5))
    s, _ = online.evolve_popular(s, [(6, 5)])
    d = online.lrs_deliver(s, a, (6, 2, 3, 4))
    return s, a, d


def test_second_example_instance_and_H(ex2_params):
    s, a, d = _second_example_slot2(ex2_params)
    demand = (6, 2, 3, 4)
    inst = build_instance(s.placement, a, demand, d.uncached)
    assert inst.requested_subfiles == (4 - 1) * 2 + 1
    assert inst.num_messages == 3 * (9 + 6) + 25
    H = construct_H(inst, a, demand, d.uncached)
    assert _subfiles(inst, H.members) == {(2, (2,)), (2, ()), (3, (2,)), (3, ()), (4, ()),
                                          (6, None)}
    assert Fraction(H.size, 25) == Fraction(64, 25)


def test_second_example_certificate_uses_reduced_instance(ex2_params):
    s, a, d = _second_example_slot2(ex2_params)
    v = certify_optimality(s.placement, a, (6, 2, 3, 4), d.log)
    assert v.status == "OPTIMAL"
    assert v.alpha is None and v.reduced is not None
    assert v.reduced["h"] == v.reduced["alpha"] == v.reduced["kappa"] == v.reduced["scheme"]
    assert v.h_bits == 64


def test_single_user_instance():
    p = SystemParams(2, 1, 1, 1, 4)
    pl = place_exact(p)
    inst = build_instance(pl, Association(((1,),)), (1,))
    assert inst.num_messages == 2
    assert all(r.side_info == frozenset() for r in inst.receivers)


def test_full_memory_has_empty_H():
    p = SystemParams(4, 4, 2, 4, 4)
    pl = place_exact(p)
    a = Association.from_profile((3, 1))
    inst = build_instance(pl, a, (1, 2, 3, 4))
    assert construct_H(inst, a, (1, 2, 3, 4)).size == 0


def test_nondistinct_rejected(ex1):
    _, pl, a = ex1
    with pytest.raises(NonDistinctDemand):
        build_instance(pl, a, (1, 1, 2, 3))


def test_small_cases():
    assert alpha_bruteforce(synthetic([set(), set(), set()])) == 3
    assert minrank_bruteforce(synthetic([set(), set(), set()])) == 3
    pair = synthetic([{1}, {0}])
    assert alpha_bruteforce(pair) == 1
    assert minrank_bruteforce(pair) == 1


def test_budgets():
    big = synthetic([set() for _ in range(30)])
    with pytest.raises(TooLarge):
        alpha_bruteforce(big)
    dense = synthetic([set(range(6)) - {i} for i in range(6)])
    with pytest.raises(TooLarge):
        minrank_bruteforce(dense, budget=1 << 20)


def test_acyclicity_check():
    inst = synthetic([{1}, {2}, {0}])
    assert not is_acyclic(inst, {0, 1, 2})
    assert is_acyclic(inst, {0, 1})


def test_dump_format(ex1):
    _, pl, a = ex1
    text = dump_instance(build_instance(pl, a, (1, 2, 3, 4)))
    lines = text.splitlines()
    assert lines[0].startswith("#")
    assert len(lines) == 9
    assert lines[1].startswith("0 W1_{}[")


side_info = st.integers(1, 7).flatmap(lambda n: st.lists(
    st.sets(st.integers(0, n - 1), max_size=3), min_size=n, max_size=n))


@given(side_info)
def test_alpha_matches_exhaustive_mais(side):
    side = [s - {i} for i, s in enumerate(side)]
    edges = [(i, j) for i, s in enumerate(side) for j in s]
    assert alpha_bruteforce(synthetic(side)) == mais_exhaustive(len(side), edges)


@given(side_info)
def test_minrank_matches_enumeration_and_bounds_alpha(side):
    side = [s - {i} for i, s in enumerate(side)]
    if sum(len(s) for s in side) > 10:
        return
    inst = synthetic(side)
    kappa = minrank_bruteforce(inst)
    assert kappa == minrank_exhaustive(list(range(len(side))), side, len(side))
    assert alpha_bruteforce(inst) <= kappa


@pytest.mark.parametrize("seed", range(25))
def test_random_small_instances_are_optimal(seed):
    rng = np.random.default_rng(seed)
    lam = int(rng.integers(1, 3))
    K = int(rng.integers(lam, 4))
    N = K + int(rng.integers(0, 2))
    M = int(rng.integers(1, N + 1))
    p = SystemParams(N, K, lam, M, N ** lam)
    pl = place_exact(p)
    a = Association(random_groups(rng, K, lam))
    d = tuple(int(x) for x in rng.permutation(N)[:K] + 1)
    log = deliver_distinct(pl, a, d)
    v = certify_optimality(pl, a, d, log)
    assert v.status == "OPTIMAL", v.summary()
    assert v.h_bits == log.total_bits
