import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from exchange_ibm.cycles import (
    AdmissibleSet,
    Cycle,
    classify_points,
    closure,
    connected_components,
    decompose_cycles,
    is_connected,
    symmetrize_cycle,
)
from exchange_ibm.model import ModelError, PairMap, PairState, random_symmetric_bijection

S = PairState


def test_identity_has_only_fixed_points():
    cycles = decompose_cycles(PairMap.identity(3))
    assert len(cycles) == 9
    assert all(len(c) == 1 for c in cycles)


def test_kawasaki_cycles():
    cycles = decompose_cycles(PairMap.swap(2))
    assert [c.states for c in cycles] == [(S(0, 0),), (S(0, 1), S(1, 0)), (S(1, 1),)]


def test_two_pair_cycles(two_pair):
    cycles = decompose_cycles(two_pair)
    long = [c.states for c in cycles if len(c) > 1]
    assert long == [(S(0, 1), S(2, 3)), (S(1, 0), S(3, 2))]
    assert sum(len(c) == 1 for c in cycles) == 12


def test_decompose_rejects_non_bijective():
    with pytest.raises(ModelError):
        decompose_cycles(PairMap(2, [0, 0, 0, 0]))


def test_classify_constant_map():
    cls = classify_points(PairMap(2, [0, 0, 0, 0]))
    assert [c.states for c in cls.cycles] == [(S(0, 0),)]
    assert cls.inessential == {S(0, 1), S(1, 0), S(1, 1)}


def test_classify_clamp_map():
    F = PairMap.from_function(3, lambda a, b: (min(a, 1), min(b, 1)))
    cls = classify_points(F)
    cyclic = {s for c in cls.cycles for s in c.states}
    assert cyclic == {S(a, b) for a in (0, 1) for b in (0, 1)}
    assert len(cls.inessential) == 5
    assert all(2 in s for s in cls.inessential)


def test_classify_bijective_matches_decompose(two_pair):
    cls = classify_points(two_pair)
    assert not cls.inessential
    assert list(cls.cycles) == decompose_cycles(two_pair)


@pytest.mark.parametrize(
    "states, count",
    [
        ([S(0, 1), S(1, 2)], 1),
        ([S(0, 1), S(2, 3)], 2),
        ([], 0),
        ([S(0, 0), S(0, 3), S(3, 3)], 1),
    ],
)
def test_connected_components(states, count):
    comps = connected_components(states)
    assert len(comps) == count
    assert set().union(*comps) == set(states) if comps else not states


def test_closure_examples():
    assert closure([S(0, 1)]) == AdmissibleSet(frozenset({0}), frozenset({1}), False)
    assert closure([S(2, 2)]) == AdmissibleSet.diag({2})
    assert closure([S(0, 1), S(1, 0)]) == AdmissibleSet(frozenset({0}), frozenset({1}), False)
    # odd chain 0-1-2-0 forces a spin onto both sides
    assert closure([S(0, 1), S(1, 2), S(2, 0)]) == AdmissibleSet.diag({0, 1, 2})


def test_closure_rejects_bad_input():
    with pytest.raises(ValueError):
        closure([])
    with pytest.raises(ValueError):
        closure([S(0, 1), S(2, 3)])


def test_symmetrize_cycle(two_pair):
    cycles = decompose_cycles(two_pair)
    c1 = next(c for c in cycles if c.states[0] == S(0, 1))
    assert symmetrize_cycle(c1, cycles) == {S(0, 1), S(2, 3), S(1, 0), S(3, 2)}
    kaw = decompose_cycles(PairMap.swap(2))
    assert symmetrize_cycle(kaw[1], kaw) == {S(0, 1), S(1, 0)}
    assert symmetrize_cycle(kaw[0], kaw) == {S(0, 0)}


def test_symmetrize_detects_non_symmetric_map():
    images = list(range(9))
    images[0 * 3 + 1], images[1 * 3 + 2] = 1 * 3 + 2, 0 * 3 + 1  # (0,1) <-> (1,2), mirrors fixed
    F = PairMap(3, images)
    cycles = decompose_cycles(F)
    with pytest.raises(RuntimeError):
        symmetrize_cycle(next(c for c in cycles if len(c) == 2), cycles)


def all_admissible(m):
    for labels in itertools.product((0, 1, 2), repeat=m):
        left = frozenset(x for x in range(m) if labels[x] == 1)
        right = frozenset(x for x in range(m) if labels[x] == 2)
        if left and right:
            yield AdmissibleSet(left, right, False)
    for r in range(1, m + 1):
        for spins in itertools.combinations(range(m), r):
            yield AdmissibleSet.diag(spins)


connected_sets = st.integers(2, 5).flatmap(
    lambda m: st.lists(st.tuples(st.integers(0, m - 1), st.integers(0, m - 1)), min_size=1, max_size=6).map(
        lambda pairs: (m, [S(a, b) for a, b in pairs])
    )
)


@settings(max_examples=150, deadline=None)
@given(connected_sets)
def test_closure_is_minimal_admissible_cover(data):
    m, states = data
    comp = connected_components(states)[0]
    A = closure(comp)
    assert comp <= A.states()
    covers = [B for B in all_admissible(m) if comp <= B.states()]
    assert covers
    assert all(A.states() <= B.states() for B in covers)


@settings(max_examples=100, deadline=None)
@given(connected_sets)
def test_closure_is_idempotent(data):
    _, states = data
    A = closure(connected_components(states)[0])
    assert closure(A.states()).canonical() == A.canonical()


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 5), st.integers(0, 2**32 - 1))
def test_cycles_partition_s(m, seed):
    F = random_symmetric_bijection(m, np.random.default_rng(seed))
    cycles = decompose_cycles(F)
    assert sum(len(c) for c in cycles) == m * m
    assert len({s for c in cycles for s in c.states}) == m * m
    for c in cycles:
        n = len(c)
        assert all(F(*c.states[i]) == c.states[(i + 1) % n] for i in range(n))
        assert c.states[0] == min(c.states)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 4), st.integers(0, 2**32 - 1))
def test_classify_matches_orbit_enumeration(m, seed):
    rng = np.random.default_rng(seed)
    F = PairMap(m, rng.integers(0, m * m, size=m * m))
    cls = classify_points(F)
    n = m * m
    for s in range(n):
        t, returns = s, False
        for _ in range(n):
            t = int(F.images[t])
            returns |= t == s
        assert (F.state(s) in cls.inessential) == (not returns)
    cyclic = [s for c in cls.cycles for s in c.states]
    assert len(cyclic) + len(cls.inessential) == n
    # every inessential point reaches a cycle within m^2 steps
    cyclic_set = set(cyclic)
    for s in cls.inessential:
        t = F.flat(s)
        for _ in range(n):
            t = int(F.images[t])
        assert F.state(t) in cyclic_set


def test_is_connected_matches_definition():
    assert is_connected([S(0, 1), S(1, 2), S(2, 3)])
    assert not is_connected(Cycle((S(0, 0), S(1, 1))).states)
