"""Spin partitions agreeing with a pair map, and the Bernoulli families they carry.

A partition {X_i} of the spins induces the pair blocks
S_ij = (X_i x X_j) u (X_j x X_i).  It agrees with F when every cycle of F
lies inside one S_ij; the finest agreeing partitions parametrize the
general-situation invariant Bernoulli measures.
"""

from __future__ import annotations

import itertools
import random
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .cycles import (
    AdmissibleSet,
    Cycle,
    classify_points,
    closure,
    connected_components,
    decompose_cycles,
    mirror_representatives,
    symmetrize_cycle,
)
from .model import ModelError, PairMap, SpinMeasure

DEFAULT_CAP_ASSIGNMENTS = 2**20
DEFAULT_CAP_KILL_SETS = 1024


class SearchCapExceeded(RuntimeError):
    """The orientation search visited more assignments than allowed."""


@dataclass(frozen=True)
class SpinPartition:
    """Partition of ``0..m-1``; blocks are numbered by first appearance."""

    block_of: tuple[int, ...]

    def __post_init__(self):
        relabel: dict[int, int] = {}
        canon = tuple(relabel.setdefault(b, len(relabel)) for b in self.block_of)
        object.__setattr__(self, "block_of", canon)

    @classmethod
    def from_blocks(cls, blocks: Iterable[Iterable[int]], m: int | None = None) -> "SpinPartition":
        blocks = [sorted(b) for b in blocks]
        m = m if m is not None else sum(len(b) for b in blocks)
        block_of = [-1] * m
        for k, block in enumerate(blocks):
            for x in block:
                if block_of[x] != -1:
                    raise ValueError(f"spin {x} appears in two blocks")
                block_of[x] = k
        if -1 in block_of:
            raise ValueError(f"spin {block_of.index(-1)} is in no block")
        return cls(tuple(block_of))

    @classmethod
    def singletons(cls, m: int) -> "SpinPartition":
        return cls(tuple(range(m)))

    @property
    def m(self) -> int:
        return len(self.block_of)

    @property
    def block_count(self) -> int:
        return max(self.block_of) + 1 if self.block_of else 0

    @property
    def blocks(self) -> list[tuple[int, ...]]:
        out: list[list[int]] = [[] for _ in range(self.block_count)]
        for x, b in enumerate(self.block_of):
            out[b].append(x)
        return [tuple(b) for b in out]

    def refines(self, other: "SpinPartition") -> bool:
        """True when every block of ``self`` sits inside a block of ``other``."""
        image: dict[int, int] = {}
        for mine, theirs in zip(self.block_of, other.block_of):
            if image.setdefault(mine, theirs) != theirs:
                return False
        return True

    def pair_block(self, a: int, b: int) -> tuple[int, int]:
        i, j = self.block_of[a], self.block_of[b]
        return (i, j) if i <= j else (j, i)

    def agrees_with(self, cycles: Iterable[Cycle]) -> bool:
        for c in cycles:
            keys = {self.pair_block(a, b) for a, b in c.states}
            if len(keys) > 1:
                return False
        return True


def _merge(labels: list[int], x: int, y: int) -> list[int]:
    lx, ly = labels[x], labels[y]
    if lx == ly:
        return labels
    keep, drop = min(lx, ly), max(lx, ly)
    return [keep if lab == drop else lab for lab in labels]


def _merge_all(labels: list[int], spins: Iterable[int]) -> list[int]:
    spins = list(spins)
    for y in spins[1:]:
        labels = _merge(labels, spins[0], y)
    return labels


def _merge_sides(labels: list[int], A: AdmissibleSet) -> list[int]:
    labels = _merge_all(labels, sorted(A.left))
    labels = _merge_all(labels, sorted(A.right))
    if A.diagonal:
        labels = _merge_all(labels, sorted(A.left | A.right))
    return labels


def _coarser_or_equal(labels: list[int], found: SpinPartition) -> bool:
    """True when ``found`` refines the partition encoded by ``labels``."""
    return found.refines(SpinPartition(tuple(labels)))


def _cycle_groups(F: PairMap, oriented: bool) -> list[frozenset]:
    if not F.is_bijective:
        raise ModelError("pair map is not one-to-one; reduce it first")
    cycles = decompose_cycles(F)
    if oriented and not F.is_symmetric:
        return [c.support for c in cycles]
    if not F.is_symmetric:
        raise ModelError("pair map is not symmetric (F j != j F)")
    return [symmetrize_cycle(c, cycles) for c in mirror_representatives(cycles)]


def _forced_closure(states: frozenset) -> AdmissibleSet | None:
    """Admissible set a cycle group is forced into, or None if it has an orientation choice."""
    comps = connected_components(states)
    if len(comps) == 1:
        return closure(states)
    closures = [closure(c) for c in comps]
    if any(A.diagonal for A in closures):
        return AdmissibleSet.diag({x for s in states for x in s})
    return None


def _admissible_overlap(A: AdmissibleSet, B: AdmissibleSet) -> bool:
    return bool((A.left & B.left and A.right & B.right) or (A.left & B.right and A.right & B.left))


def minimal_partition_connected(F: PairMap, order_seed: int | None = None, oriented: bool = False) -> SpinPartition:
    """Finest partition agreeing with F when no cycle leaves an orientation choice.

    Each symmetrized cycle is replaced by its closure; overlapping closures
    are repeatedly fused into the closure of their union until the covering
    is disjoint, and the sides of the surviving admissible sets give the
    blocks.  ``order_seed`` picks overlapping pairs at random instead of
    first-found; the result does not depend on it.
    """
    groups = _cycle_groups(F, oriented)
    covering = []
    for g in groups:
        A = _forced_closure(g)
        if A is None:
            first = min(g)
            raise ModelError(f"cycle through {tuple(first)} is disconnected; use enumerate_families_general")
        covering.append(A)
    rng = random.Random(order_seed) if order_seed is not None else None
    if rng is not None:
        rng.shuffle(covering)
    while True:
        pairs = [
            (i, j)
            for i in range(len(covering))
            for j in range(i + 1, len(covering))
            if _admissible_overlap(covering[i], covering[j])
        ]
        if not pairs:
            break
        i, j = rng.choice(pairs) if rng is not None else pairs[0]
        fused = closure(covering[i].states() | covering[j].states())
        covering = [A for k, A in enumerate(covering) if k not in (i, j)] + [fused]
    labels = list(range(F.m))
    for A in covering:
        labels = _merge_sides(labels, A)
    return SpinPartition(tuple(labels))


def enumerate_families_general(
    F: PairMap, cap: int = DEFAULT_CAP_ASSIGNMENTS, oriented: bool = False
) -> list[SpinPartition]:
    """All finest partitions agreeing with a one-to-one F.

    Cycles whose closures are disconnected leave a choice of orientation for
    each component relative to the first one; the choices are explored by
    backtracking, merging spins as they are forced, and non-minimal results
    are dropped.
    """
    groups = _cycle_groups(F, oriented)
    labels = list(range(F.m))
    choices: list[list[AdmissibleSet]] = []
    for g in groups:
        forced = _forced_closure(g)
        if forced is not None:
            labels = _merge_sides(labels, forced)
            continue
        closures = [closure(c) for c in connected_components(g)]
        for A in closures:
            labels = _merge_sides(labels, A)
        choices.append(closures)

    # (reference side pair, component side pair) per branching point
    steps = []
    for closures in choices:
        ref = closures[0]
        r_left, r_right = min(ref.left), min(ref.right)
        for A in closures[1:]:
            steps.append((r_left, r_right, min(A.left), min(A.right)))

    found: list[SpinPartition] = []
    visited = 0

    def record(lab: list[int]):
        P = SpinPartition(tuple(lab))
        if any(Q.refines(P) for Q in found):
            return
        found[:] = [Q for Q in found if not P.refines(Q)]
        found.append(P)

    def search(k: int, lab: list[int]):
        nonlocal visited
        visited += 1
        if visited > cap:
            raise SearchCapExceeded(f"orientation search exceeded {cap} assignments")
        if any(_coarser_or_equal(lab, Q) for Q in found):
            return
        while k < len(steps):
            r0, r1, x, y = steps[k]
            if lab[r0] == lab[r1]:
                lab = _merge_all(lab, [r0, x, y])
            elif lab[x] == lab[r0] and lab[y] == lab[r1]:
                pass
            elif lab[x] == lab[r1] and lab[y] == lab[r0]:
                pass
            else:
                break
            k += 1
        if k == len(steps):
            record(lab)
            return
        r0, r1, x, y = steps[k]
        search(k + 1, _merge(_merge(lab, x, r0), y, r1))
        search(k + 1, _merge(_merge(lab, x, r1), y, r0))

    search(0, labels)
    return sorted(found, key=lambda P: P.block_of)


# -- maps that are not one-to-one -------------------------------------------

def _killed(s, X0: frozenset) -> bool:
    return s[0] in X0 or s[1] in X0


def reduce_non_bijective(F: PairMap, X0: Iterable[int]) -> PairMap:
    """Restriction of F to the pairs avoiding ``X0``, relabelled to ``0..k-1``."""
    X0 = frozenset(X0)
    if len(X0) >= F.m:
        raise ModelError("kill set cannot contain every spin")
    cls = classify_points(F)
    for s in sorted(cls.inessential):
        if not _killed(s, X0):
            raise ModelError(f"inessential point {tuple(s)} avoids the kill set")
    support = [x for x in range(F.m) if x not in X0]
    reduced = F.restrict(support)
    if not reduced.is_bijective:
        raise ModelError("restricted map is not one-to-one")
    return reduced


@dataclass(frozen=True)
class KillSets:
    sets: tuple[frozenset[int], ...]
    truncated: bool


def _minimal_subsets(m: int, ok, cap: int) -> KillSets:
    found: list[frozenset[int]] = []
    for size in range(m):
        for combo in itertools.combinations(range(m), size):
            X0 = frozenset(combo)
            if any(f <= X0 for f in found):
                continue
            if ok(X0):
                found.append(X0)
                if len(found) >= cap:
                    return KillSets(tuple(found), True)
    return KillSets(tuple(found), False)


def candidate_kill_sets(F: PairMap, cap: int = DEFAULT_CAP_KILL_SETS) -> KillSets:
    """Inclusion-minimal spin sets touching every inessential point of F."""
    if F.is_bijective:
        return KillSets((), False)
    inessential = classify_points(F).inessential
    return _minimal_subsets(F.m, lambda X0: all(_killed(s, X0) for s in inessential), cap)


def admissible_kill_sets(F: PairMap, cap: int = DEFAULT_CAP_KILL_SETS) -> KillSets:
    """Minimal kill sets whose complement is closed under F.

    Besides touching every inessential point, each cycle must either avoid
    the kill set entirely or lie wholly in the killed pairs; a cycle split
    between the two cannot carry a constant positive pair measure.
    """
    if F.is_bijective:
        return KillSets((frozenset(),), False)
    cls = classify_points(F)

    def ok(X0):
        if not all(_killed(s, X0) for s in cls.inessential):
            return False
        for c in cls.cycles:
            hit = [_killed(s, X0) for s in c.states]
            if any(hit) and not all(hit):
                return False
        return True

    return _minimal_subsets(F.m, ok, cap)


# -- families ---------------------------------------------------------------

@dataclass(frozen=True)
class IbmFamily:
    """Bernoulli measures constant on the blocks of ``partition``, zero on ``kill_set``.

    ``partition`` indexes positions in ``support``; a member measure takes
    value a_i on every spin of block i with sum_i a_i |X_i| = 1.
    """

    partition: SpinPartition
    support: tuple[int, ...]
    kill_set: frozenset[int] = field(default_factory=frozenset)

    @property
    def m(self) -> int:
        return len(self.support) + len(self.kill_set)

    @property
    def dimension(self) -> int:
        return self.partition.block_count - 1

    @property
    def blocks(self) -> list[tuple[int, ...]]:
        """Blocks in original spin indices."""
        return [tuple(self.support[i] for i in block) for block in self.partition.blocks]

    def measure(self, values: Sequence[float]) -> SpinMeasure:
        """Member of the family taking ``values[i]`` on block i."""
        if len(values) != self.partition.block_count:
            raise ValueError(f"need {self.partition.block_count} block values, got {len(values)}")
        probs = np.zeros(self.m)
        for i, x in enumerate(self.support):
            probs[x] = values[self.partition.block_of[i]]
        return SpinMeasure(probs)


def family_from_partition(P: SpinPartition, support: Sequence[int] | None = None, kill_set: Iterable[int] = ()) -> IbmFamily:
    support = tuple(range(P.m)) if support is None else tuple(support)
    if len(support) != P.m:
        raise ValueError("support length must match the partition")
    return IbmFamily(P, support, frozenset(kill_set))


def is_general_situation(values: Sequence[float], rel_gap: float = 1e-6) -> bool:
    """Distinct values with pairwise-distinct products (squares included)."""
    values = [float(v) for v in values]

    def separated(xs):
        xs = sorted(xs)
        return all(b - a > rel_gap * max(abs(a), abs(b)) for a, b in zip(xs, xs[1:]))

    products = [values[i] * values[j] for i in range(len(values)) for j in range(i, len(values))]
    return separated(values) and separated(products)


def sample_generic_measure(fam: IbmFamily, seed=None, max_tries: int = 1000) -> SpinMeasure:
    """Random general-situation member of a family; deterministic for a given seed."""
    rng = np.random.default_rng(seed)
    sizes = np.array([len(b) for b in fam.partition.blocks], dtype=float)
    for _ in range(max_tries):
        masses = rng.dirichlet(np.ones(sizes.size))
        values = masses / sizes
        if np.all(values > 0) and is_general_situation(values):
            return fam.measure(values)
    raise RuntimeError(f"no general-situation sample after {max_tries} draws")


@dataclass(frozen=True)
class FamilyEnumeration:
    families: tuple[IbmFamily, ...]
    truncated: bool = False


def enumerate_families(
    F: PairMap,
    cap_assignments: int = DEFAULT_CAP_ASSIGNMENTS,
    cap_kill_sets: int = DEFAULT_CAP_KILL_SETS,
    oriented: bool = False,
) -> FamilyEnumeration:
    """All invariant Bernoulli families of F, reducing non-bijective maps first."""
    kill = admissible_kill_sets(F, cap_kill_sets)
    seen = set()
    families = []
    for X0 in kill.sets:
        support = tuple(x for x in range(F.m) if x not in X0)
        reduced = F if not X0 else reduce_non_bijective(F, X0)
        for P in enumerate_families_general(reduced, cap=cap_assignments, oriented=oriented):
            key = (X0, P)
            if key in seen:
                continue
            seen.add(key)
            families.append(IbmFamily(P, support, X0))
    return FamilyEnumeration(tuple(families), kill.truncated)
