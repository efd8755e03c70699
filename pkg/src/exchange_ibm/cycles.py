"""Structure of a pair map on S: cycles, inessential points, connectivity, closures."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

from scipy.cluster.hierarchy import DisjointSet

from .model import ModelError, PairMap, PairState


@dataclass(frozen=True)
class Cycle:
    """States visited by F in order; ``F(states[i]) == states[i + 1]`` cyclically."""

    states: tuple[PairState, ...]

    def __len__(self):
        return len(self.states)

    def __iter__(self):
        return iter(self.states)

    @property
    def support(self) -> frozenset[PairState]:
        return frozenset(self.states)


@dataclass(frozen=True)
class CyclicClassification:
    cycles: tuple[Cycle, ...]
    inessential: frozenset[PairState]


@dataclass(frozen=True)
class AdmissibleSet:
    """The set (left x right) u (right x left); ``diagonal`` means left == right."""

    left: frozenset[int]
    right: frozenset[int]
    diagonal: bool

    def __post_init__(self):
        if self.diagonal and self.left != self.right:
            raise ValueError("diagonal admissible set needs left == right")
        if not self.diagonal and self.left & self.right:
            raise ValueError("off-diagonal admissible set needs disjoint sides")

    @classmethod
    def diag(cls, spins: Iterable[int]) -> "AdmissibleSet":
        spins = frozenset(spins)
        return cls(spins, spins, True)

    def states(self) -> frozenset[PairState]:
        out = {PairState(a, b) for a in self.left for b in self.right}
        out |= {PairState(b, a) for a in self.left for b in self.right}
        return frozenset(out)

    def __contains__(self, s) -> bool:
        a, b = s
        return (a in self.left and b in self.right) or (a in self.right and b in self.left)

    def canonical(self) -> "AdmissibleSet":
        """Orientation with the smallest spin on the left (sides are interchangeable)."""
        if self.diagonal or min(self.left) < min(self.right):
            return self
        return AdmissibleSet(self.right, self.left, False)

    def issubset(self, other: "AdmissibleSet") -> bool:
        return all(s in other for s in self.states())


def _canonical_cycle(states: list[int], m: int) -> Cycle:
    k = states.index(min(states))
    ordered = states[k:] + states[:k]
    return Cycle(tuple(PairState(s // m, s % m) for s in ordered))


def decompose_cycles(F: PairMap) -> list[Cycle]:
    """Cycles of a one-to-one F, scanning start states in row-major order."""
    if not F.is_bijective:
        raise ModelError("decompose_cycles needs a one-to-one map; use classify_points")
    images = F.images.tolist()
    seen = [False] * len(images)
    cycles = []
    for start in range(len(images)):
        if seen[start]:
            continue
        orbit = []
        s = start
        while not seen[s]:
            seen[s] = True
            orbit.append(s)
            s = images[s]
        cycles.append(_canonical_cycle(orbit, F.m))
    return cycles


def classify_points(F: PairMap) -> CyclicClassification:
    """Split S into the cycles of F and the inessential (never revisited) points."""
    images = F.images.tolist()
    n = len(images)
    state = [0] * n  # 0 unvisited, 1 on current walk, 2 done
    cyclic = [False] * n
    cycles = []
    for start in range(n):
        if state[start]:
            continue
        walk = []
        s = start
        while state[s] == 0:
            state[s] = 1
            walk.append(s)
            s = images[s]
        if state[s] == 1:
            orbit = walk[walk.index(s):]
            for t in orbit:
                cyclic[t] = True
            cycles.append(_canonical_cycle(orbit, F.m))
        for t in walk:
            state[t] = 2
    cycles.sort(key=lambda c: c.states[0])
    inessential = frozenset(F.state(s) for s in range(n) if not cyclic[s])
    return CyclicClassification(tuple(cycles), inessential)


def connected_components(states: Iterable[PairState]) -> list[frozenset[PairState]]:
    """Group states linked by chains of states sharing a spin value."""
    states = sorted(set(PairState(*s) for s in states))
    if not states:
        return []
    dsu = DisjointSet()
    for a, b in states:
        dsu.add(a)
        dsu.add(b)
        dsu.merge(a, b)
    groups: dict[int, list[PairState]] = {}
    for s in states:
        groups.setdefault(dsu[s.a], []).append(s)
    comps = [frozenset(g) for g in groups.values()]
    comps.sort(key=min)
    return comps


def is_connected(states: Iterable[PairState]) -> bool:
    return len(connected_components(states)) == 1


def closure(states: Iterable[PairState]) -> AdmissibleSet:
    """Smallest admissible set containing a connected set of states.

    Sides are found by two-colouring the spins along the states; a spin
    reached on both sides collapses the result to a diagonal set over the
    projection.
    """
    states = sorted(set(PairState(*s) for s in states))
    if not states:
        raise ValueError("closure of an empty set is undefined")
    adjacency: dict[int, list[int]] = {}
    for a, b in states:
        adjacency.setdefault(a, []).append(b)
        adjacency.setdefault(b, []).append(a)
    first = states[0].a
    side = {first: 0}
    frontier = [first]
    diagonal = False
    while frontier:
        x = frontier.pop()
        for y in adjacency[x]:
            if y not in side:
                side[y] = 1 - side[x]
                frontier.append(y)
            elif side[y] == side[x]:
                diagonal = True
    if len(side) != len(adjacency):
        raise ValueError("closure needs a connected set of states")
    if diagonal:
        return AdmissibleSet.diag(side)
    left = frozenset(x for x, k in side.items() if k == 0)
    right = frozenset(x for x, k in side.items() if k == 1)
    return AdmissibleSet(left, right, False)


def symmetrize_cycle(cycle: Cycle, cycles: Iterable[Cycle]) -> frozenset[PairState]:
    """C together with its mirror image, which must itself be a cycle of F."""
    mirror = frozenset(s.swap() for s in cycle.states)
    supports = {c.support for c in cycles}
    if mirror not in supports:
        raise RuntimeError(f"mirror of cycle starting at {cycle.states[0]} is not a cycle; is F symmetric?")
    own = cycle.support
    if mirror != own and mirror & own:
        raise RuntimeError("cycle and its mirror overlap without coinciding")
    return own | mirror


def mirror_representatives(cycles: list[Cycle]) -> list[Cycle]:
    """One cycle out of each {C, C^sym} pair, keeping the first in list order."""
    kept = []
    seen: set[frozenset[PairState]] = set()
    for c in cycles:
        if c.support in seen:
            continue
        kept.append(c)
        seen.add(c.support)
        seen.add(frozenset(s.swap() for s in c.states))
    return kept


def cycle_census(F: PairMap) -> dict:
    cls = classify_points(F)
    lengths: dict[int, int] = {}
    disconnected = 0
    for c in cls.cycles:
        lengths[len(c)] = lengths.get(len(c), 0) + 1
        disconnected += not is_connected(c.states)
    return {
        "cycles": len(cls.cycles),
        "lengths": {str(k): v for k, v in sorted(lengths.items())},
        "connected": len(cls.cycles) - disconnected,
        "disconnected": disconnected,
        "inessential": len(cls.inessential),
    }
