import itertools
import json

import numpy as np
import pytest

from exchange_ibm.model import Edge, PairMap, ProcessModel, RateTable, SpinSpace, two_pair_map


def make_model(F: PairMap, vertex_count: int, pairs, rates=None, mode="undirected") -> ProcessModel:
    rates = rates or RateTable.constant(F.m)
    if isinstance(rates, RateTable):
        rates = [rates] * len(pairs)
    edges = tuple(Edge(v, w, r) for (v, w), r in zip(pairs, rates))
    return ProcessModel(SpinSpace.of_size(F.m), F, vertex_count, edges, mode)


def dense_generator(model: ProcessModel) -> tuple[list, np.ndarray]:
    """Generator built by walking every configuration; independent of exactgen."""
    m, V = model.m, model.vertex_count
    confs = list(itertools.product(range(m), repeat=V))
    index = {c: i for i, c in enumerate(confs)}
    Q = np.zeros((len(confs), len(confs)))
    for c in confs:
        for e in model.edges:
            a, b = c[e.v], c[e.w]
            a2, b2 = model.map(a, b)
            if (a2, b2) == (a, b):
                continue
            d = list(c)
            d[e.v], d[e.w] = a2, b2
            r = e.rates.rates[a, b]
            Q[index[c], index[tuple(d)]] += r
            Q[index[c], index[c]] -= r
    return confs, Q


def dense_residual(model: ProcessModel, nu) -> float:
    confs, Q = dense_generator(model)
    mu = np.array([np.prod([nu[x] for x in c]) for c in confs])
    return float(np.abs(mu @ Q).max())


def sparse_symmetric_bijection(m: int, k: int, rng) -> PairMap:
    """Symmetric bijection moving only ``k`` unordered off-diagonal pairs (plus mirrors)."""
    images = np.arange(m * m)
    pairs = [(a, b) for a in range(m) for b in range(a + 1, m)]
    chosen = rng.choice(len(pairs), size=min(k, len(pairs)), replace=False)
    for src, dst in zip(chosen, rng.permutation(chosen)):
        (a, b), (c, d) = pairs[src], pairs[dst]
        if rng.integers(2):
            c, d = d, c
        images[a * m + b] = c * m + d
        images[b * m + a] = d * m + c
    return PairMap(m, images)


def all_symmetric_bijections(m: int):
    """Every permutation of S commuting with the coordinate swap."""
    pairs = [(a, b) for a in range(m) for b in range(a + 1, m)]
    for diag in itertools.permutations(range(m)):
        for targets in itertools.permutations(range(len(pairs))):
            for flips in itertools.product((0, 1), repeat=len(pairs)):
                images = np.empty(m * m, dtype=np.int64)
                for a in range(m):
                    images[a * m + a] = diag[a] * m + diag[a]
                for (a, b), t, flip in zip(pairs, targets, flips):
                    c, d = pairs[t]
                    if flip:
                        c, d = d, c
                    images[a * m + b] = c * m + d
                    images[b * m + a] = d * m + c
                yield PairMap(m, images)


def cycle_constant_rates(F: PairMap, rng, low=0.5, high=2.0) -> RateTable:
    """Symmetric rate table constant along cycles of a symmetric bijection."""
    from exchange_ibm.cycles import decompose_cycles

    r = np.zeros((F.m, F.m))
    for c in decompose_cycles(F):
        if r[c.states[0]] > 0:
            continue
        value = rng.uniform(low, high)
        for a, b in c.states:
            r[a, b] = r[b, a] = value
    return RateTable(r)


@pytest.fixture
def two_pair():
    return two_pair_map()


@pytest.fixture
def write_json(tmp_path):
    def write(name, obj):
        path = tmp_path / name
        path.write_text(json.dumps(obj))
        return str(path)

    return write


ACCEPTANCE_LINES: dict[int, str] = {}


@pytest.fixture
def acceptance():
    """Record the verdict line for one acceptance criterion, then assert it."""

    def record(number: int, ok: bool, detail: str):
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES[number] = line
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for number in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[number])
