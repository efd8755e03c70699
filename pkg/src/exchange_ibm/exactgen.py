"""Exact continuous-time generator on small configuration spaces, and an exhaustive partition oracle.

Configurations are indexed in mixed radix with vertex 0 most significant,
which is also the ordering of ``kron(nu, nu, ..., nu)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import reduce
from typing import Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .model import ModelError, PairMap, ProcessModel, SpinMeasure

DEFAULT_MAX_STATES = 200_000
ORACLE_MAX_M = 8


class StateCapExceeded(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class GeneratorMatrix:
    Q: sp.csr_matrix
    m: int
    vertex_count: int
    max_rate: float

    @property
    def n(self) -> int:
        return self.Q.shape[0]

    def row_sums(self) -> np.ndarray:
        return np.asarray(self.Q.sum(axis=1)).ravel()


def configurations(m: int, vertex_count: int) -> np.ndarray:
    """``(m**V, V)`` array of spin digits, row ``c`` is configuration ``c``."""
    n = m**vertex_count
    idx = np.arange(n, dtype=np.int64)
    powers = m ** np.arange(vertex_count - 1, -1, -1, dtype=np.int64)
    return (idx[:, None] // powers[None, :]) % m


def build_generator(
    model: ProcessModel, max_states: int = DEFAULT_MAX_STATES, edges: Sequence[int] | None = None
) -> GeneratorMatrix:
    """Sparse generator of the exchange process, optionally restricted to some edges."""
    m, V = model.m, model.vertex_count
    if m**V > max_states:
        raise StateCapExceeded(f"{m}^{V} = {m**V} configurations exceed the cap of {max_states}")
    n = m**V
    digits = configurations(m, V)
    idx = np.arange(n, dtype=np.int64)
    powers = m ** np.arange(V - 1, -1, -1, dtype=np.int64)
    images = model.map.images
    chosen = range(len(model.edges)) if edges is None else edges
    rows, cols, vals = [], [], []
    max_rate = 0.0
    for k in chosen:
        e = model.edges[k]
        a, b = digits[:, e.v], digits[:, e.w]
        target = images[a * m + b]
        a2, b2 = target // m, target % m
        rate = e.rates.rates[a, b]
        moved = (target != a * m + b) & (rate > 0)
        dest = idx + (a2 - a) * powers[e.v] + (b2 - b) * powers[e.w]
        rows.append(idx[moved])
        cols.append(dest[moved])
        vals.append(rate[moved])
        if moved.any():
            max_rate = max(max_rate, float(rate[moved].max()))
    rows = np.concatenate(rows) if rows else np.empty(0, dtype=np.int64)
    cols = np.concatenate(cols) if cols else np.empty(0, dtype=np.int64)
    vals = np.concatenate(vals) if vals else np.empty(0)
    off = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    off.sum_duplicates()
    out = np.asarray(off.sum(axis=1)).ravel()
    Q = (off - sp.diags(out)).tocsr()
    return GeneratorMatrix(Q, m, V, max_rate)


def product_measure(nu: SpinMeasure, vertex_count: int) -> np.ndarray:
    return reduce(np.kron, [nu.probs] * vertex_count, np.ones(1))


@dataclass(frozen=True)
class ExactResult:
    residual: float
    tolerance: float
    invariant: bool


def verify_invariant_exact(nu: SpinMeasure, gen: GeneratorMatrix, tol: float | None = None) -> ExactResult:
    """Sup-norm of mu^T Q for the Bernoulli measure mu = nu^V."""
    if nu.m != gen.m:
        raise ModelError(f"measure has {nu.m} entries, generator has {gen.m} spins")
    mu = product_measure(nu, gen.vertex_count)
    residual = float(np.max(np.abs(gen.Q.T @ mu))) if gen.n else 0.0
    if tol is None:
        tol = 1e-12 * (gen.max_rate if gen.max_rate > 0 else 1.0)
    return ExactResult(residual, tol, residual <= tol)


def communicating_classes(gen: GeneratorMatrix) -> tuple[int, np.ndarray]:
    """Strongly connected components of the transition graph."""
    pattern = gen.Q.copy()
    pattern.setdiag(0)
    pattern.eliminate_zeros()
    return connected_components(pattern, directed=True, connection="strong")


def is_irreducible(gen: GeneratorMatrix) -> bool:
    return communicating_classes(gen)[0] == 1


def stationary_dimension(gen: GeneratorMatrix, max_dense: int = 4096) -> int:
    """Dimension of the left null space of Q (number of extremal stationary measures)."""
    if gen.n > max_dense:
        raise StateCapExceeded(f"dense rank needs n <= {max_dense}, got {gen.n}")
    dense = gen.Q.toarray()
    return gen.n - int(np.linalg.matrix_rank(dense))


# -- exhaustive oracle ------------------------------------------------------

def _orbits(images: Sequence[int]) -> list[list[int]]:
    seen = set()
    out = []
    for s in range(len(images)):
        if s in seen:
            continue
        orbit = [s]
        seen.add(s)
        t = images[s]
        while t != s:
            orbit.append(t)
            seen.add(t)
            t = images[t]
        out.append(orbit)
    return out


def brute_force_families(F: PairMap, max_m: int = ORACLE_MAX_M):
    """Finest set partitions of the spins whose pair blocks each hold whole cycles of F.

    Enumerates every set partition, so only for small spin sets.
    """
    from sympy.utilities.iterables import multiset_partitions

    from .partitions import SpinPartition

    m = F.m
    if m > max_m:
        raise StateCapExceeded(f"brute force needs m <= {max_m}, got {m}")
    if not F.is_bijective:
        raise ModelError("brute force oracle needs a one-to-one map")
    orbits = [[divmod(s, m) for s in orbit] for orbit in _orbits(F.images.tolist())]
    orbits = [o for o in orbits if len(o) > 1]

    valid = []
    for blocks in multiset_partitions(list(range(m))):
        label = [0] * m
        for k, block in enumerate(blocks):
            for x in block:
                label[x] = k
        ok = True
        for orbit in orbits:
            keys = {frozenset((label[a], label[b])) for a, b in orbit}
            if len(keys) > 1:
                ok = False
                break
        if ok:
            valid.append(tuple(label))

    def finer(p, q):
        # every block of p sits inside a block of q
        image = {}
        return all(image.setdefault(i, j) == j for i, j in zip(p, q))

    by_blocks = sorted(valid, key=lambda p: -max(p))
    minimal = [
        p for p in valid
        if not any(finer(q, p) for q in by_blocks if max(q) > max(p))
    ]
    return sorted({SpinPartition(p) for p in minimal}, key=lambda P: P.block_of)
