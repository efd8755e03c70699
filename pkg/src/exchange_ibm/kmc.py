"""Event-driven simulation of the exchange process on large graphs.

Edge clocks race: the next event fires after an exponential holding time
with the total effective rate, on an edge chosen proportionally to its rate
through a partial-sum tree.  Transitions with F(s) = s carry rate zero, so
fixed pairs never cost an event.  Occupation statistics are weighted by
holding times and updated lazily, only where spins change.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numba
import numpy as np

from .model import ModelError, ProcessModel, SpinMeasure, pair_measure

INTEGRITY_EVERY = 1_000_000
INTEGRITY_TOL = 1e-9

RUNNING, FROZEN, TIME_UP = 0, 1, 2


@numba.njit(cache=True)
def _set_leaf(tree, size, leaf, value):
    node = size + leaf
    tree[node] = value
    node >>= 1
    while node >= 1:
        tree[node] = tree[2 * node] + tree[2 * node + 1]
        node >>= 1


@numba.njit(cache=True)
def _edge_rate(e, config, edge_u, edge_w, edge_tbl, rate_tables, fimg, m):
    s = config[edge_u[e]] * m + config[edge_w[e]]
    if fimg[s] == s:
        return 0.0
    return rate_tables[edge_tbl[e], s]


@numba.njit(cache=True)
def _advance(
    config, edge_u, edge_w, edge_tbl, rate_tables, fimg, m,
    adj_ptr, adj_edges, tree, size, uniforms, n_events, t_stop,
    clock, occ, last_v, pocc, last_e, collect, info,
):
    """Run up to ``n_events`` transitions; returns (events done, status, clock)."""
    done = 0
    while done < n_events:
        total = tree[1]
        if total <= 0.0:
            return done, 1, clock
        u1 = uniforms[2 * done]
        u2 = uniforms[2 * done + 1]
        dt = -np.log(1.0 - u1) / total
        if t_stop >= 0.0 and clock + dt > t_stop:
            return done, 2, t_stop
        clock += dt

        target = u2 * total
        node = 1
        while node < size:
            left = 2 * node
            if tree[left] > 0.0 and (target < tree[left] or tree[left + 1] <= 0.0):
                node = left
            else:
                target -= tree[left]
                node = left + 1
        e = node - size

        u = edge_u[e]
        w = edge_w[e]
        a = config[u]
        b = config[w]
        t = fimg[a * m + b]
        a2 = t // m
        b2 = t % m
        if collect:
            if a2 != a:
                occ[u, a] += clock - last_v[u]
                last_v[u] = clock
            if b2 != b:
                occ[w, b] += clock - last_v[w]
                last_v[w] = clock
            for v in (u, w):
                for k in range(adj_ptr[v], adj_ptr[v + 1]):
                    f = adj_edges[k]
                    pocc[f, config[edge_u[f]] * m + config[edge_w[f]]] += clock - last_e[f]
                    last_e[f] = clock
        config[u] = a2
        config[w] = b2
        for v in (u, w):
            for k in range(adj_ptr[v], adj_ptr[v + 1]):
                f = adj_edges[k]
                _set_leaf(tree, size, f, _edge_rate(f, config, edge_u, edge_w, edge_tbl, rate_tables, fimg, m))
        info[0] = e
        done += 1
    return done, 0, clock


@dataclass
class StatsAccumulator:
    """Holding-time weighted occupation of spins per vertex and of pairs per edge."""

    occupation: np.ndarray  # (V, m)
    pair_occupation: np.ndarray  # (L, m*m), pairs ordered (x_v, x_w)
    burn_in_time: float = 0.0
    total_time: float = 0.0
    events: int = 0
    point_mass: bool = False

    def site_marginals(self) -> np.ndarray:
        w = self.occupation.sum(axis=1, keepdims=True)
        return self.occupation / np.where(w > 0, w, 1.0)

    def pair_marginals(self) -> np.ndarray:
        w = self.pair_occupation.sum(axis=1, keepdims=True)
        return self.pair_occupation / np.where(w > 0, w, 1.0)

    @staticmethod
    def merge(parts: Sequence["StatsAccumulator"]) -> "StatsAccumulator":
        """Pool replicas in the given order (sums of time weights)."""
        occ = np.zeros_like(parts[0].occupation)
        pocc = np.zeros_like(parts[0].pair_occupation)
        total, events = 0.0, 0
        for p in parts:
            occ += p.occupation
            pocc += p.pair_occupation
            total += p.total_time
            events += p.events
        return StatsAccumulator(occ, pocc, parts[0].burn_in_time, total, events, all(p.point_mass for p in parts))


class SimState:
    """Configuration, per-edge effective rates in a partial-sum tree, clock and RNG."""

    def __init__(self, model: ProcessModel, config: np.ndarray, rng: np.random.Generator):
        m, V = model.m, model.vertex_count
        config = np.asarray(config, dtype=np.int64).copy()
        if config.shape != (V,):
            raise ModelError(f"configuration needs {V} entries, got {config.shape}")
        bad = np.flatnonzero((config < 0) | (config >= m))
        if bad.size:
            raise ModelError(f"configuration spin at vertex {bad[0]} out of range")
        self.model = model
        self.m = m
        self.config = config
        self.rng = rng
        self.clock = 0.0
        self.events = 0

        L = len(model.edges)
        self.edge_u = np.array([e.v for e in model.edges], dtype=np.int64)
        self.edge_w = np.array([e.w for e in model.edges], dtype=np.int64)
        tables: dict = {}
        self.edge_tbl = np.array([tables.setdefault(e.rates, len(tables)) for e in model.edges], dtype=np.int64)
        self.rate_tables = np.array([t.rates.reshape(-1) for t in tables] or [np.zeros(m * m)], dtype=float)
        self.fimg = np.asarray(model.map.images, dtype=np.int64).copy()

        incident: list[list[int]] = [[] for _ in range(V)]
        for k, e in enumerate(model.edges):
            incident[e.v].append(k)
            incident[e.w].append(k)
        self.adj_ptr = np.zeros(V + 1, dtype=np.int64)
        self.adj_ptr[1:] = np.cumsum([len(x) for x in incident])
        self.adj_edges = np.array([k for x in incident for k in x], dtype=np.int64)

        self.size = 1
        while self.size < max(L, 1):
            self.size *= 2
        self.tree = np.zeros(2 * self.size)
        self.rebuild()

        self.stats = StatsAccumulator(np.zeros((V, m)), np.zeros((L, m * m)))
        self.last_v = np.zeros(V)
        self.last_e = np.zeros(L)
        self.collecting = True
        self.stats_start = 0.0
        self._info = np.zeros(1, dtype=np.int64)

    # rates ---------------------------------------------------------------
    def direct_rates(self) -> np.ndarray:
        """Effective edge rates recomputed from scratch."""
        s = self.config[self.edge_u] * self.m + self.config[self.edge_w]
        r = self.rate_tables[self.edge_tbl, s]
        return np.where(self.fimg[s] == s, 0.0, r)

    @property
    def edge_rates(self) -> np.ndarray:
        return self.tree[self.size : self.size + len(self.edge_u)]

    @property
    def total_rate(self) -> float:
        return float(self.tree[1])

    def rebuild(self):
        tree = self.tree
        tree[:] = 0.0
        tree[self.size : self.size + len(self.edge_u)] = self.direct_rates()
        lo = self.size // 2
        while lo >= 1:
            tree[lo : 2 * lo] = tree[2 * lo : 4 * lo : 2] + tree[2 * lo + 1 : 4 * lo : 2]
            lo //= 2

    def integrity_error(self) -> float:
        """Largest relative mismatch between incremental and recomputed rates."""
        fresh = self.direct_rates()
        scale = max(float(fresh.sum()), 1e-300)
        leaf_err = float(np.max(np.abs(self.edge_rates - fresh), initial=0.0)) / scale
        total_err = abs(self.total_rate - float(fresh.sum())) / scale
        return max(leaf_err, total_err)

    # statistics ----------------------------------------------------------
    def reset_stats(self):
        V, L = self.config.size, self.edge_u.size
        self.stats = StatsAccumulator(np.zeros((V, self.m)), np.zeros((L, self.m * self.m)), burn_in_time=self.clock)
        self.last_v[:] = self.clock
        self.last_e[:] = self.clock
        self.stats_start = self.clock
        self.collecting = True

    def _pending(self):
        occ = self.stats.occupation.copy()
        pocc = self.stats.pair_occupation.copy()
        V = self.config.size
        occ[np.arange(V), self.config] += self.clock - self.last_v
        pairs = self.config[self.edge_u] * self.m + self.config[self.edge_w]
        pocc[np.arange(self.edge_u.size), pairs] += self.clock - self.last_e
        return occ, pocc

    def snapshot(self) -> StatsAccumulator:
        """Statistics up to the current clock, without disturbing the running state."""
        occ, pocc = self._pending()
        total = self.clock - self.stats_start
        return StatsAccumulator(occ, pocc, self.stats.burn_in_time, total, self.stats.events)

    def point_mass(self) -> StatsAccumulator:
        V, L = self.config.size, self.edge_u.size
        occ = np.zeros((V, self.m))
        occ[np.arange(V), self.config] = 1.0
        pocc = np.zeros((L, self.m * self.m))
        pocc[np.arange(L), self.config[self.edge_u] * self.m + self.config[self.edge_w]] = 1.0
        return StatsAccumulator(occ, pocc, self.stats.burn_in_time, 0.0, self.stats.events, point_mass=True)

    # dynamics ------------------------------------------------------------
    def _kernel(self, n_events: int, t_stop: float, uniforms: np.ndarray):
        done, status, clock = _advance(
            self.config, self.edge_u, self.edge_w, self.edge_tbl, self.rate_tables, self.fimg, self.m,
            self.adj_ptr, self.adj_edges, self.tree, self.size, uniforms, n_events, t_stop,
            self.clock, self.stats.occupation, self.last_v, self.stats.pair_occupation, self.last_e,
            self.collecting, self._info,
        )
        self.clock = clock
        self.events += done
        if self.collecting:
            self.stats.events += done
        return done, status


def init_sim(
    model: ProcessModel,
    nu: SpinMeasure | None = None,
    config: Sequence[int] | None = None,
    seed=None,
) -> SimState:
    """Start from an explicit configuration or from a draw of nu^V."""
    rng = np.random.default_rng(seed)
    if (nu is None) == (config is None):
        raise ValueError("give exactly one of nu or config")
    if config is None:
        if nu.m != model.m:
            raise ModelError(f"measure has {nu.m} entries but the model has {model.m} spins")
        config = rng.choice(model.m, size=model.vertex_count, p=nu.probs)
    return SimState(model, config, rng)


@dataclass(frozen=True)
class EventRecord:
    edge: int
    before: tuple[int, int]
    after: tuple[int, int]
    waiting_time: float
    time: float


def step(state: SimState) -> EventRecord | None:
    """One transition, or None when every effective rate is zero."""
    t0 = state.clock
    uniforms = state.rng.random(2)
    snapshot = state.config.copy()
    done, status = state._kernel(1, -1.0, uniforms)
    if not done:
        return None
    e = int(state._info[0])
    u, w = state.edge_u[e], state.edge_w[e]
    return EventRecord(
        e,
        (int(snapshot[u]), int(snapshot[w])),
        (int(state.config[u]), int(state.config[w])),
        state.clock - t0,
        state.clock,
    )


@dataclass
class RunResult:
    stats: StatsAccumulator
    frozen: bool
    events: int
    clock: float
    integrity_error: float
    trace: list[dict] = field(default_factory=list)


def run(
    state: SimState,
    events: int | None = None,
    time: float | None = None,
    burn_in: int = 0,
    nu: SpinMeasure | None = None,
    trace_stride: int | None = None,
    chunk: int = INTEGRITY_EVERY,
) -> RunResult:
    """Advance by ``events`` transitions or to simulated ``time`` after ``burn_in`` untimed events.

    With ``trace_stride`` and ``nu``, the mean single-site and adjacent-pair
    total-variation distances are sampled every ``trace_stride`` events.
    """
    if (events is None) == (time is None):
        raise ValueError("give exactly one of events or time")
    chunk = max(1, min(chunk, INTEGRITY_EVERY))
    if trace_stride:
        chunk = min(chunk, trace_stride)
    worst = 0.0
    frozen = False

    def advance(n_target: int | None, t_stop: float) -> bool:
        nonlocal worst
        remaining = n_target
        grow = min(chunk, 1024)  # time budgets: start small so short runs do not pre-draw a full chunk
        while remaining is None or remaining > 0:
            if remaining is None:
                n, grow = grow, min(chunk, 2 * grow)
            else:
                n = min(chunk, remaining)
            done, status = state._kernel(n, t_stop, state.rng.random(2 * n))
            if remaining is not None:
                remaining -= done
            err = state.integrity_error()
            worst = max(worst, err)
            if err > INTEGRITY_TOL:
                raise RuntimeError(f"rate bookkeeping drifted by {err:.3e}")
            state.rebuild()
            if trace is not None and state.collecting and done:
                rep = compare_marginals(state.snapshot(), nu)
                trace.append({"events": state.stats.events, "time": state.clock,
                              "site_tv_mean": rep.site_tv_mean, "pair_tv_mean": rep.pair_tv_mean})
            if status == FROZEN:
                return True
            if status == TIME_UP:
                return False
        return False

    trace = [] if (trace_stride and nu is not None) else None
    if burn_in:
        state.collecting = False
        frozen = advance(int(burn_in), -1.0)
    state.reset_stats()
    t_stop = -1.0 if time is None else state.clock + float(time)
    if not frozen:
        frozen = advance(events, t_stop)
    if frozen and time is None:
        # an absorbed chain spends all future time in its final configuration
        stats = state.point_mass()
    else:
        if frozen:
            state.clock = t_stop
        stats = state.snapshot()
    return RunResult(stats, frozen, state.events, state.clock, worst, trace or [])


# -- comparison -------------------------------------------------------------

def tv_distance(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    return 0.5 * np.abs(np.asarray(p) - np.asarray(q)).sum(axis=-1)


@dataclass(frozen=True)
class MarginalReport:
    site_tv: np.ndarray
    pair_tv: np.ndarray
    pooled_site_tv: float
    pooled_pair_tv: float

    @property
    def site_tv_mean(self) -> float:
        return float(self.site_tv.mean()) if self.site_tv.size else 0.0

    @property
    def site_tv_max(self) -> float:
        return float(self.site_tv.max()) if self.site_tv.size else 0.0

    @property
    def pair_tv_mean(self) -> float:
        return float(self.pair_tv.mean()) if self.pair_tv.size else 0.0

    @property
    def pair_tv_max(self) -> float:
        return float(self.pair_tv.max()) if self.pair_tv.size else 0.0

    def to_dict(self) -> dict:
        return {
            "site_tv_mean": self.site_tv_mean,
            "site_tv_max": self.site_tv_max,
            "pair_tv_mean": self.pair_tv_mean,
            "pair_tv_max": self.pair_tv_max,
            "pooled_site_tv": self.pooled_site_tv,
            "pooled_pair_tv": self.pooled_pair_tv,
        }


def compare_marginals(stats: StatsAccumulator, nu: SpinMeasure) -> MarginalReport:
    """Per-vertex TV to nu, per-edge TV to nu x nu, and the same for site/edge-pooled occupation."""
    if stats.total_time <= 0 and not stats.point_mass:
        raise ValueError("no simulated time has been recorded")
    nu2 = pair_measure(nu).flat
    site = stats.site_marginals()
    pair = stats.pair_marginals()
    pooled_site = stats.occupation.sum(axis=0)
    pooled_pair = stats.pair_occupation.sum(axis=0)
    pooled_site = pooled_site / max(pooled_site.sum(), 1e-300)
    pooled_pair = pooled_pair / max(pooled_pair.sum(), 1e-300)
    return MarginalReport(
        tv_distance(site, nu.probs),
        tv_distance(pair, nu2),
        float(tv_distance(pooled_site, nu.probs)),
        float(tv_distance(pooled_pair, nu2)) if stats.pair_occupation.size else 0.0,
    )


# -- replicas ---------------------------------------------------------------

def replica_seeds(seed: int, replicas: int) -> list[np.random.SeedSequence]:
    """Child seed sequence r of the master seed, independent of the replica count."""
    return [np.random.SeedSequence(seed, spawn_key=(r,)) for r in range(replicas)]


@dataclass
class ReplicaSummary:
    runs: list[RunResult]
    reports: list[MarginalReport]
    pooled: StatsAccumulator

    def mean_se(self, attr: str) -> tuple[float, float]:
        vals = np.array([getattr(r, attr) for r in self.reports])
        se = float(vals.std(ddof=1) / np.sqrt(vals.size)) if vals.size > 1 else float("nan")
        return float(vals.mean()), se


def run_replicas(
    model: ProcessModel,
    nu: SpinMeasure,
    seed: int,
    replicas: int,
    events: int | None = None,
    time: float | None = None,
    burn_in: int = 0,
    config: Sequence[int] | None = None,
    reference: SpinMeasure | None = None,
    trace_stride: int | None = None,
) -> ReplicaSummary:
    """Independent runs from child seeds of ``seed``, compared against ``reference`` (default nu)."""
    reference = reference or nu
    runs, reports = [], []
    for child in replica_seeds(seed, replicas):
        state = init_sim(model, nu=None if config is not None else nu, config=config, seed=child)
        res = run(state, events=events, time=time, burn_in=burn_in, nu=reference, trace_stride=trace_stride)
        runs.append(res)
        reports.append(compare_marginals(res.stats, reference))
    return ReplicaSummary(runs, reports, StatsAccumulator.merge([r.stats for r in runs]))
