"""Domain types for exchange processes and the JSON model-file reader.

Spins are canonical indices ``0..m-1``; labels are carried for display only.
A pair state ``(a, b)`` is flattened to ``a * m + b`` wherever arrays are used.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Sequence

import numpy as np

DEFAULT_TOL = 1e-9
SUM_TOL = 1e-12


class ModelError(ValueError):
    """Raised when a model, measure or map violates a type invariant."""


class PairState(NamedTuple):
    a: int
    b: int

    def swap(self) -> "PairState":
        return PairState(self.b, self.a)


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class SpinSpace:
    labels: tuple[str, ...]

    def __post_init__(self):
        if len(self.labels) < 1:
            raise ModelError("spin space must contain at least one spin")
        if len(set(self.labels)) != len(self.labels):
            raise ModelError("spin labels must be pairwise distinct")

    @classmethod
    def of_size(cls, m: int) -> "SpinSpace":
        return cls(tuple(f"x{i + 1}" for i in range(m)))

    @property
    def size(self) -> int:
        return len(self.labels)


class PairMap:
    """Deterministic map F on S = X x X stored as a flat image table.

    ``images[a * m + b]`` is the flat index of ``F(a, b)``.
    """

    __slots__ = ("m", "images", "is_symmetric", "is_bijective")

    def __init__(self, m: int, images: Sequence[int] | np.ndarray):
        images = np.asarray(images, dtype=np.int64).reshape(-1)
        if m < 1:
            raise ModelError("spin space must contain at least one spin")
        if images.shape != (m * m,):
            raise ModelError(f"pair map must have {m * m} entries, got {images.shape[0]}")
        bad = np.flatnonzero((images < 0) | (images >= m * m))
        if bad.size:
            s = int(bad[0])
            raise ModelError(f"F({s // m},{s % m}) spin index out of range")
        self.m = m
        self.images = _frozen(images)
        self.is_bijective = bool(np.unique(images).size == m * m)
        self.is_symmetric = bool(np.array_equal(images[self.swap_index()], self.swap_index()[images]))

    @classmethod
    def from_table(cls, table) -> "PairMap":
        """Build from an ``m x m`` nested sequence of ``(a', b')`` pairs."""
        m = len(table)
        images = []
        for a, row in enumerate(table):
            if len(row) != m:
                raise ModelError(f"map row {a} has {len(row)} entries, expected {m}")
            for b, pair in enumerate(row):
                if len(pair) != 2:
                    raise ModelError(f"F({a},{b}) must be a pair of spin indices")
                x, y = (int(v) for v in pair)
                if not (0 <= x < m and 0 <= y < m):
                    raise ModelError(f"F({a},{b}) spin index out of range")
                images.append(x * m + y)
        return cls(m, images)

    @classmethod
    def from_function(cls, m: int, fn) -> "PairMap":
        return cls(m, [fn(a, b)[0] * m + fn(a, b)[1] for a in range(m) for b in range(m)])

    @classmethod
    def identity(cls, m: int) -> "PairMap":
        return cls(m, np.arange(m * m))

    @classmethod
    def swap(cls, m: int) -> "PairMap":
        """Kawasaki exchange: the two spins trade places."""
        return cls.from_function(m, lambda a, b: (b, a))

    def swap_index(self) -> np.ndarray:
        idx = np.arange(self.m * self.m)
        return (idx % self.m) * self.m + idx // self.m

    def state(self, s: int) -> PairState:
        return PairState(s // self.m, s % self.m)

    def flat(self, state: tuple[int, int]) -> int:
        return state[0] * self.m + state[1]

    def __call__(self, a: int, b: int) -> PairState:
        return self.state(int(self.images[a * self.m + b]))

    @property
    def table(self) -> np.ndarray:
        """``(m, m, 2)`` array; entry ``[a, b]`` is ``F(a, b)``."""
        return np.stack([self.images // self.m, self.images % self.m], axis=-1).reshape(self.m, self.m, 2)

    def inverse_images(self) -> np.ndarray:
        if not self.is_bijective:
            raise ModelError("pair map is not one-to-one")
        inv = np.empty_like(self.images)
        inv[self.images] = np.arange(self.images.size)
        return inv

    def restrict(self, spins: Sequence[int]) -> "PairMap":
        """Restriction to ``spins x spins``, relabelled to ``0..len(spins)-1``."""
        spins = list(spins)
        pos = {x: i for i, x in enumerate(spins)}
        k = len(spins)
        images = []
        for a in spins:
            for b in spins:
                x, y = self(a, b)
                if x not in pos or y not in pos:
                    raise ModelError(f"F({a},{b}) = ({x},{y}) leaves the retained spins")
                images.append(pos[x] * k + pos[y])
        return PairMap(k, images)

    def to_table(self) -> list:
        return self.table.tolist()

    def __eq__(self, other):
        return isinstance(other, PairMap) and self.m == other.m and np.array_equal(self.images, other.images)

    def __hash__(self):
        return hash((self.m, self.images.tobytes()))

    def __repr__(self):
        return f"PairMap(m={self.m}, symmetric={self.is_symmetric}, bijective={self.is_bijective})"


@dataclass(frozen=True, eq=False)
class SpinMeasure:
    probs: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float).reshape(-1)
        if p.size == 0:
            raise ModelError("measure must have at least one entry")
        if not np.all(np.isfinite(p)) or np.any(p < 0) or np.any(p > 1):
            i = int(np.flatnonzero(~np.isfinite(p) | (p < 0) | (p > 1))[0])
            raise ModelError(f"nu({i}) = {p[i]} is not in [0, 1]")
        total = math.fsum(p)
        if abs(total - 1.0) > SUM_TOL:
            raise ModelError(f"measure sums to {total!r}, expected 1")
        object.__setattr__(self, "probs", _frozen(p))

    @classmethod
    def uniform(cls, m: int) -> "SpinMeasure":
        return cls(np.full(m, 1.0 / m))

    @property
    def m(self) -> int:
        return self.probs.size

    def __eq__(self, other):
        return isinstance(other, SpinMeasure) and np.array_equal(self.probs, other.probs)

    def __repr__(self):
        return f"SpinMeasure({self.probs.tolist()})"


@dataclass(frozen=True, eq=False)
class PairMeasure:
    probs: np.ndarray

    @property
    def flat(self) -> np.ndarray:
        return self.probs.reshape(-1)


def pair_measure(nu: SpinMeasure) -> PairMeasure:
    """Product measure nu x nu on S as an ``m x m`` array."""
    return PairMeasure(_frozen(np.multiply.outer(nu.probs, nu.probs)))


@dataclass(frozen=True, eq=False)
class RateTable:
    rates: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.rates, dtype=float)
        if r.ndim != 2 or r.shape[0] != r.shape[1]:
            raise ModelError(f"rate table must be square, got shape {r.shape}")
        if not np.all(np.isfinite(r)) or np.any(r < 0):
            a, b = np.argwhere(~np.isfinite(r) | (r < 0))[0]
            raise ModelError(f"rate({a},{b}) = {r[a, b]} must be finite and non-negative")
        object.__setattr__(self, "rates", _frozen(r))

    @classmethod
    def constant(cls, m: int, value: float = 1.0) -> "RateTable":
        return cls(np.full((m, m), float(value)))

    @property
    def is_symmetric(self) -> bool:
        return bool(np.array_equal(self.rates, self.rates.T))

    def __eq__(self, other):
        return isinstance(other, RateTable) and np.array_equal(self.rates, other.rates)

    def __hash__(self):
        return hash(self.rates.tobytes())


@dataclass(frozen=True)
class Edge:
    v: int
    w: int
    rates: RateTable


@dataclass(frozen=True)
class ProcessModel:
    spins: SpinSpace
    map: PairMap
    vertex_count: int
    edges: tuple[Edge, ...]
    mode: str = "undirected"
    raw: dict | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        m = self.spins.size
        if self.map.m != m:
            raise ModelError(f"map is defined on {self.map.m} spins but {m} labels were given")
        if self.mode not in ("undirected", "oriented"):
            raise ModelError(f"mode must be 'undirected' or 'oriented', got {self.mode!r}")
        if self.vertex_count < 1:
            raise ModelError("graph must have at least one vertex")
        if self.mode == "undirected" and not self.map.is_symmetric:
            raise ModelError("pair map is not symmetric (F j != j F) in undirected mode")
        for k, e in enumerate(self.edges):
            if not (0 <= e.v < self.vertex_count and 0 <= e.w < self.vertex_count):
                raise ModelError(f"edge {k} ({e.v},{e.w}) has a vertex out of range")
            if e.v == e.w:
                raise ModelError(f"edge {k} ({e.v},{e.w}) is a self-loop")
            r = e.rates.rates
            if r.shape != (m, m):
                raise ModelError(f"edge {k} rate table has shape {r.shape}, expected ({m}, {m})")
            if self.mode == "undirected" and not e.rates.is_symmetric:
                a, b = np.argwhere(r != r.T)[0]
                raise ModelError(f"edge {k}: rate({a},{b}) != rate({b},{a}) in undirected mode")

    @property
    def m(self) -> int:
        return self.spins.size

    def with_graph(self, vertex_count: int, pairs: Iterable[tuple[int, int]], rates: RateTable | None = None) -> "ProcessModel":
        """Same spins and map on another graph; every edge gets ``rates`` (unit by default)."""
        rates = rates or RateTable.constant(self.m)
        edges = tuple(Edge(v, w, rates) for v, w in pairs)
        return ProcessModel(self.spins, self.map, vertex_count, edges, self.mode)

    def digest(self) -> str:
        return model_digest(self.raw if self.raw is not None else model_to_dict(self))


# -- graphs -----------------------------------------------------------------

def path_edges(n: int) -> list[tuple[int, int]]:
    return [(i, i + 1) for i in range(n - 1)]


def cycle_edges(n: int) -> list[tuple[int, int]]:
    if n < 3:
        raise ModelError("a cycle graph needs at least 3 vertices")
    return [(i, (i + 1) % n) for i in range(n)]


def complete_edges(n: int) -> list[tuple[int, int]]:
    return [(i, j) for i in range(n) for j in range(i + 1, n)]


def torus_edges(width: int, height: int) -> list[tuple[int, int]]:
    """Nearest-neighbour torus; a side of length 2 is not wrapped twice, length 1 has no edges."""
    if width < 1 or height < 1:
        raise ModelError("torus dimensions must be positive")
    edges = []
    for y in range(height):
        for x in range(width):
            v = y * width + x
            if width > 1 and (x + 1 < width or width > 2):
                edges.append((v, y * width + (x + 1) % width))
            if height > 1 and (y + 1 < height or height > 2):
                edges.append((v, ((y + 1) % height) * width + x))
    return edges


def graph_from_spec(spec: dict) -> tuple[int, list[tuple[int, int]]]:
    if not isinstance(spec, dict) or "type" not in spec:
        raise ModelError("graph must be an object with a 'type' field")
    kind = spec["type"]
    try:
        if kind == "edges":
            n = int(spec["n"])
            return n, [(int(v), int(w)) for v, w in spec["edges"]]
        if kind == "path":
            n = int(spec["n"])
            return n, path_edges(n)
        if kind == "cycle":
            n = int(spec["n"])
            return n, cycle_edges(n)
        if kind == "complete":
            n = int(spec["n"])
            return n, complete_edges(n)
        if kind == "torus":
            w, h = int(spec["width"]), int(spec["height"])
            return w * h, torus_edges(w, h)
    except KeyError as exc:
        raise ModelError(f"graph of type {kind!r} is missing field {exc.args[0]!r}") from None
    except (TypeError, ValueError) as exc:
        raise ModelError(f"malformed graph description: {exc}") from None
    raise ModelError(f"unknown graph type {kind!r}")


# -- ingestion --------------------------------------------------------------

def _rate_tables(spec, m: int, pairs: list[tuple[int, int]], mode: str) -> list[RateTable]:
    if spec is None:
        spec = {"default": 1.0}
    if not isinstance(spec, dict):
        raise ModelError("rates must be an object")
    if "default" in spec:
        return [RateTable.constant(m, float(spec["default"]))] * len(pairs)
    if "default_table" in spec:
        return [RateTable(np.asarray(spec["default_table"], dtype=float))] * len(pairs)
    if "per_edge" in spec:
        pending: dict[tuple[int, int], list[RateTable]] = {}
        for k, item in enumerate(spec["per_edge"]):
            v, w = (int(x) for x in item["edge"])
            key = (v, w) if mode == "oriented" else (min(v, w), max(v, w))
            table = np.asarray(item["table"], dtype=float)
            if mode == "undirected" and v > w and table.ndim == 2:
                table = table.T
            pending.setdefault(key, []).append(RateTable(table))
        tables = []
        for v, w in pairs:
            key = (v, w) if mode == "oriented" else (min(v, w), max(v, w))
            queue = pending.get(key)
            if not queue:
                raise ModelError(f"no rate table given for edge ({v},{w})")
            tables.append(queue.pop(0))
        leftover = [k for k, q in pending.items() if q]
        if leftover:
            raise ModelError(f"rate table given for edge {leftover[0]} which is not in the graph")
        return tables
    raise ModelError("rates must contain 'default', 'default_table' or 'per_edge'")


def validate_model(raw: dict) -> ProcessModel:
    """Check a raw model description and return the validated ProcessModel."""
    if isinstance(raw, ProcessModel):
        return raw
    if not isinstance(raw, dict):
        raise ModelError("model must be a JSON object")
    for key in ("spins", "map", "graph"):
        if key not in raw:
            raise ModelError(f"model is missing field {key!r}")
    spins = SpinSpace(tuple(str(s) for s in raw["spins"]))
    if len(raw["map"]) != spins.size:
        raise ModelError(f"map has {len(raw['map'])} rows, expected {spins.size}")
    pmap = PairMap.from_table(raw["map"])
    mode = raw.get("mode", "undirected")
    n, pairs = graph_from_spec(raw["graph"])
    tables = _rate_tables(raw.get("rates"), spins.size, pairs, mode)
    edges = tuple(Edge(v, w, t) for (v, w), t in zip(pairs, tables))
    return ProcessModel(spins, pmap, n, edges, mode, raw=raw)


def model_to_dict(model: ProcessModel) -> dict:
    return {
        "spins": list(model.spins.labels),
        "map": model.map.to_table(),
        "graph": {"type": "edges", "n": model.vertex_count, "edges": [[e.v, e.w] for e in model.edges]},
        "rates": {"per_edge": [{"edge": [e.v, e.w], "table": e.rates.rates.tolist()} for e in model.edges]},
        "mode": model.mode,
    }


def model_digest(raw: dict) -> str:
    canon = json.dumps(raw, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


def load_model(path) -> ProcessModel:
    with open(path) as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ModelError(f"{path}: not valid JSON ({exc})") from None
    return validate_model(raw)


def load_measure(path, m: int | None = None) -> SpinMeasure:
    with open(path) as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ModelError(f"{path}: not valid JSON ({exc})") from None
    if not isinstance(raw, dict) or "nu" not in raw:
        raise ModelError("measure file must be an object with a 'nu' field")
    nu = SpinMeasure(np.asarray(raw["nu"], dtype=float))
    if m is not None and nu.m != m:
        raise ModelError(f"measure has {nu.m} entries but the model has {m} spins")
    return nu


# -- stock maps used throughout the docs and tests --------------------------

def two_pair_map() -> PairMap:
    """Four spins; (x1,x2) <-> (x3,x4) and the mirrored pair form 2-cycles, all else fixed."""
    images = list(range(16))
    for (a, b), (c, d) in [((0, 1), (2, 3)), ((1, 0), (3, 2))]:
        images[a * 4 + b] = c * 4 + d
        images[c * 4 + d] = a * 4 + b
    return PairMap(4, images)


def product_map(perm: Sequence[int]) -> PairMap:
    """F(a, b) = (f(a), f(b)) for a one-to-one f given as a sequence."""
    return PairMap.from_function(len(perm), lambda a, b: (perm[a], perm[b]))


def random_symmetric_bijection(m: int, rng: np.random.Generator) -> PairMap:
    """Uniform draw among permutations of S commuting with the coordinate swap."""
    images = np.empty(m * m, dtype=np.int64)
    diag = rng.permutation(m)
    for a in range(m):
        images[a * m + a] = diag[a] * m + diag[a]
    pairs = [(a, b) for a in range(m) for b in range(a + 1, m)]
    targets = rng.permutation(len(pairs))
    flips = rng.integers(0, 2, size=len(pairs))
    for (a, b), t, flip in zip(pairs, targets, flips):
        c, d = pairs[t]
        if flip:
            c, d = d, c
        images[a * m + b] = c * m + d
        images[b * m + a] = d * m + c
    return PairMap(m, images)
