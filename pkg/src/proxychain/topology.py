"""Proxy-location topologies and the full-mesh RTT matrix derived from them.

Topology files are line oriented::

    # comment
    node 0 milan
    node 1 frankfurt
    link 0 1 12.5

``node`` lines declare dense zero-based indices (names optional), ``link``
lines give an undirected edge with its RTT in milliseconds.
"""
from __future__ import annotations

import io
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components, shortest_path


class TopologyError(ValueError):
    """Raised for malformed or invalid topology input."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


@dataclass(frozen=True)
class ProxyGraph:
    n: int
    edges: tuple[tuple[int, int, float], ...]
    names: tuple[str | None, ...] = field(default=())

    def __post_init__(self):
        if self.n < 1:
            raise TopologyError("graph has no nodes")
        if not self.names:
            object.__setattr__(self, "names", (None,) * self.n)
        seen = set()
        for u, v, rtt in self.edges:
            if not (0 <= u < self.n and 0 <= v < self.n):
                raise TopologyError(f"link {u}-{v} references unknown node")
            if u == v:
                raise TopologyError(f"self-loop on node {u}")
            key = (min(u, v), max(u, v))
            if key in seen:
                raise TopologyError(f"duplicate link {key[0]}-{key[1]}")
            seen.add(key)
            if not (math.isfinite(rtt) and rtt > 0):
                raise TopologyError(f"link {u}-{v} has non-positive or non-finite RTT {rtt}")
        if self.n > 1 and not self._connected():
            raise TopologyError("graph is disconnected")

    def _connected(self) -> bool:
        ncomp, _ = connected_components(self.adjacency(), directed=False)
        return ncomp == 1

    def adjacency(self) -> csr_matrix:
        rows = [u for u, _, _ in self.edges]
        cols = [v for _, v, _ in self.edges]
        vals = [rtt for _, _, rtt in self.edges]
        return csr_matrix((vals, (rows, cols)), shape=(self.n, self.n))


def parse_topology(text: str) -> ProxyGraph:
    """Parse the line-oriented topology format into a validated graph."""
    names: dict[int, str | None] = {}
    edges: list[tuple[int, int, float]] = []
    pairs: set[tuple[int, int]] = set()
    for lineno, raw in enumerate(io.StringIO(text), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        kind = parts[0]
        try:
            if kind == "node":
                if len(parts) not in (2, 3):
                    raise TopologyError("expected 'node <index> [<name>]'", lineno)
                idx = int(parts[1])
                if idx in names:
                    raise TopologyError(f"duplicate node {idx}", lineno)
                names[idx] = parts[2] if len(parts) == 3 else None
            elif kind == "link":
                if len(parts) != 4:
                    raise TopologyError("expected 'link <u> <v> <rtt_ms>'", lineno)
                u, v, rtt = int(parts[1]), int(parts[2]), float(parts[3])
                if u == v:
                    raise TopologyError(f"self-loop on node {u}", lineno)
                if u not in names or v not in names:
                    raise TopologyError(f"link {u}-{v} references undeclared node", lineno)
                key = (min(u, v), max(u, v))
                if key in pairs:
                    raise TopologyError(f"duplicate link {key[0]}-{key[1]}", lineno)
                if not (math.isfinite(rtt) and rtt > 0):
                    raise TopologyError(f"RTT must be positive and finite, got {parts[3]}", lineno)
                pairs.add(key)
                edges.append((u, v, rtt))
            else:
                raise TopologyError(f"unknown directive {kind!r}", lineno)
        except ValueError as exc:
            if isinstance(exc, TopologyError):
                raise
            raise TopologyError(f"syntax error: {exc}", lineno) from None
    if not names:
        raise TopologyError("no nodes declared")
    n = len(names)
    if sorted(names) != list(range(n)):
        raise TopologyError("node indices must be dense 0..n-1")
    return ProxyGraph(n=n, edges=tuple(edges), names=tuple(names[i] for i in range(n)))


def parse_rocketfuel_latencies(text: str) -> ProxyGraph:
    """Build a graph from a Rocketfuel ``latencies.intra`` style file.

    Each line is ``<router-a> <router-b> <delay>``. Router labels are mapped to
    dense indices in order of first appearance; duplicate directed entries
    keep the smaller delay. Delays of zero are bumped to 0.1 ms since the
    matrix requires strictly positive RTTs.
    """
    index: dict[str, int] = {}
    best: dict[tuple[int, int], float] = {}
    for lineno, raw in enumerate(io.StringIO(text), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) < 3:
            raise TopologyError("expected '<a> <b> <delay>'", lineno)
        try:
            delay = float(parts[2])
        except ValueError:
            raise TopologyError(f"bad delay {parts[2]!r}", lineno) from None
        a = index.setdefault(parts[0], len(index))
        b = index.setdefault(parts[1], len(index))
        if a == b:
            continue
        key = (min(a, b), max(a, b))
        delay = max(delay, 0.1)
        best[key] = min(delay, best.get(key, math.inf))
    names = tuple(sorted(index, key=index.__getitem__))
    edges = tuple((u, v, rtt) for (u, v), rtt in sorted(best.items()))
    return ProxyGraph(n=len(index), edges=edges, names=names)


def format_topology(g: ProxyGraph) -> str:
    out = []
    for i, name in enumerate(g.names):
        out.append(f"node {i} {name}" if name else f"node {i}")
    for u, v, rtt in g.edges:
        out.append(f"link {u} {v} {rtt!r}")
    return "\n".join(out) + "\n"


class DistanceMatrix:
    """Symmetric full-mesh RTT matrix in milliseconds.

    The array is copied and made read-only on construction. The triangle
    inequality is not enforced: matrices built from shortest paths satisfy
    it, but measured RTT tables generally do not.
    """

    __slots__ = ("_d",)

    def __init__(self, d):
        arr = np.array(d, dtype=float)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
            raise ValueError("distance matrix must be square")
        n = arr.shape[0]
        if n < 1:
            raise ValueError("distance matrix is empty")
        if not np.all(np.isfinite(arr)):
            raise ValueError("distance matrix has non-finite entries")
        if np.any(np.diag(arr) != 0):
            raise ValueError("distance matrix diagonal must be zero")
        if not np.array_equal(arr, arr.T):
            raise ValueError("distance matrix must be symmetric")
        off = ~np.eye(n, dtype=bool)
        if np.any(arr[off] <= 0):
            raise ValueError("off-diagonal distances must be positive")
        arr.setflags(write=False)
        self._d = arr

    @property
    def n(self) -> int:
        return self._d.shape[0]

    @property
    def array(self) -> np.ndarray:
        return self._d

    def __getitem__(self, ij):
        return float(self._d[ij])

    def __eq__(self, other):
        return isinstance(other, DistanceMatrix) and np.array_equal(self._d, other._d)

    def __hash__(self):
        return hash(self._d.tobytes())

    def __repr__(self):
        return f"DistanceMatrix(n={self.n})"

    def is_metric(self, tol: float = 1e-9) -> bool:
        d = self._d
        via = d[:, :, None] + d[None, :, :]  # via[i, k, j] = d[i,k] + d[k,j]
        return bool(np.all(d <= via.min(axis=1) + tol))

    def with_entry(self, i: int, j: int, rtt: float) -> "DistanceMatrix":
        arr = self._d.copy()
        arr[i, j] = arr[j, i] = rtt
        return DistanceMatrix(arr)

    def submatrix(self, nodes) -> "DistanceMatrix":
        idx = np.asarray(list(nodes), dtype=int)
        return DistanceMatrix(self._d[np.ix_(idx, idx)])

    def to_csv(self) -> str:
        lines = [f"n={self.n}"]
        for row in self._d:
            lines.append(",".join(repr(float(x)) for x in row))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_csv(cls, text: str) -> "DistanceMatrix":
        rows = [ln.strip() for ln in text.splitlines() if ln.strip()]
        if not rows or not rows[0].startswith("n="):
            raise ValueError("distance matrix CSV must start with 'n=<count>'")
        n = int(rows[0][2:])
        body = [[float(x) for x in r.split(",")] for r in rows[1:]]
        if len(body) != n or any(len(r) != n for r in body):
            raise ValueError(f"expected {n} rows of {n} columns")
        return cls(body)


def build_full_mesh(g: ProxyGraph) -> DistanceMatrix:
    """Shortest-path RTT between every pair of locations in ``g``."""
    if g.n == 1:
        return DistanceMatrix([[0.0]])
    d = shortest_path(g.adjacency(), method="D", directed=False)
    # Dijkstra may produce ulp-level asymmetry on ties; keep the smaller value.
    d = np.minimum(d, d.T)
    np.fill_diagonal(d, 0.0)
    return DistanceMatrix(d)


def random_connected_graph(n: int, rng: np.random.Generator, extra_edge_prob: float = 0.2,
                           rtt_range: tuple[float, float] = (1.0, 100.0),
                           integer_rtts: bool = False) -> ProxyGraph:
    """Random spanning tree plus extra edges; used by tests and synthetic benchmarks."""
    edges: dict[tuple[int, int], float] = {}
    order = rng.permutation(n)

    def draw():
        if integer_rtts:
            return float(rng.integers(int(rtt_range[0]), int(rtt_range[1]) + 1))
        return float(rng.uniform(*rtt_range))

    for k in range(1, n):
        u = int(order[k])
        v = int(order[rng.integers(0, k)])
        edges[(min(u, v), max(u, v))] = draw()
    for u in range(n):
        for v in range(u + 1, n):
            if (u, v) not in edges and rng.random() < extra_edge_prob:
                edges[(u, v)] = draw()
    return ProxyGraph(n=n, edges=tuple((u, v, w) for (u, v), w in sorted(edges.items())))
