"""Pareto-optimal proxy paths under (total length, maximum link RTT).

Both algorithms add the full-mesh links one at a time in order of
nondecreasing RTT and maintain all-pairs shortest paths over the links
added so far. Whenever the shortest path between a pair starts using the
link just added, that path is the shortest one whose largest link is the
new link's RTT, so it is appended to the pair's front.

``pareto_baseline`` evaluates the recursion for every pair on every link.
``pareto_optimized`` only looks at pairs (i, j) with i in B_h and j in A_h,
where A_h (B_h) holds the nodes whose shortest path to the link's first
(second) endpoint goes over the link. No other pair can start using the
link, and A_h and B_h are always disjoint.

Path comparisons are lexicographic on (length, node count) with an
absolute length tolerance of ``TOL`` milliseconds.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator, NamedTuple

import numpy as np

from .topology import DistanceMatrix

TOL = 1e-9
_NO_PATH_HOPS = 1 << 30


class Link(NamedTuple):
    a: int
    b: int
    rtt: float


def sorted_links(d: DistanceMatrix) -> list[Link]:
    """All unordered pairs sorted by (rtt, lower endpoint, higher endpoint)."""
    n = d.n
    iu, ju = np.triu_indices(n, k=1)
    rtts = d.array[iu, ju]
    order = np.lexsort((ju, iu, rtts))
    return [Link(int(iu[k]), int(ju[k]), float(rtts[k])) for k in order]


def path_length(hops, d: DistanceMatrix) -> float:
    arr = d.array
    return math.fsum(arr[u, v] for u, v in zip(hops, hops[1:]))


def path_max_link(hops, d: DistanceMatrix) -> float:
    arr = d.array
    return max((float(arr[u, v]) for u, v in zip(hops, hops[1:])), default=0.0)


@dataclass(frozen=True)
class ParetoPath:
    hops: tuple[int, ...]
    length: float
    max_link: float

    @classmethod
    def from_hops(cls, hops, d: DistanceMatrix) -> "ParetoPath":
        hops = tuple(int(h) for h in hops)
        if len(hops) < 2:
            raise ValueError("a path needs at least two nodes")
        if len(set(hops)) != len(hops):
            raise ValueError(f"path {hops} repeats a node")
        return cls(hops, path_length(hops, d), path_max_link(hops, d))

    @property
    def hop_count(self) -> int:
        return len(self.hops)

    @property
    def source(self) -> int:
        return self.hops[0]

    @property
    def target(self) -> int:
        return self.hops[-1]

    def reversed(self) -> "ParetoPath":
        return ParetoPath(self.hops[::-1], self.length, self.max_link)

    def key(self) -> tuple:
        return (self.max_link, self.length, self.hop_count, self.hops)


class ParetoFront:
    """Per ordered pair, paths sorted by increasing max link / decreasing length."""

    def __init__(self, n: int, fronts: dict[tuple[int, int], tuple[ParetoPath, ...]],
                 stats: dict | None = None):
        self.n = n
        self._fronts = fronts
        self.stats = dict(stats or {})

    def __getitem__(self, ij: tuple[int, int]) -> tuple[ParetoPath, ...]:
        return self._fronts[ij]

    def pairs(self) -> Iterator[tuple[int, int]]:
        return iter(sorted(self._fronts))

    def items(self):
        for ij in self.pairs():
            yield ij, self._fronts[ij]

    def __len__(self) -> int:
        return len(self._fronts)

    def __eq__(self, other) -> bool:
        if not isinstance(other, ParetoFront):
            return NotImplemented
        return self.n == other.n and self._fronts == other._fronts

    def total_entries(self) -> int:
        return sum(len(v) for v in self._fronts.values())

    def to_text(self) -> str:
        lines = []
        for (i, j), entries in self.items():
            for p in entries:
                path = ",".join(map(str, p.hops))
                lines.append(f"pair {i} {j} maxlink {p.max_link!r} length {p.length!r} "
                             f"hops {p.hop_count} path {path}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "ParetoFront":
        fronts: dict[tuple[int, int], list[ParetoPath]] = {}
        nodes = set()
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            f = line.split()
            if len(f) != 11 or f[0] != "pair" or f[3] != "maxlink" or f[5] != "length" \
                    or f[7] != "hops" or f[9] != "path":
                raise ValueError(f"line {lineno}: malformed front entry")
            i, j = int(f[1]), int(f[2])
            hops = tuple(int(x) for x in f[10].split(","))
            if len(hops) != int(f[8]) or hops[0] != i or hops[-1] != j:
                raise ValueError(f"line {lineno}: path inconsistent with pair/hops")
            fronts.setdefault((i, j), []).append(ParetoPath(hops, float(f[6]), float(f[4])))
            nodes.update(hops)
        n = max(nodes) + 1 if nodes else 0
        return cls(n, {k: tuple(v) for k, v in fronts.items()})


class PathDP:
    """Incremental all-pairs shortest paths over links added in sorted order.

    ``D``/``H`` hold lengths and node counts of the current shortest paths
    and are symmetric. ``paths[i][j]`` is the lexicographically smallest node
    sequence among the (length, node count)-optimal i->j paths, so it is not
    always the reverse of ``paths[j][i]``.
    """

    def __init__(self, d: DistanceMatrix, check_invariants: bool = False):
        if d.n < 2:
            raise ValueError("need at least two locations")
        self.d = d
        n = self.n = d.n
        self.links = sorted_links(d)
        self.h = 0
        self.D = np.full((n, n), np.inf)
        np.fill_diagonal(self.D, 0.0)
        self.H = np.full((n, n), _NO_PATH_HOPS, dtype=np.int64)
        np.fill_diagonal(self.H, 1)
        self.paths: list[list[tuple[int, ...] | None]] = [
            [(i,) if i == j else None for j in range(n)] for i in range(n)]
        # fronts[(i, j)] = list of [dp_length, ParetoPath]
        self.fronts: dict[tuple[int, int], list[list]] = {
            (i, j): [] for i in range(n) for j in range(n) if i != j}
        self.check_invariants = check_invariants
        self.pair_checks = 0
        self.updates = 0
        self._upper = np.triu(np.ones((n, n), dtype=bool), k=1)

    @property
    def done(self) -> bool:
        return self.h >= len(self.links)

    def ab_sets_from_recursion(self, link: Link) -> tuple[np.ndarray, np.ndarray]:
        """A_h, B_h for ``link``, evaluated on the state before it is added.

        p is in A_h when going p -> ... -> b -> a is at least as good as the
        best p -> a path without the link. Ties count as members: with the
        lexicographic tie-break a pair may switch to an equally long path
        over the new link, and that pair must still land in B_h x A_h.
        """
        a, b, w = link
        D, H = self.D, self.H
        in_a = _lex_not_worse(D[:, b] + w, H[:, b] + 1, D[:, a], H[:, a])
        in_b = _lex_not_worse(D[:, a] + w, H[:, a] + 1, D[:, b], H[:, b])
        return np.flatnonzero(in_a), np.flatnonzero(in_b)

    def step_baseline(self) -> None:
        a, b, w = link = self.links[self.h]
        D, H = self.D, self.H
        n = self.n
        if self.check_invariants:
            self._assert_disjoint(link)
        c1 = (D[:, a][:, None] + w) + D[b, :][None, :]
        h1 = H[:, a][:, None] + H[b, :][None, :]
        c2 = (D[:, b][:, None] + w) + D[a, :][None, :]
        h2 = H[:, b][:, None] + H[a, :][None, :]
        use2 = _lex_better(c2, h2, c1, h1)
        cand = np.where(use2, c2, c1)
        hops = np.where(use2, h2, h1)
        self.pair_checks += n * (n - 1) // 2
        better = _lex_better(cand, hops, D, H) & self._upper
        tied = _lex_tied(cand, hops, D, H) & self._upper
        for i, j in zip(*(x.tolist() for x in np.nonzero(better | tied))):
            if use2[i, j]:
                x, y = b, a
            else:
                x, y = a, b
            self._relax(i, j, x, y, float(cand[i, j]), int(hops[i, j]), bool(better[i, j]), w)
        self.h += 1

    def step_optimized(self) -> None:
        a, b, w = link = self.links[self.h]
        D, H = self.D, self.H
        A, B = self.ab_sets_from_recursion(link)
        if self.check_invariants:
            assert np.intersect1d(A, B).size == 0, f"A_h and B_h intersect at h={self.h}"
        self.h += 1
        if A.size == 0 or B.size == 0:
            return
        self.pair_checks += A.size * B.size
        lower_first = B[:, None] < A[None, :]
        # (i in B) -> a -> b -> (j in A). Evaluate from the lower-indexed end
        # so the float result matches the baseline bit for bit.
        fwd = (D[B, a][:, None] + w) + D[b, A][None, :]
        bwd = (D[A, b][None, :] + w) + D[B, a][:, None]
        cand = np.where(lower_first, fwd, bwd)
        hops = H[B, a][:, None] + H[b, A][None, :]
        cur = D[np.ix_(B, A)]
        cur_h = H[np.ix_(B, A)]
        better = _lex_better(cand, hops, cur, cur_h)
        tied = _lex_tied(cand, hops, cur, cur_h)
        for r, c in zip(*(x.tolist() for x in np.nonzero(better | tied))):
            i, j = int(B[r]), int(A[c])
            if i < j:
                self._relax(i, j, a, b, float(cand[r, c]), int(hops[r, c]), bool(better[r, c]), w)
            else:
                self._relax(j, i, b, a, float(cand[r, c]), int(hops[r, c]), bool(better[r, c]), w)

    def _relax(self, i: int, j: int, x: int, y: int, length: float, hops: int,
               strict: bool, w: float) -> None:
        """Offer i -> x -> y -> j (and its mirror j -> y -> x -> i) for pair i < j.

        ``strict`` means the (length, node count) key improves; otherwise it
        ties and only a lexicographically smaller sequence is taken.
        """
        P = self.paths
        fwd = P[i][x] + P[y][j]
        bwd = P[j][y] + P[x][i]
        if strict:
            self.D[i, j] = self.D[j, i] = length
            self.H[i, j] = self.H[j, i] = hops
            self._take(i, j, length, fwd, w)
            self._take(j, i, length, bwd, w)
            return
        if fwd < P[i][j]:
            self._take(i, j, length, fwd, w)
        if bwd < P[j][i]:
            self._take(j, i, length, bwd, w)

    def _take(self, i: int, j: int, length: float, path: tuple, w: float) -> None:
        """Install a new best i->j path that uses the current link of RTT ``w``."""
        self.updates += 1
        self.paths[i][j] = path
        front = self.fronts[(i, j)]
        if front:
            last_len, last = front[-1]
            if length < last_len - TOL:
                if last.max_link == w:
                    front.pop()
            elif last.max_link == w:
                # Same bottleneck and length, better tie-break.
                front.pop()
            else:
                # Equal length at a larger bottleneck is dominated.
                return
        front.append([length, ParetoPath.from_hops(path, self.d)])

    def _assert_disjoint(self, link: Link) -> None:
        A, B = self.ab_sets_from_recursion(link)
        assert np.intersect1d(A, B).size == 0, f"A_h and B_h intersect at h={self.h}"

    def run(self, method: str = "optimized") -> "PathDP":
        step = {"optimized": self.step_optimized, "baseline": self.step_baseline}[method]
        while not self.done:
            step()
        return self

    def front(self) -> ParetoFront:
        out = {ij: tuple(p for _, p in entries) for ij, entries in self.fronts.items()}
        stats = {"links": len(self.links), "iterations": self.h,
                 "pair_checks": self.pair_checks, "updates": self.updates}
        return ParetoFront(self.n, out, stats)


def _lex_better(len_a, hops_a, len_b, hops_b):
    """Elementwise (len_a, hops_a) < (len_b, hops_b) with length tolerance."""
    return (len_a < len_b - TOL) | ((len_a <= len_b + TOL) & (hops_a < hops_b))


def _lex_tied(len_a, hops_a, len_b, hops_b):
    with np.errstate(invalid="ignore"):
        close = np.abs(len_a - len_b) <= TOL
    return close & (hops_a == hops_b)


def _lex_not_worse(len_a, hops_a, len_b, hops_b):
    return (len_a < len_b - TOL) | ((len_a <= len_b + TOL) & (hops_a <= hops_b))


def compute_ab_sets(dp: PathDP, h: int) -> tuple[set[int], set[int]]:
    """A_h and B_h evaluated on a state that has processed links 1..h.

    ``h`` is 1-based. After link h = {a, b} is in, p belongs to A_h when
    the detour p -> ... -> b -> a is as short (and has as few nodes) as the
    best p -> a path, i.e. some shortest path from p to a uses the link.
    """
    if dp.h != h:
        raise ValueError(f"DP state has processed {dp.h} links, expected {h}")
    a, b, w = dp.links[h - 1]
    D, H = dp.D, dp.H
    in_a = _lex_tied(D[:, b] + w, H[:, b] + 1, D[:, a], H[:, a])
    in_b = _lex_tied(D[:, a] + w, H[:, a] + 1, D[:, b], H[:, b])
    return set(np.flatnonzero(in_a).tolist()), set(np.flatnonzero(in_b).tolist())


def pareto_baseline(d: DistanceMatrix, check_invariants: bool = False) -> ParetoFront:
    return PathDP(d, check_invariants).run("baseline").front()


def pareto_optimized(d: DistanceMatrix, check_invariants: bool = False) -> ParetoFront:
    return PathDP(d, check_invariants).run("optimized").front()


def _dense_dijkstra(w: np.ndarray, src: int, dst: int) -> tuple[int, ...]:
    """Shortest (length, node count) path on a dense weight matrix; inf = no edge."""
    n = w.shape[0]
    dist = np.full(n, np.inf)
    hops = np.full(n, _NO_PATH_HOPS, dtype=np.int64)
    pred = np.full(n, -1, dtype=np.int64)
    done = np.zeros(n, dtype=bool)
    dist[src], hops[src] = 0.0, 1
    for _ in range(n):
        cand = np.where(done, np.inf, dist)
        best = cand.min()
        if not np.isfinite(best):
            break
        # Among near-ties pick fewer hops, then lower index.
        tied = np.flatnonzero((cand <= best + TOL) & ~done)
        u = int(tied[np.argmin(hops[tied])])
        done[u] = True
        if u == dst:
            break
        nd = dist[u] + w[u]
        nh = hops[u] + 1
        better = ~done & np.isfinite(w[u]) & _lex_better(nd, nh, dist, hops)
        dist[better] = nd[better]
        hops[better] = nh
        pred[better] = u
    if not done[dst]:
        raise ValueError(f"no path {src}->{dst}")
    path = [dst]
    while path[-1] != src:
        path.append(int(pred[path[-1]]))
    return tuple(reversed(path))


def shortest_path(d: DistanceMatrix, i: int, j: int) -> ParetoPath:
    """Minimum-length path (ties: fewer nodes) by Dijkstra over the full mesh."""
    w = d.array.copy()
    np.fill_diagonal(w, np.inf)
    return ParetoPath.from_hops(_dense_dijkstra(w, i, j), d)


def bottleneck_value(d: DistanceMatrix, i: int, j: int) -> float:
    """Smallest achievable maximum link RTT between i and j (widest-path Prim)."""
    arr = d.array
    n = d.n
    best = np.full(n, np.inf)
    done = np.zeros(n, dtype=bool)
    best[i] = 0.0
    for _ in range(n):
        u = int(np.argmin(np.where(done, np.inf, best)))
        done[u] = True
        if u == j:
            return float(best[j])
        relax = np.maximum(best[u], arr[u])
        upd = ~done & (relax < best)
        best[upd] = relax[upd]
    return float(best[j])


def minimax_path(d: DistanceMatrix, i: int, j: int) -> ParetoPath:
    """Path minimizing the largest link RTT; ties by length, then node count."""
    limit = bottleneck_value(d, i, j)
    w = np.where(d.array <= limit, d.array, np.inf)
    np.fill_diagonal(w, np.inf)
    return ParetoPath.from_hops(_dense_dijkstra(w, i, j), d)
