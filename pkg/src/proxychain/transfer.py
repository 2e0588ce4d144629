"""Slow-start transfer-time model and transfer-size-aware chain lookup."""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

from .pareto import TOL, ParetoFront, ParetoPath


@dataclass(frozen=True)
class TransferModel:
    icw: int = 10
    mss: int = 1460
    max_rounds: int = 16

    def __post_init__(self):
        if self.icw < 1 or self.mss < 1 or self.max_rounds < 1:
            raise ValueError("icw, mss and max_rounds must all be >= 1")

    def round_capacity(self, r: int) -> int:
        """Bytes deliverable in the first ``r`` loss-free slow-start rounds."""
        return self.icw * ((1 << r) - 1) * self.mss


def rounds_for_size(size: int, m: TransferModel = TransferModel()) -> int:
    """Smallest r with icw * (2**r - 1) * mss >= size, clamped to ``m.max_rounds``."""
    if size < 1:
        raise ValueError(f"transfer size must be positive, got {size}")
    r = 1
    while r < m.max_rounds and m.round_capacity(r) < size:
        r += 1
    return r


def chain_time(path: ParetoPath, r: int) -> float:
    """Modeled completion time in ms: half the chain RTT plus r-1 bottleneck RTTs."""
    if r < 1:
        raise ValueError("rounds must be >= 1")
    if path.hop_count < 2:
        raise ValueError("a chain needs at least two nodes")
    return 0.5 * path.length + (r - 1) * path.max_link


def link_chain_time(rtts, r: int) -> float:
    """chain_time for an explicit list of per-hop RTTs."""
    rtts = list(rtts)
    if r < 1 or not rtts:
        raise ValueError("need r >= 1 and at least one link")
    return 0.5 * math.fsum(rtts) + (r - 1) * max(rtts)


def select_chain(entries, r: int) -> ParetoPath:
    """Front member with the smallest modeled time for ``r`` rounds.

    Times within ``TOL`` count as equal; ties go to fewer nodes, then the
    lexicographically smaller node sequence.
    """
    if not entries:
        raise ValueError("empty Pareto front")
    best = None
    best_t = 0.0
    for p in entries:
        t = chain_time(p, r)
        if best is None or t < best_t - TOL or (
                t <= best_t + TOL and (p.hop_count, p.hops) < (best.hop_count, best.hops)):
            best, best_t = p, t
    return best


@dataclass(frozen=True)
class ChainLookupTable:
    """Selected chain per (ingress, egress, rounds)."""

    model: TransferModel
    entries: dict = field(repr=False)  # (i, j, r) -> ParetoPath
    generation: int = 0
    timestamp: float = 0.0

    def lookup(self, i: int, j: int, r: int) -> ParetoPath:
        if r < 1:
            raise ValueError("rounds must be >= 1")
        return self.entries[(i, j, min(r, self.model.max_rounds))]

    def lookup_size(self, i: int, j: int, size: int) -> ParetoPath:
        return self.lookup(i, j, rounds_for_size(size, self.model))

    def pairs(self):
        return sorted({(i, j) for i, j, _ in self.entries})

    def _rows(self) -> dict:
        return {k: (p.hops, p.modeled_ms if isinstance(p, StoredChain) else chain_time(p, k[2]))
                for k, p in self.entries.items()}

    def same_content(self, other: "ChainLookupTable") -> bool:
        """Equal published content; generation and timestamp are ignored."""
        return self.model == other.model and self._rows() == other._rows()

    def to_text(self) -> str:
        m = self.model
        lines = [f"# generation {self.generation} timestamp {self.timestamp!r}",
                 f"# icw {m.icw} mss {m.mss} max_rounds {m.max_rounds}"]
        for (i, j, r) in sorted(self.entries):
            p = self.entries[(i, j, r)]
            ms = p.modeled_ms if isinstance(p, StoredChain) else chain_time(p, r)
            lines.append(f"chain {i} {j} {r} {','.join(map(str, p.hops))} {ms!r}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "ChainLookupTable":
        meta: dict[str, str] = {}
        entries = {}
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                toks = line[1:].split()
                meta.update(zip(toks[::2], toks[1::2]))
                continue
            f = line.split()
            if len(f) != 6 or f[0] != "chain":
                raise ValueError(f"line {lineno}: malformed chain entry")
            i, j, r = int(f[1]), int(f[2]), int(f[3])
            hops = tuple(int(x) for x in f[4].split(","))
            entries[(i, j, r)] = StoredChain(hops, float(f[5]))
        model = TransferModel(int(meta.get("icw", 10)), int(meta.get("mss", 1460)),
                              int(meta.get("max_rounds", 16)))
        return cls(model, entries, int(meta.get("generation", 0)),
                   float(meta.get("timestamp", 0.0)))


@dataclass(frozen=True)
class StoredChain:
    """A chain read back from a table file; only hops and modeled time survive."""

    hops: tuple[int, ...]
    modeled_ms: float

    @property
    def hop_count(self) -> int:
        return len(self.hops)


def build_lookup_table(front: ParetoFront, m: TransferModel = TransferModel(),
                       generation: int = 0, timestamp: float | None = None) -> ChainLookupTable:
    entries = {}
    for (i, j), paths in front.items():
        for r in range(1, m.max_rounds + 1):
            entries[(i, j, r)] = select_chain(paths, r)
    return ChainLookupTable(m, entries, generation,
                            time.time() if timestamp is None else timestamp)
