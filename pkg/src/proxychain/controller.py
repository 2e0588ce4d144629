"""Live distance matrix, threshold-filtered updates and table publication."""
from __future__ import annotations

import configparser
import logging
import os
import queue
import socketserver
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .pareto import ParetoPath, pareto_optimized
from .topology import DistanceMatrix
from .transfer import ChainLookupTable, TransferModel, build_lookup_table, rounds_for_size

log = logging.getLogger(__name__)


class ControllerError(ValueError):
    pass


@dataclass(frozen=True)
class MeasurementUpdate:
    i: int
    j: int
    rtt_ms: float
    timestamp: float = 0.0

    def __post_init__(self):
        if self.i == self.j:
            raise ControllerError("update endpoints must differ")
        if not self.rtt_ms > 0 or not np.isfinite(self.rtt_ms):
            raise ControllerError(f"rtt must be positive and finite, got {self.rtt_ms}")

    @classmethod
    def parse(cls, line: str, timestamp: float = 0.0) -> "MeasurementUpdate":
        """Parse one ``rtt <i> <j> <ms>`` line."""
        f = line.split()
        if len(f) != 4 or f[0] != "rtt":
            raise ControllerError(f"expected 'rtt <i> <j> <ms>', got {line.strip()!r}")
        try:
            return cls(int(f[1]), int(f[2]), float(f[3]), timestamp)
        except ValueError as exc:
            raise ControllerError(f"bad number in {line.strip()!r}") from exc


@dataclass(frozen=True)
class ControllerConfig:
    recompute_period_s: float = 300.0
    update_threshold: float = 0.10
    abs_floor_ms: float = 1.0
    dirty_pair_trigger: int | None = None  # None: node count
    budget_s: float | None = None  # None: the period
    steering: dict = field(default_factory=dict)  # edge node -> LoP node

    def __post_init__(self):
        if not self.recompute_period_s > 0:
            raise ControllerError("recompute period must be positive")
        if not 0 < self.update_threshold < 1:
            raise ControllerError("update threshold must lie in (0, 1)")
        if self.abs_floor_ms < 0:
            raise ControllerError("absolute floor must be >= 0")
        if self.dirty_pair_trigger is not None and self.dirty_pair_trigger < 1:
            raise ControllerError("dirty pair trigger must be >= 1")
        for edge, lop in self.steering.items():
            if edge == lop:
                raise ControllerError(f"node {edge} steered to itself")
            if lop in self.steering:
                raise ControllerError(f"steering target {lop} is itself steered")


def apply_update(live: np.ndarray, u: MeasurementUpdate, cfg: ControllerConfig) -> bool:
    """Overwrite d[i][j] and d[j][i] if the change clears the threshold.

    ``live`` is the controller's mutable matrix; returns whether it changed.
    """
    n = live.shape[0]
    if not (0 <= u.i < n and 0 <= u.j < n):
        raise ControllerError(f"unknown node in update ({u.i}, {u.j}); n={n}")
    old = live[u.i, u.j]
    if abs(u.rtt_ms - old) <= max(cfg.update_threshold * old, cfg.abs_floor_ms):
        return False
    live[u.i, u.j] = live[u.j, u.i] = u.rtt_ms
    return True


class TablePublisher:
    """Writes ``table.<generation>.txt`` plus a ``current`` pointer file.

    Both writes go through a temporary file and ``os.replace``, so a reader
    following ``current`` never sees a partial table.
    """

    POINTER = "current"

    def __init__(self, directory: str | os.PathLike):
        self.dir = Path(directory)
        self.dir.mkdir(parents=True, exist_ok=True)

    @staticmethod
    def _atomic_write(path: Path, text: str) -> None:
        tmp = path.with_name(f".{path.name}.tmp")
        tmp.write_text(text)
        os.replace(tmp, path)

    def publish(self, table: ChainLookupTable) -> Path:
        path = self.dir / f"table.{table.generation}.txt"
        self._atomic_write(path, table.to_text())
        self._atomic_write(self.dir / self.POINTER, path.name + "\n")
        return path

    def current_path(self) -> Path | None:
        ptr = self.dir / self.POINTER
        if not ptr.exists():
            return None
        return self.dir / ptr.read_text().strip()

    def read_current(self) -> ChainLookupTable | None:
        p = self.current_path()
        return ChainLookupTable.from_text(p.read_text()) if p else None


def _remap(table: ChainLookupTable, nodes: list[int]) -> ChainLookupTable:
    """Translate a table built on a sub-matrix back to global node ids."""
    entries = {}
    for (i, j, r), p in table.entries.items():
        hops = tuple(nodes[h] for h in p.hops)
        entries[(nodes[i], nodes[j], r)] = ParetoPath(hops, p.length, p.max_link)
    return ChainLookupTable(table.model, entries, table.generation, table.timestamp)


class Controller:
    """One writer (ingestion and recompute), any number of readers.

    Readers call :meth:`current` or :meth:`lookup`; they get whatever table
    was last swapped in, never a partially built one.
    """

    def __init__(self, d: DistanceMatrix, cfg: ControllerConfig = ControllerConfig(),
                 model: TransferModel = TransferModel(), publisher: TablePublisher | None = None,
                 clock=time.monotonic):
        for edge, lop in cfg.steering.items():
            if not (0 <= edge < d.n and 0 <= lop < d.n):
                raise ControllerError(f"steering {edge}->{lop} outside 0..{d.n - 1}")
        self.cfg = cfg
        self.model = model
        self.publisher = publisher
        self.clock = clock
        self.live = d.array.copy()
        self.dirty: set[tuple[int, int]] = set()
        self.generation = 0
        self.violations = 0
        self.last_cycle_s = 0.0
        self._table: ChainLookupTable | None = None
        self._last_recompute = clock()
        self.updates_seen = 0
        self.updates_applied = 0

    @property
    def n(self) -> int:
        return self.live.shape[0]

    @property
    def dirty_trigger(self) -> int:
        return self.cfg.dirty_pair_trigger or self.n

    def submit(self, u: MeasurementUpdate) -> bool:
        self.updates_seen += 1
        changed = apply_update(self.live, u, self.cfg)
        if changed:
            self.updates_applied += 1
            self.dirty.add((min(u.i, u.j), max(u.i, u.j)))
        return changed

    def ingest_line(self, line: str) -> bool | None:
        line = line.strip()
        if not line or line.startswith("#"):
            return None
        return self.submit(MeasurementUpdate.parse(line, time.time()))

    def snapshot(self) -> DistanceMatrix:
        return DistanceMatrix(self.live.copy())

    def due(self, now: float | None = None) -> bool:
        now = self.clock() if now is None else now
        return (now - self._last_recompute >= self.cfg.recompute_period_s
                or len(self.dirty) >= self.dirty_trigger)

    def recompute_cycle(self) -> ChainLookupTable:
        """Recompute on a snapshot and swap the new table in."""
        snap = self.snapshot()
        self.dirty.clear()
        started = time.perf_counter()
        core = [k for k in range(self.n) if k not in self.cfg.steering]
        sub = snap if len(core) == self.n else snap.submatrix(core)
        table = build_lookup_table(pareto_optimized(sub), self.model,
                                   generation=self.generation + 1, timestamp=time.time())
        if len(core) != self.n:
            table = _remap(table, core)
        self.last_cycle_s = time.perf_counter() - started
        budget = self.cfg.budget_s if self.cfg.budget_s is not None else self.cfg.recompute_period_s
        if self.last_cycle_s > budget:
            self.violations += 1
            log.warning("recompute took %.3f s, over the %.3f s budget", self.last_cycle_s, budget)
        self.generation = table.generation
        self._table = table  # atomic reference swap
        self._last_recompute = self.clock()
        if self.publisher:
            self.publisher.publish(table)
        log.info("published generation %d (%.3f s)", table.generation, self.last_cycle_s)
        return table

    def current(self) -> ChainLookupTable | None:
        return self._table

    def lookup(self, i: int, j: int, size: int) -> tuple[int, ...]:
        """Full chain for a transfer, including statically steered first/last hops."""
        table = self._table
        if table is None:
            raise ControllerError("no table published yet")
        a = self.cfg.steering.get(i, i)
        b = self.cfg.steering.get(j, j)
        core = (a,) if a == b else table.lookup(a, b, rounds_for_size(size, table.model)).hops
        hops = [i] if i != a else []
        hops += core
        if j != b:
            hops.append(j)
        return tuple(hops)

    # -- daemon mode -----------------------------------------------------
    def serve(self, lines: "queue.Queue[str | None]", stop: threading.Event,
              max_cycles: int | None = None) -> int:
        """Process queued update lines and recompute when due.

        A ``None`` item marks end of input. Returns the number of
        recompute cycles run (the startup cycle included).
        """
        cycles = 0
        self.recompute_cycle()
        cycles += 1
        eof = False
        while not stop.is_set() and (max_cycles is None or cycles < max_cycles):
            wait = max(0.0, self._last_recompute + self.cfg.recompute_period_s - self.clock())
            if eof:
                stop.wait(wait)
            else:
                try:
                    item = lines.get(timeout=wait)
                except queue.Empty:
                    pass
                else:
                    if item is None:
                        eof = True
                    else:
                        try:
                            self.ingest_line(item)
                        except ControllerError as exc:
                            log.warning("ignored update: %s", exc)
            if self.due():
                self.recompute_cycle()
                cycles += 1
        return cycles


def _feed_stream(stream, q: "queue.Queue[str | None]") -> None:
    for line in stream:
        q.put(line)
    q.put(None)


class _UpdateHandler(socketserver.StreamRequestHandler):
    def handle(self):
        for raw in self.rfile:
            self.server.updates.put(raw.decode("utf-8", "replace"))


def start_socket_listener(host: str, port: int, q: "queue.Queue[str | None]"):
    """Accept newline-delimited updates on a local TCP socket."""
    server = socketserver.ThreadingTCPServer((host, port), _UpdateHandler)
    server.daemon_threads = True
    server.updates = q
    threading.Thread(target=server.serve_forever, daemon=True).start()
    return server


@dataclass(frozen=True)
class DaemonConfig:
    matrix_source: Path
    out_dir: Path
    controller: ControllerConfig
    model: TransferModel
    updates: str | None = None  # file path, "-" for stdin, or None
    listen: tuple[str, int] | None = None
    max_cycles: int | None = None


def load_daemon_config(path: str | os.PathLike) -> DaemonConfig:
    """Read a ``[controller]`` INI file; relative paths resolve against it."""
    path = Path(path)
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",))
    try:
        if not cp.read(path):
            raise ControllerError(f"cannot read config {path}")
        s = cp["controller"]
    except (configparser.Error, KeyError) as exc:
        raise ControllerError(f"{path}: {exc}") from exc
    base = path.parent

    def rel(p):
        return p if p == "-" else (base / p)

    if "topology" in s:
        source = rel(s["topology"])
    elif "matrix" in s:
        source = rel(s["matrix"])
    else:
        raise ControllerError("config needs 'topology' or 'matrix'")
    steering = {}
    for item in s.get("steering", "").replace(",", " ").split():
        edge, _, lop = item.partition(":")
        steering[int(edge)] = int(lop)
    listen = None
    if s.get("listen"):
        host, _, port = s["listen"].rpartition(":")
        listen = (host or "127.0.0.1", int(port))
    try:
        trig = s.get("dirty_pair_trigger")
        budget = s.get("budget_s")
        ccfg = ControllerConfig(
            recompute_period_s=s.getfloat("recompute_period_s", 300.0),
            update_threshold=s.getfloat("update_threshold", 0.10),
            abs_floor_ms=s.getfloat("abs_floor_ms", 1.0),
            dirty_pair_trigger=int(trig) if trig else None,
            budget_s=float(budget) if budget else None,
            steering=steering)
        model = TransferModel(s.getint("icw", 10), s.getint("mss", 1460), s.getint("max_rounds", 16))
        max_cycles = s.getint("max_cycles") if s.get("max_cycles") else None
    except ValueError as exc:
        raise ControllerError(str(exc)) from exc
    updates = s.get("updates")
    return DaemonConfig(matrix_source=Path(source), out_dir=rel(s.get("out_dir", "tables")),
                        controller=ccfg, model=model,
                        updates=str(rel(updates)) if updates and updates != "-" else updates,
                        listen=listen, max_cycles=max_cycles)
