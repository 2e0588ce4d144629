"""Single-threaded discrete-event loop with deterministic tie ordering."""
from __future__ import annotations

import heapq
import itertools


class SimulationDiverged(RuntimeError):
    """The event cap was hit before the run finished."""


class Timer:
    __slots__ = ("time", "cancelled")

    def __init__(self, time: float):
        self.time = time
        self.cancelled = False

    def cancel(self) -> None:
        self.cancelled = True


class EventLoop:
    """Events fire in (time, insertion order); callbacks may schedule more."""

    def __init__(self, max_events: int = 5_000_000):
        self.now = 0.0
        self.max_events = max_events
        self.processed = 0
        self._queue: list = []
        self._counter = itertools.count()
        self._stopped = False

    def at(self, time: float, fn, *args) -> Timer:
        if time < self.now:
            raise ValueError(f"cannot schedule in the past ({time} < {self.now})")
        timer = Timer(time)
        heapq.heappush(self._queue, (time, next(self._counter), timer, fn, args))
        return timer

    def after(self, delay: float, fn, *args) -> Timer:
        return self.at(self.now + delay, fn, *args)

    def stop(self) -> None:
        self._stopped = True

    def pending(self) -> int:
        return sum(1 for entry in self._queue if not entry[2].cancelled)

    def run(self, until: float | None = None) -> float:
        self._stopped = False
        q = self._queue
        while q and not self._stopped:
            time, _, timer, fn, args = q[0]
            if until is not None and time > until:
                self.now = until
                break
            heapq.heappop(q)
            if timer.cancelled:
                continue
            self.now = time
            self.processed += 1
            if self.processed > self.max_events:
                raise SimulationDiverged(f"event cap of {self.max_events} exceeded at t={time:.3f} ms")
            fn(*args)
        return self.now
