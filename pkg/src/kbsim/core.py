"""Deterministic discrete-event engine.

Time is measured in integer ticks of 1 picosecond. All model components
share one engine instance and one event loop; the only ordering guarantee
they may rely on is (fire_at, insertion sequence), which makes every run
with the same configuration and seed bit-identical.
"""

from __future__ import annotations

import heapq
import random
from dataclasses import dataclass

# Tick resolution: 1 tick == 1 picosecond.
PS = 1
NS = 1_000
US = 1_000_000
MS = 1_000_000_000
SEC = 1_000_000_000_000


def cycles_to_ps(cycles: int, freq_hz: int) -> int:
    """Convert a cycle count to picoseconds at the given core frequency.

    Integer arithmetic so that identical runs stay bit-identical.
    """
    return cycles * SEC // freq_hz


class SimulationError(Exception):
    """Fatal contract violation inside the simulation."""


@dataclass(slots=True)
class Event:
    fire_at: int
    sequence: int
    target: str
    kind: str
    payload: object = None


@dataclass
class SimClockStats:
    events_processed: int
    final_tick: int


class Engine:
    """Single-threaded event loop with a seeded random source.

    Components draw reproducible sub-streams with :meth:`rng`, keyed by a
    stable component id, so adding or reordering components does not
    perturb each other's randomness.
    """

    def __init__(self, seed: int = 0):
        self.seed = seed
        self._now = 0
        self._seq = 0
        self._heap = []  # (fire_at, seq, fn, event)
        self._finished = False
        self.events_processed = 0
        self.trace = None  # set to [] to record (fire_at, seq, target, kind)

    def now(self) -> int:
        return self._now

    def rng(self, component_id: str) -> random.Random:
        return random.Random(f"{self.seed}/{component_id}")

    def schedule(self, delay: int, fn, target: str = "", kind: str = "",
                 payload=None) -> int:
        if self._finished:
            raise SimulationError("schedule() after engine shutdown")
        if delay < 0:
            raise SimulationError(f"negative delay {delay}")
        self._seq += 1
        ev = Event(self._now + delay, self._seq, target, kind, payload)
        heapq.heappush(self._heap, (ev.fire_at, ev.sequence, fn, ev))
        return ev.sequence

    def run_until(self, limit: int) -> SimClockStats:
        if limit < self._now:
            raise SimulationError(f"run_until({limit}) before now={self._now}")
        heap = self._heap
        trace = self.trace
        while heap and heap[0][0] <= limit:
            fire_at, seq, fn, ev = heapq.heappop(heap)
            self._now = fire_at
            self.events_processed += 1
            if trace is not None:
                trace.append((fire_at, seq, ev.target, ev.kind))
            fn(ev)
        self._now = limit
        return SimClockStats(self.events_processed, self._now)

    def run(self) -> SimClockStats:
        """Drain the queue completely; the clock ends on the last event."""
        heap = self._heap
        trace = self.trace
        while heap:
            fire_at, seq, fn, ev = heapq.heappop(heap)
            self._now = fire_at
            self.events_processed += 1
            if trace is not None:
                trace.append((fire_at, seq, ev.target, ev.kind))
            fn(ev)
        return SimClockStats(self.events_processed, self._now)

    def shutdown(self):
        self._finished = True
