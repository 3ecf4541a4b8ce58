"""Deterministic discrete-event kernel.

Time base and ordering rules:
- Simulated time is an unsigned 64-bit count of picoseconds. Integer time
  avoids floating-point drift, so a run is bit-reproducible.
- Events are totally ordered by (fire_at, seq) where seq is the insertion
  counter; two events never compare equal, ties resolve in schedule order.
- Cycle counts convert to time with ceiling division: an operation never
  completes earlier than its cycle count implies.

The kernel is single-threaded. One simulation instance owns its kernel,
actors, and all mutable state; independent instances (e.g. sweep points)
never share anything.

Actors expose ``handle(kernel, kind, payload)``. Queue entries are plain
tuples (fire_at, seq, actor_name, kind, payload, handler); the heap only
ever compares (fire_at, seq) because seq is unique.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass

PS_PER_SECOND = 1_000_000_000_000  # 1 THz time base

QUIESCENCE = None  # sentinel limit for run_until


class SimulationError(Exception):
    """Fatal kernel misuse; signals a model bug, not a workload condition."""


@dataclass(frozen=True)
class ClockDomain:
    """A named clock; frequency must divide the 1 THz time base evenly
    for cycle conversions to be exact (4 GHz and 1 GHz both do)."""

    name: str
    frequency_hz: int

    def __post_init__(self):
        if self.frequency_hz <= 0:
            raise ValueError("frequency_hz must be > 0")

    def cycles_to_time(self, n: int) -> int:
        """Picoseconds spanned by n cycles, rounded up (never optimistic)."""
        return -(-n * PS_PER_SECOND // self.frequency_hz)

    def ns(self, t_ns: float) -> int:
        """Convert nanoseconds (possibly fractional) to picoseconds."""
        return round(t_ns * 1000)


def cycles_to_time(n: int, domain: ClockDomain) -> int:
    return domain.cycles_to_time(n)


class SimKernel:
    """Event queue plus actor registry.

    The optional trace records one ``(time_ps, actor, kind)`` tuple per
    delivered event, which is the unit of replay diffing.
    """

    def __init__(self, trace: bool = False):
        self._queue: list[tuple] = []
        self._seq = 0
        self._actors: dict[str, object] = {}
        self.now = 0
        self.events_processed = 0
        self.trace: list[tuple[int, str, str]] | None = [] if trace else None

    def register(self, name: str, actor: object) -> None:
        if name in self._actors:
            raise SimulationError(f"actor {name!r} already registered")
        self._actors[name] = actor

    def schedule(self, delay_ps: int, target: str, kind: str, payload=None) -> None:
        self.schedule_at(self.now + delay_ps, target, kind, payload)

    def schedule_at(self, fire_at: int, target: str, kind: str, payload=None) -> None:
        if fire_at < self.now:
            raise SimulationError(
                f"event {kind!r} scheduled in the past ({fire_at} < {self.now})")
        actor = self._actors.get(target)
        if actor is None:
            raise SimulationError(f"event for unknown actor {target!r}")
        heapq.heappush(self._queue,
                       (fire_at, self._seq, target, kind, payload, actor.handle))
        self._seq += 1

    def run_until(self, limit: int | None = QUIESCENCE) -> int:
        """Process events until the queue drains (quiescence) or until the
        next event would fire past ``limit``. Returns the time of the last
        processed event (0 if nothing ran)."""
        queue = self._queue
        trace = self.trace
        pop = heapq.heappop
        last = self.now if self.events_processed else 0
        processed = 0
        while queue:
            if limit is not QUIESCENCE and queue[0][0] > limit:
                break
            fire_at, _, name, kind, payload, handler = pop(queue)
            self.now = fire_at
            if trace is not None:
                trace.append((fire_at, name, kind))
            handler(self, kind, payload)
            processed += 1
            last = fire_at
        self.events_processed += processed
        return last

    @property
    def pending(self) -> int:
        return len(self._queue)
