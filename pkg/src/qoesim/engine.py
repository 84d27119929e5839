"""Deterministic discrete-event core.

Time is kept in integer microseconds so event ordering never depends on
floating-point accumulation.
"""
from __future__ import annotations

import enum
import heapq
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping

import numpy as np

US_PER_S = 1_000_000

# fixed offsets for named RNG sub-streams; new streams get new offsets
_STREAM_OFFSETS = {"arrival": 0, "jitter": 1}


def seconds_to_us(seconds: float) -> int:
    return int(round(seconds * US_PER_S))


def us_to_seconds(us: int) -> float:
    return us / US_PER_S


def substream(seed: int, name: str) -> np.random.Generator:
    """Return the named RNG sub-stream of a run seeded with ``seed``."""
    return np.random.default_rng([int(seed), _STREAM_OFFSETS[name]])


class SimError(Exception):
    pass


class SchedulingInPast(SimError):
    pass


class UnhandledEventKind(SimError):
    pass


class EventKind(enum.IntEnum):
    SESSION_REQUEST = 0
    GOP_BOUNDARY = 1
    PACKET_ARRIVAL = 2
    SERVICE_COMPLETE = 3
    FEEDBACK_DELIVERY = 4
    MEASUREMENT_TICK = 5
    RUN_END = 6


@dataclass(order=True)
class SimEvent:
    fire_at: int
    seq: int
    kind: EventKind = field(compare=False)
    payload: Any = field(compare=False, default=None)
    cancelled: bool = field(compare=False, default=False)


class EventQueue:
    """Min-queue of events keyed by ``(fire_at, seq)``."""

    def __init__(self) -> None:
        self._heap: list[SimEvent] = []
        self._next_seq = 0
        self.now = 0
        self.dispatched = 0

    def __len__(self) -> int:
        return len(self._heap)

    def schedule(self, at: int, kind: EventKind, payload: Any = None) -> SimEvent:
        at = int(at)
        if at < self.now:
            raise SchedulingInPast(f"cannot schedule {kind.name} at {at} us, clock is {self.now} us")
        ev = SimEvent(at, self._next_seq, kind, payload)
        self._next_seq += 1
        heapq.heappush(self._heap, ev)
        return ev

    def peek_time(self) -> int | None:
        return self._heap[0].fire_at if self._heap else None

    def pop(self) -> SimEvent:
        return heapq.heappop(self._heap)

    def run_until(
        self,
        end: int,
        handlers: Mapping[EventKind, Callable[[SimEvent], None]],
        trace: list[tuple[int, int, int]] | None = None,
    ) -> int:
        """Dispatch every event with ``fire_at <= end`` in order and return the clock.

        The clock is left at ``end`` once the horizon is reached; events
        beyond it stay pending.
        """
        heap = self._heap
        while heap and heap[0].fire_at <= end:
            ev = heapq.heappop(heap)
            if ev.cancelled:
                continue
            handler = handlers.get(ev.kind)
            if handler is None:
                raise UnhandledEventKind(ev.kind.name)
            self.now = ev.fire_at
            if trace is not None:
                trace.append((ev.fire_at, ev.seq, int(ev.kind)))
            self.dispatched += 1
            handler(ev)
        self.now = max(self.now, end)
        return self.now
