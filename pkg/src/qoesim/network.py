"""Shared bottleneck link of the dumbbell: drop-tail FIFO with threshold ECN."""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass

from .engine import US_PER_S, seconds_to_us
from .source import GopFeedback


@dataclass(frozen=True)
class LinkConfig:
    capacity: float  # bits/s
    queue_capacity: int = 50  # packets
    ecn_threshold: float = 0.65  # fraction of queue_capacity
    one_way_delay: float = 0.010  # seconds

    def __post_init__(self):
        if not self.capacity > 0:
            raise ValueError("link capacity must be positive")
        if self.queue_capacity < 1:
            raise ValueError("queue_capacity must be >= 1")
        if not 0 < self.ecn_threshold <= 1:
            raise ValueError("ecn_threshold must lie in (0, 1]")
        if self.one_way_delay < 0:
            raise ValueError("one_way_delay must be >= 0")

    @property
    def mark_at(self) -> int:
        return math.ceil(self.ecn_threshold * self.queue_capacity)


@dataclass(slots=True)
class Packet:
    session_id: int
    gop_ordinal: int
    frame_index: int
    size: int
    seq: int = 0
    marked: bool = False


class BottleneckLink:
    """FIFO queue served at link capacity.

    ``occupancy`` counts the packet in service as well as the waiting ones.
    Byte counters: every offered packet adds to ``bytes_arrived``; it later
    lands in exactly one of ``bytes_dropped`` or ``bytes_delivered``.
    """

    def __init__(self, cfg: LinkConfig):
        self.cfg = cfg
        self.queue: deque[Packet] = deque()
        self.in_service: Packet | None = None
        self.bytes_arrived = 0
        self.bytes_dropped = 0
        self.bytes_delivered = 0
        self.bytes_marked = 0
        self.packets_dropped = 0
        self._backlog_bytes = 0
        self._carry = 0  # sub-microsecond remainder of back-to-back service
        self._next_seq = 0

    @property
    def occupancy(self) -> int:
        return len(self.queue) + (self.in_service is not None)

    @property
    def busy(self) -> bool:
        return self.in_service is not None

    @property
    def bytes_in_flight(self) -> int:
        return self._backlog_bytes

    def enqueue(self, pkt: Packet) -> bool:
        """Offer ``pkt``; return False when dropped.

        Accepted packets carry ``marked`` set when the occupancy including
        themselves reaches the ECN threshold. The caller starts service
        when the link was idle.
        """
        if pkt.size <= 0:
            raise ValueError("packet size must be positive")
        self.bytes_arrived += pkt.size
        if self.occupancy >= self.cfg.queue_capacity:
            self.bytes_dropped += pkt.size
            self.packets_dropped += 1
            return False
        pkt.seq = self._next_seq
        self._next_seq += 1
        self.queue.append(pkt)
        self._backlog_bytes += pkt.size
        pkt.marked = self.occupancy >= self.cfg.mark_at
        if pkt.marked:
            self.bytes_marked += pkt.size
        return True

    def start_service(self) -> int | None:
        """Move the head packet into service; return its service time in us."""
        if self.in_service is not None or not self.queue:
            return None
        self.in_service = self.queue.popleft()
        num = self.in_service.size * 8 * US_PER_S + self._carry
        cap = int(self.cfg.capacity)
        duration, self._carry = divmod(num, cap)
        return max(duration, 1)

    def service_complete(self) -> Packet:
        pkt = self.in_service
        if pkt is None:
            raise RuntimeError("service completion with idle link")
        self.in_service = None
        self.bytes_delivered += pkt.size
        self._backlog_bytes -= pkt.size
        if not self.queue:
            self._carry = 0
        return pkt

    def check_conservation(self) -> None:
        lhs = self.bytes_arrived
        rhs = self.bytes_delivered + self.bytes_dropped + self.bytes_in_flight
        if lhs != rhs:
            raise AssertionError(f"byte conservation broken: arrived {lhs} != {rhs}")
        if not 0 <= self.occupancy <= self.cfg.queue_capacity:
            raise AssertionError(f"occupancy {self.occupancy} out of range")


class GopOutcome:
    """Running fold of packet outcomes for one GoP of one session."""

    __slots__ = ("session_id", "gop_ordinal", "outstanding", "marked", "lost", "last_outcome_at")

    def __init__(self, session_id: int, gop_ordinal: int, packet_count: int):
        self.session_id = session_id
        self.gop_ordinal = gop_ordinal
        self.outstanding = packet_count
        self.marked = False
        self.lost = False
        self.last_outcome_at = 0

    def record(self, at: int, *, delivered: bool, marked: bool = False) -> bool:
        """Fold one packet outcome in; return True once every packet is resolved."""
        if self.outstanding <= 0:
            raise RuntimeError("GoP already resolved")
        self.outstanding -= 1
        if delivered:
            self.marked = self.marked or marked
        else:
            self.lost = True
        self.last_outcome_at = max(self.last_outcome_at, at)
        return self.outstanding == 0

    @property
    def complete(self) -> bool:
        return self.outstanding == 0


def feedback_for_gop(outcome: GopOutcome, one_way_delay: float) -> tuple[int, GopFeedback]:
    """Aggregate acknowledgment for a resolved GoP and the time it reaches the sender."""
    if not outcome.complete:
        raise RuntimeError(f"GoP {outcome.gop_ordinal} of session {outcome.session_id} not resolved")
    fb = GopFeedback(outcome.session_id, outcome.gop_ordinal, outcome.marked, outcome.lost)
    return outcome.last_outcome_at + seconds_to_us(one_way_delay), fb
