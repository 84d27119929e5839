"""Ingress admission control on the measured aggregate video arrival rate."""
from __future__ import annotations

import enum
from dataclasses import dataclass


class Mode(str, enum.Enum):
    CROSS_LAYER = "cross-layer"
    RA_ONLY = "ra-only"


class Estimator(str, enum.Enum):
    INSTANTANEOUS = "instantaneous"
    WINDOW_AVERAGE = "window-average"


class Decision(str, enum.Enum):
    ADMIT = "admit"
    REJECT = "reject"


class DuplicateDecision(RuntimeError):
    pass


@dataclass(frozen=True)
class AdmissionConfig:
    mode: Mode = Mode.CROSS_LAYER
    estimator: Estimator = Estimator.INSTANTANEOUS
    window: float = 0.1  # seconds
    alpha: float = 0.3  # EWMA weight of the newest window
    capacity: float = 2e6  # bits/s
    session_cap: int = 15

    def __post_init__(self):
        object.__setattr__(self, "mode", Mode(self.mode))
        object.__setattr__(self, "estimator", Estimator(self.estimator))
        if not self.window > 0:
            raise ValueError("measurement window must be positive")
        if not 0 < self.alpha <= 1:
            raise ValueError("alpha must lie in (0, 1]")
        if self.mode is Mode.RA_ONLY and self.session_cap < 1:
            raise ValueError("session_cap must be >= 1 in ra-only mode")


@dataclass(frozen=True)
class SessionRequest:
    session_id: int
    requested_at: int  # microseconds
    sla_rate: float  # bits/s


@dataclass
class RateMeasurement:
    window_bytes: int = 0
    measured_rate: float = 0.0
    as_of: int = 0
    samples: int = 0

    def observe(self, nbytes: int) -> None:
        self.window_bytes += nbytes


def measure(m: RateMeasurement, now: int, cfg: AdmissionConfig) -> RateMeasurement:
    """Close the current window at ``now`` and update the rate estimate."""
    rate = m.window_bytes * 8 / cfg.window
    if cfg.estimator is Estimator.INSTANTANEOUS or m.samples == 0:
        m.measured_rate = rate
    else:
        m.measured_rate = cfg.alpha * rate + (1 - cfg.alpha) * m.measured_rate
    m.window_bytes = 0
    m.as_of = now
    m.samples += 1
    return m


def admits(measured_rate: float, sla_rate: float, capacity: float) -> bool:
    return measured_rate + sla_rate <= capacity


def decide(req: SessionRequest, measured_rate: float, cfg: AdmissionConfig, active_count: int) -> Decision:
    if cfg.mode is Mode.RA_ONLY:
        ok = active_count < cfg.session_cap
    else:
        ok = admits(measured_rate, req.sla_rate, cfg.capacity)
    return Decision.ADMIT if ok else Decision.REJECT


@dataclass(frozen=True)
class DecisionRecord:
    session_id: int
    at: int
    measured_rate: float
    sla_rate: float
    active_count: int
    decision: Decision


class AdmissionController:
    """Stateful edge function: owns the measurement and the decision log."""

    def __init__(self, cfg: AdmissionConfig):
        self.cfg = cfg
        self.measurement = RateMeasurement()
        self.log: list[DecisionRecord] = []
        self._decided: set[int] = set()

    def observe(self, nbytes: int) -> None:
        self.measurement.observe(nbytes)

    def tick(self, now: int) -> float:
        return measure(self.measurement, now, self.cfg).measured_rate

    def decide(self, req: SessionRequest, active_count: int) -> Decision:
        if req.session_id in self._decided:
            raise DuplicateDecision(f"session {req.session_id} already decided")
        self._decided.add(req.session_id)
        rate = self.measurement.measured_rate
        decision = decide(req, rate, self.cfg, active_count)
        self.log.append(DecisionRecord(req.session_id, req.requested_at, rate, req.sla_rate, active_count, decision))
        return decision
