"""Per-session PSNR/MOS and run-level drop ratio and utilization."""
from __future__ import annotations

import bisect
from dataclasses import dataclass, field

# upper-inclusive PSNR cut points (dB) separating MOS 1|2|3|4|5
DEFAULT_MOS_CUTS = (20.0, 25.0, 31.0, 37.0)
DEFAULT_LOSS_FLOOR_PSNR = 20.0


class IncompleteRun(RuntimeError):
    pass


@dataclass(frozen=True)
class QoeConfig:
    loss_floor_psnr: float = DEFAULT_LOSS_FLOOR_PSNR
    mos_cuts: tuple[float, ...] = DEFAULT_MOS_CUTS

    def __post_init__(self):
        cuts = tuple(float(c) for c in self.mos_cuts)
        if len(cuts) != 4 or list(cuts) != sorted(set(cuts)):
            raise ValueError("mos_cuts must be four strictly increasing values")
        object.__setattr__(self, "mos_cuts", cuts)


def frame_psnr(ref_psnr: float, delivered: bool, loss_floor: float = DEFAULT_LOSS_FLOOR_PSNR) -> float:
    return ref_psnr if delivered else loss_floor


def psnr_to_mos(psnr: float, cuts: tuple[float, ...] = DEFAULT_MOS_CUTS) -> int:
    """Five-level MOS; each bin is closed at its upper cut (31 dB -> 3, 31.01 dB -> 4)."""
    if psnr != psnr:
        raise ValueError("PSNR must not be NaN")
    return 1 + bisect.bisect_left(cuts, psnr)


@dataclass
class SessionQuality:
    session_id: int
    frames_sent: int
    frames_delivered: int
    mean_psnr: float
    mos: int


@dataclass
class SessionTally:
    """Frame outcomes accumulated for one admitted session during a run."""

    session_id: int
    frames_sent: int = 0
    frames_delivered: int = 0
    psnr_sum: float = 0.0

    def add_frame(self, ref_psnr: float, delivered: bool, loss_floor: float) -> None:
        self.frames_sent += 1
        self.frames_delivered += delivered
        self.psnr_sum += frame_psnr(ref_psnr, delivered, loss_floor)


@dataclass
class LinkCounters:
    bytes_arrived: int = 0
    bytes_dropped: int = 0
    bytes_delivered: int = 0
    bytes_in_flight: int = 0


@dataclass
class RunMetrics:
    admitted: int
    rejected: int
    drop_ratio: float
    utilization: float
    per_session: list[SessionQuality] = field(default_factory=list)

    @property
    def mean_mos(self) -> float:
        if not self.per_session:
            return 0.0
        return sum(s.mos for s in self.per_session) / len(self.per_session)


def finalize_run(
    counters: LinkCounters,
    sessions: list[SessionTally],
    *,
    capacity: float,
    duration: float,
    rejected: int,
    cfg: QoeConfig = QoeConfig(),
    run_ended: bool = True,
    unresolved_frames: int = 0,
) -> RunMetrics:
    if not run_ended:
        raise IncompleteRun("metrics requested before the run ended")
    if unresolved_frames:
        raise IncompleteRun(f"{unresolved_frames} counted frame(s) lack a final packet outcome")
    drop = counters.bytes_dropped / counters.bytes_arrived if counters.bytes_arrived else 0.0
    util = counters.bytes_delivered * 8 / (capacity * duration) if duration > 0 else 0.0
    per_session = []
    for t in sessions:
        if t.frames_sent:
            mean = t.psnr_sum / t.frames_sent
        else:
            mean = cfg.loss_floor_psnr
        per_session.append(
            SessionQuality(t.session_id, t.frames_sent, t.frames_delivered, mean, psnr_to_mos(mean, cfg.mos_cuts))
        )
    return RunMetrics(len(sessions), rejected, drop, util, per_session)
