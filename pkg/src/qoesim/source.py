"""ECN-driven per-GoP rate controller for one video sender."""
from __future__ import annotations

from dataclasses import dataclass, field

from .engine import US_PER_S
from .media import LADDER_SIZE, GopSpec, RateVariant, plan_gop


@dataclass(frozen=True)
class ControllerConfig:
    down_step: int = 1  # variants dropped per marked GoP
    up_after: int = 2  # consecutive clean GoPs before stepping up
    # ignore congestion reports for GoPs sent before the last downshift took effect
    once_per_round: bool = False

    def __post_init__(self):
        if self.down_step < 1 or self.up_after < 1:
            raise ValueError("down_step and up_after must be >= 1")


@dataclass(frozen=True)
class GopFeedback:
    session_id: int
    gop_ordinal: int
    ecn_marked: bool
    loss_seen: bool


@dataclass(frozen=True)
class PacketEmission:
    at: int  # microseconds
    frame_index: int
    size: int


@dataclass
class SourceState:
    session_id: int
    current_variant_index: int
    next_gop_at: int
    clean_gops: int = 0
    gop_ordinal: int = 0
    frames_emitted: int = 0
    # first GoP ordinal planned after the most recent downshift
    reduced_from: int = 0
    # lowest variant the controller may select; the reserved SLA variant under admission control
    floor_index: int = 0
    history: list[int] = field(default_factory=list)

    def __post_init__(self):
        if not 0 <= self.current_variant_index < LADDER_SIZE:
            raise ValueError("initial variant outside ladder")
        if not 0 <= self.floor_index <= self.current_variant_index:
            raise ValueError("floor variant must lie in 0..initial variant")


def on_feedback(state: SourceState, fb: GopFeedback, cfg: ControllerConfig = ControllerConfig()) -> int:
    if fb.session_id != state.session_id:
        raise ValueError(f"feedback for session {fb.session_id} sent to {state.session_id}")
    if fb.ecn_marked or fb.loss_seen:
        if cfg.once_per_round and fb.gop_ordinal < state.reduced_from:
            return state.current_variant_index
        state.reduced_from = state.gop_ordinal
        state.current_variant_index = max(state.floor_index, state.current_variant_index - cfg.down_step)
        state.clean_gops = 0
    else:
        state.clean_gops += 1
        if state.clean_gops >= cfg.up_after:
            state.current_variant_index = min(LADDER_SIZE - 1, state.current_variant_index + 1)
            state.clean_gops = 0
    return state.current_variant_index


def on_gop_boundary(state: SourceState, ladder: list[RateVariant], spec: GopSpec) -> list[PacketEmission]:
    """Plan the next GoP at the current variant and advance the GoP clock.

    Frame k's packets all leave at GoP start + k/fps.
    """
    start = state.next_gop_at
    variant = ladder[state.current_variant_index]
    frames = plan_gop(variant, spec, first_frame=state.frames_emitted)
    emissions = []
    for k, frame in enumerate(frames):
        at = start + k * US_PER_S // spec.fps
        for size in frame.packet_sizes:
            emissions.append(PacketEmission(at, frame.frame_index, size))
    state.frames_emitted += len(frames)
    state.history.append(state.current_variant_index)
    state.gop_ordinal += 1
    state.next_gop_at = start + spec.gop_len * US_PER_S // spec.fps
    return emissions
