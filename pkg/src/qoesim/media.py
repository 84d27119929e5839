"""Parametric rate-distortion ladder and GoP packetization."""
from __future__ import annotations

import math
from dataclasses import dataclass

LADDER_SIZE = 30


class InvalidLadderBounds(ValueError):
    pass


@dataclass(frozen=True)
class RateVariant:
    index: int
    quality_index: int
    bitrate: float
    ref_psnr: float

    def __post_init__(self):
        if not 0 <= self.index < LADDER_SIZE:
            raise ValueError(f"variant index {self.index} outside ladder")
        if not 1 <= self.quality_index <= 31:
            raise ValueError(f"quality index {self.quality_index} outside 1..31")
        if not self.bitrate > 0:
            raise ValueError("variant bitrate must be positive")


@dataclass(frozen=True)
class GopSpec:
    fps: int = 30
    gop_len: int = 30
    payload: int = 1000  # bytes per packet

    def __post_init__(self):
        if self.fps <= 0 or self.gop_len <= 0:
            raise ValueError("fps and gop_len must be positive")
        if self.payload <= 0:
            raise ValueError("packet payload must be positive")

    @property
    def gop_seconds(self) -> float:
        return self.gop_len / self.fps


@dataclass(frozen=True)
class FramePlan:
    frame_index: int
    size: int
    packet_sizes: tuple[int, ...]

    @property
    def packet_count(self) -> int:
        return len(self.packet_sizes)


def build_ladder(r_min: float, r_max: float, psnr_min: float, psnr_max: float) -> list[RateVariant]:
    """Build the 30-rung ladder: geometric bitrates, PSNR logarithmic in rate.

    Both endpoints are hit exactly. ``quality_index`` is an opaque label
    running 2..31 with the ladder.
    """
    if not (0 < r_min < r_max) or not (psnr_min < psnr_max):
        raise InvalidLadderBounds(
            f"need 0 < r_min < r_max and psnr_min < psnr_max, got "
            f"r=({r_min}, {r_max}) psnr=({psnr_min}, {psnr_max})"
        )
    last = LADDER_SIZE - 1
    span = math.log(r_max / r_min)
    ladder = []
    for i in range(LADDER_SIZE):
        if i == 0:
            rate = float(r_min)
        elif i == last:
            rate = float(r_max)
        else:
            rate = r_min * math.exp(span * i / last)
        # ln(rate/r_min)/ln(r_max/r_min) is exactly i/last on the geometric grid
        psnr = psnr_min + (psnr_max - psnr_min) * i / last
        if i == last:
            psnr = float(psnr_max)
        ladder.append(RateVariant(i, i + 2, rate, psnr))
    return ladder


def gop_bytes(bitrate: float, spec: GopSpec) -> int:
    return round(bitrate * spec.gop_len / spec.fps / 8)


def plan_gop(variant: RateVariant, spec: GopSpec, first_frame: int = 0) -> list[FramePlan]:
    """Split one GoP of ``variant`` into evenly sized frames and packets."""
    total = gop_bytes(variant.bitrate, spec)
    base, extra = divmod(total, spec.gop_len)
    frames = []
    for k in range(spec.gop_len):
        size = base + (1 if k < extra else 0)
        full, tail = divmod(size, spec.payload)
        packets = (spec.payload,) * full + ((tail,) if tail else ())
        frames.append(FramePlan(first_frame + k, size, packets))
    return frames
