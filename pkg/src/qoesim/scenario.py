"""Scenario configuration, the per-run simulation object, sweeps and reports."""
from __future__ import annotations

import csv
import dataclasses
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from .admission import AdmissionConfig, AdmissionController, Decision, DecisionRecord, Estimator, Mode, SessionRequest
from .engine import US_PER_S, EventKind, EventQueue, SimEvent, seconds_to_us, substream
from .media import GopSpec, RateVariant, build_ladder
from .network import BottleneckLink, GopOutcome, LinkConfig, Packet, feedback_for_gop
from .qoe import LinkCounters, QoeConfig, RunMetrics, SessionTally, finalize_run, psnr_to_mos
from .source import ControllerConfig, SourceState, on_feedback, on_gop_boundary

log = logging.getLogger(__name__)

DEFAULT_CAPACITIES = (2_000_000, 4_000_000, 6_000_000, 9_000_000)


class ConfigError(ValueError):
    pass


class InvariantViolation(AssertionError):
    pass


class IoFailure(OSError):
    pass


@dataclass(frozen=True)
class LadderConfig:
    r_min: float = 60_000
    r_max: float = 2_000_000
    psnr_min: float = 20.7
    psnr_max: float = 37.0


@dataclass(frozen=True)
class LinkSettings:
    queue_capacity: int = 150
    ecn_threshold: float = 0.2
    one_way_delay: float = 0.010


@dataclass(frozen=True)
class AdmissionSettings:
    estimator: str = "instantaneous"
    window: float = 0.1
    alpha: float = 0.3
    session_cap: int = 15
    sla_rate: float | None = None  # None: lowest variant reaching MOS 4


@dataclass(frozen=True)
class SourceSettings:
    down_step: int = 1
    up_after: int = 2
    once_per_round: bool = False
    # cross-layer sources never drop below the SLA variant admission reserved
    sla_floor: bool = True
    initial_variant: str | int = "sla"


@dataclass(frozen=True)
class QoeSettings:
    loss_floor_psnr: float = 20.0
    mos_cuts: tuple[float, ...] = (20.0, 25.0, 31.0, 37.0)


_SECTIONS = {
    "ladder": LadderConfig,
    "gop": GopSpec,
    "link": LinkSettings,
    "admission": AdmissionSettings,
    "source": SourceSettings,
    "qoe": QoeSettings,
}


@dataclass(frozen=True)
class ScenarioConfig:
    capacity_list: tuple[float, ...] = DEFAULT_CAPACITIES
    duration: float = 50.0
    max_requests: int = 15
    seed: int = 1
    mode: str = "cross-layer"
    ladder: LadderConfig = field(default_factory=LadderConfig)
    gop: GopSpec = field(default_factory=GopSpec)
    link: LinkSettings = field(default_factory=LinkSettings)
    admission: AdmissionSettings = field(default_factory=AdmissionSettings)
    source: SourceSettings = field(default_factory=SourceSettings)
    qoe: QoeSettings = field(default_factory=QoeSettings)

    def __post_init__(self):
        try:
            Mode(self.mode)
            Estimator(self.admission.estimator)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if not self.capacity_list or any(c <= 0 for c in self.capacity_list):
            raise ConfigError("capacity_list must hold positive rates")
        if self.duration < 0:
            raise ConfigError("duration must be >= 0")
        if self.max_requests < 0 or self.max_requests > int(self.duration):
            raise ConfigError("max_requests must lie in 0..duration (one request per second)")
        if self.seed < 0:
            raise ConfigError("seed must be non-negative")
        iv = self.source.initial_variant
        if iv != "sla" and not (isinstance(iv, int) and 0 <= iv < 30):
            raise ConfigError("source.initial_variant must be 'sla' or a ladder index 0..29")
        # nested invariants
        try:
            self.build_ladder()
            LinkConfig(self.capacity_list[0], **dataclasses.asdict(self.link))
            AdmissionConfig(
                mode=self.mode,
                estimator=self.admission.estimator,
                window=self.admission.window,
                alpha=self.admission.alpha,
                session_cap=self.admission.session_cap,
            )
            ControllerConfig(self.source.down_step, self.source.up_after, self.source.once_per_round)
            QoeConfig(self.qoe.loss_floor_psnr, self.qoe.mos_cuts)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        self.sla_variant()

    def build_ladder(self) -> list[RateVariant]:
        lc = self.ladder
        return build_ladder(lc.r_min, lc.r_max, lc.psnr_min, lc.psnr_max)

    def sla_variant(self) -> RateVariant:
        ladder = self.build_ladder()
        if self.admission.sla_rate is not None:
            for v in ladder:
                if abs(v.bitrate - self.admission.sla_rate) <= 1e-6 * v.bitrate:
                    return v
            raise ConfigError(f"sla_rate {self.admission.sla_rate} is not a ladder bitrate")
        for v in ladder:
            if psnr_to_mos(v.ref_psnr, tuple(self.qoe.mos_cuts)) >= 4:
                return v
        raise ConfigError("no ladder variant reaches MOS 4; set admission.sla_rate")

    def replace(self, **changes: Any) -> "ScenarioConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict[str, Any]:
        d = dataclasses.asdict(self)
        d["capacity_list"] = list(self.capacity_list)
        d["qoe"]["mos_cuts"] = list(self.qoe.mos_cuts)
        return d

    @classmethod
    def from_dict(cls, data: dict[str, Any] | None) -> "ScenarioConfig":
        data = dict(data or {})
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config key(s): {', '.join(sorted(unknown))}")
        kwargs: dict[str, Any] = {}
        for key, value in data.items():
            if key in _SECTIONS:
                section = _SECTIONS[key]
                if not isinstance(value, dict):
                    raise ConfigError(f"section '{key}' must be a mapping")
                sub_known = {f.name for f in dataclasses.fields(section)}
                bad = set(value) - sub_known
                if bad:
                    raise ConfigError(f"unknown key(s) in '{key}': {', '.join(sorted(bad))}")
                if "mos_cuts" in value:
                    value = {**value, "mos_cuts": tuple(value["mos_cuts"])}
                try:
                    kwargs[key] = section(**value)
                except (TypeError, ValueError) as exc:
                    raise ConfigError(f"section '{key}': {exc}") from None
            elif key == "capacity_list":
                if not isinstance(value, (list, tuple)):
                    raise ConfigError("capacity_list must be a list")
                kwargs[key] = tuple(float(v) for v in value)
            else:
                kwargs[key] = value
        try:
            return cls(**kwargs)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None


def load_config(path: str | os.PathLike) -> ScenarioConfig:
    with open(path, encoding="utf-8") as fh:
        try:
            data = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: {exc}") from None
    if data is not None and not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return ScenarioConfig.from_dict(data)


def dump_config(cfg: ScenarioConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=False)


def generate_arrivals(cfg: ScenarioConfig, sla_rate: float) -> list[SessionRequest]:
    """One request per second, uniformly placed inside that second."""
    rng = substream(cfg.seed, "arrival")
    offsets = rng.integers(0, US_PER_S, size=cfg.max_requests)
    return [SessionRequest(k, k * US_PER_S + int(off), sla_rate) for k, off in enumerate(offsets)]


@dataclass
class RunReport:
    run_id: str
    mode: str
    capacity: float
    config: dict[str, Any]
    metrics: RunMetrics
    decisions: list[DecisionRecord]
    counters: LinkCounters
    events: int = 0
    wall_time: float = 0.0
    variant_history: dict[int, list[int]] = field(default_factory=dict)
    delivered_per_second: list[int] = field(default_factory=list)

    @property
    def requests(self) -> int:
        return len(self.decisions)


def run_id_for(mode: str, capacity: float) -> str:
    return f"{Mode(mode).value}-{round(capacity / 1000)}k"


class Simulation:
    """One run: a single capacity and architecture. Owns all mutable state."""

    def __init__(self, cfg: ScenarioConfig, capacity: float, mode: str | None = None, *, check_every_event: bool = False):
        self.cfg = cfg
        self.mode = Mode(mode or cfg.mode)
        self.capacity = float(capacity)
        self.check_every_event = check_every_event
        self.ladder = cfg.build_ladder()
        self.sla = cfg.sla_variant()
        self.gop = cfg.gop
        self.link_cfg = LinkConfig(self.capacity, **dataclasses.asdict(cfg.link))
        self.link = BottleneckLink(self.link_cfg)
        self.admission = AdmissionController(
            AdmissionConfig(
                mode=self.mode,
                estimator=cfg.admission.estimator,
                window=cfg.admission.window,
                alpha=cfg.admission.alpha,
                capacity=self.capacity,
                session_cap=cfg.admission.session_cap,
            )
        )
        self.controller = ControllerConfig(cfg.source.down_step, cfg.source.up_after, cfg.source.once_per_round)
        self.qoe = QoeConfig(cfg.qoe.loss_floor_psnr, cfg.qoe.mos_cuts)
        self.queue = EventQueue()
        self.end = seconds_to_us(cfg.duration)
        self.window_us = seconds_to_us(cfg.admission.window)
        self.owd_us = seconds_to_us(cfg.link.one_way_delay)
        self.sources: dict[int, SourceState] = {}
        self.tallies: dict[int, SessionTally] = {}
        self.gops: dict[tuple[int, int], GopOutcome] = {}
        # (session, frame) -> [packets outstanding, lost, ref_psnr]
        self.frames: dict[tuple[int, int], list] = {}
        self.rejected = 0
        self.ended = False
        self.trace: list[tuple[int, int, int]] | None = None
        self.delivered_per_second = [0] * (int(cfg.duration) + 1)

    @property
    def initial_variant(self) -> int:
        iv = self.cfg.source.initial_variant
        return self.sla.index if iv == "sla" else int(iv)

    @property
    def floor_index(self) -> int:
        if self.mode is Mode.CROSS_LAYER and self.cfg.source.sla_floor:
            return min(self.sla.index, self.initial_variant)
        return 0

    def run(self, trace: bool = False) -> RunReport:
        started = time.perf_counter()
        q = self.queue
        if trace:
            self.trace = []
        if self.end > 0:
            for req in generate_arrivals(self.cfg, self.sla.bitrate):
                if req.requested_at <= self.end:
                    q.schedule(req.requested_at, EventKind.SESSION_REQUEST, req)
            q.schedule(self.window_us, EventKind.MEASUREMENT_TICK)
            q.schedule(self.end, EventKind.RUN_END)
        else:
            self.ended = True
        handlers = {
            EventKind.SESSION_REQUEST: self._on_request,
            EventKind.GOP_BOUNDARY: self._on_gop_boundary,
            EventKind.PACKET_ARRIVAL: self._on_packet_arrival,
            EventKind.SERVICE_COMPLETE: self._on_service_complete,
            EventKind.FEEDBACK_DELIVERY: self._on_feedback,
            EventKind.MEASUREMENT_TICK: self._on_tick,
            EventKind.RUN_END: self._on_run_end,
        }
        if self.check_every_event:
            handlers = {k: self._checked(h) for k, h in handlers.items()}
        q.run_until(self.end, handlers, self.trace)
        report = self._report()
        report.wall_time = time.perf_counter() - started
        return report

    def _checked(self, handler):
        def wrapped(ev: SimEvent) -> None:
            handler(ev)
            self._check_link()

        return wrapped

    def _check_link(self) -> None:
        try:
            self.link.check_conservation()
        except AssertionError as exc:
            raise InvariantViolation(f"t={self.queue.now}us: {exc}") from None

    # handlers

    def _on_request(self, ev: SimEvent) -> None:
        req: SessionRequest = ev.payload
        decision = self.admission.decide(req, active_count=len(self.sources))
        if decision is Decision.REJECT:
            self.rejected += 1
            return
        self.sources[req.session_id] = SourceState(
            req.session_id, self.initial_variant, next_gop_at=ev.fire_at, floor_index=self.floor_index
        )
        self.tallies[req.session_id] = SessionTally(req.session_id)
        self.queue.schedule(ev.fire_at, EventKind.GOP_BOUNDARY, req.session_id)

    def _on_gop_boundary(self, ev: SimEvent) -> None:
        sid = ev.payload
        state = self.sources[sid]
        gop_ordinal = state.gop_ordinal
        ref_psnr = self.ladder[state.current_variant_index].ref_psnr
        emissions = on_gop_boundary(state, self.ladder, self.gop)
        self.gops[(sid, gop_ordinal)] = GopOutcome(sid, gop_ordinal, len(emissions))
        frames = self.frames
        schedule = self.queue.schedule
        for em in emissions:
            key = (sid, em.frame_index)
            slot = frames.get(key)
            if slot is None:
                frames[key] = [1, False, ref_psnr]
            else:
                slot[0] += 1
            schedule(em.at, EventKind.PACKET_ARRIVAL, Packet(sid, gop_ordinal, em.frame_index, em.size))
        schedule(state.next_gop_at, EventKind.GOP_BOUNDARY, sid)

    def _on_packet_arrival(self, ev: SimEvent) -> None:
        pkt: Packet = ev.payload
        self.admission.observe(pkt.size)
        if self.link.enqueue(pkt):
            self._kick_link(ev.fire_at)
        else:
            self._resolve(pkt, ev.fire_at, delivered=False)

    def _kick_link(self, now: int) -> None:
        duration = self.link.start_service()
        if duration is not None:
            self.queue.schedule(now + duration, EventKind.SERVICE_COMPLETE)

    def _on_service_complete(self, ev: SimEvent) -> None:
        pkt = self.link.service_complete()
        self.delivered_per_second[ev.fire_at // US_PER_S] += pkt.size
        self._resolve(pkt, ev.fire_at + self.owd_us, delivered=True)
        self._kick_link(ev.fire_at)

    def _resolve(self, pkt: Packet, at: int, delivered: bool) -> None:
        key = (pkt.session_id, pkt.frame_index)
        slot = self.frames[key]
        slot[0] -= 1
        if not delivered:
            slot[1] = True
        if slot[0] == 0:
            del self.frames[key]
            self.tallies[pkt.session_id].add_frame(slot[2], not slot[1], self.qoe.loss_floor_psnr)
        gkey = (pkt.session_id, pkt.gop_ordinal)
        outcome = self.gops[gkey]
        if outcome.record(at, delivered=delivered, marked=pkt.marked):
            del self.gops[gkey]
            fire_at, fb = feedback_for_gop(outcome, self.cfg.link.one_way_delay)
            self.queue.schedule(fire_at, EventKind.FEEDBACK_DELIVERY, fb)

    def _on_feedback(self, ev: SimEvent) -> None:
        fb = ev.payload
        on_feedback(self.sources[fb.session_id], fb, self.controller)

    def _on_tick(self, ev: SimEvent) -> None:
        self.admission.tick(ev.fire_at)
        nxt = ev.fire_at + self.window_us
        if nxt <= self.end:
            self.queue.schedule(nxt, EventKind.MEASUREMENT_TICK)

    def _on_run_end(self, ev: SimEvent) -> None:
        self.ended = True

    def _report(self) -> RunReport:
        self._check_link()
        link = self.link
        counters = LinkCounters(link.bytes_arrived, link.bytes_dropped, link.bytes_delivered, link.bytes_in_flight)
        # frames cut off by the end of the run have no final outcome and are not scored
        metrics = finalize_run(
            counters,
            [self.tallies[s] for s in sorted(self.tallies)],
            capacity=self.capacity,
            duration=self.cfg.duration,
            rejected=self.rejected,
            cfg=self.qoe,
            run_ended=self.ended,
        )
        if not 0.0 <= metrics.utilization <= 1.0:
            raise InvariantViolation(f"utilization {metrics.utilization} outside [0, 1]")
        if not 0.0 <= metrics.drop_ratio <= 1.0:
            raise InvariantViolation(f"drop ratio {metrics.drop_ratio} outside [0, 1]")
        if metrics.admitted + metrics.rejected != len(self.admission.log):
            raise InvariantViolation("admitted + rejected != requests issued")
        return RunReport(
            run_id=run_id_for(self.mode, self.capacity),
            mode=self.mode.value,
            capacity=self.capacity,
            config=self.cfg.to_dict(),
            metrics=metrics,
            decisions=list(self.admission.log),
            counters=counters,
            events=self.queue.dispatched,
            variant_history={sid: list(s.history) for sid, s in sorted(self.sources.items())},
            delivered_per_second=list(self.delivered_per_second),
        )


def run_single(cfg: ScenarioConfig, capacity: float, mode: str | None = None) -> RunReport:
    report = Simulation(cfg, capacity, mode).run()
    log.info(
        "%s: admitted %d/%d, drop %.2f%%, util %.2f%%, %d events in %.2fs",
        report.run_id,
        report.metrics.admitted,
        report.requests,
        100 * report.metrics.drop_ratio,
        100 * report.metrics.utilization,
        report.events,
        report.wall_time,
    )
    return report


def _run_job(job: tuple[ScenarioConfig, float, str]) -> RunReport:
    return run_single(*job)


def _run_jobs(jobs: list[tuple[ScenarioConfig, float, str]], workers: int) -> list[RunReport]:
    if workers <= 1 or len(jobs) <= 1:
        return [_run_job(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_job, jobs))


def run_scenario(cfg: ScenarioConfig, workers: int = 1) -> list[RunReport]:
    """Run ``cfg.mode`` at every capacity in ``cfg.capacity_list``."""
    return _run_jobs([(cfg, c, cfg.mode) for c in cfg.capacity_list], workers)


def sweep(cfg: ScenarioConfig, workers: int = 1) -> list[RunReport]:
    """Both architectures at every capacity; the seed stays fixed across runs."""
    jobs = [(cfg, c, m.value) for m in (Mode.CROSS_LAYER, Mode.RA_ONLY) for c in cfg.capacity_list]
    return _run_jobs(jobs, workers)


# reports

SUMMARY_FIELDS = ["run_id", "mode", "capacity", "admitted", "drop_ratio", "utilization"]
SESSION_FIELDS = ["run_id", "session_id", "decision", "sla_rate", "mean_psnr", "mos"]


def _pct(x: float) -> str:
    return f"{100 * x:.2f}"


def _kbps(x: float) -> str:
    return str(round(x / 1000))


def summary_rows(reports: list[RunReport]) -> list[dict[str, str]]:
    return [
        {
            "run_id": r.run_id,
            "mode": r.mode,
            "capacity": _kbps(r.capacity),
            "admitted": str(r.metrics.admitted),
            "drop_ratio": _pct(r.metrics.drop_ratio),
            "utilization": _pct(r.metrics.utilization),
        }
        for r in reports
    ]


def session_rows(report: RunReport) -> list[dict[str, str]]:
    quality = {s.session_id: s for s in report.metrics.per_session}
    rows = []
    for d in report.decisions:
        q = quality.get(d.session_id)
        rows.append(
            {
                "run_id": report.run_id,
                "session_id": str(d.session_id),
                "decision": d.decision.value,
                "sla_rate": _kbps(d.sla_rate),
                "mean_psnr": f"{q.mean_psnr:.2f}" if q else "",
                "mos": str(q.mos) if q else "",
            }
        )
    return rows


def _write_csv(path: Path, fields: list[str], rows: list[dict[str, str]]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)


def emit_reports(reports: list[RunReport], out_dir: str | os.PathLike) -> list[Path]:
    """Write summary.csv, sessions.csv and one mos_by_session.dat per run."""
    if not reports:
        raise ValueError("no reports to emit")
    try:
        return _emit(reports, Path(out_dir))
    except OSError as exc:
        raise IoFailure(f"cannot write reports to {out_dir}: {exc}") from exc


def _emit(reports: list[RunReport], out: Path) -> list[Path]:
    out.mkdir(parents=True, exist_ok=True)
    written = [out / "summary.csv", out / "sessions.csv"]
    _write_csv(written[0], SUMMARY_FIELDS, summary_rows(reports))
    _write_csv(written[1], SESSION_FIELDS, [row for r in reports for row in session_rows(r)])
    for r in reports:
        run_dir = out / r.run_id
        run_dir.mkdir(exist_ok=True)
        path = run_dir / "mos_by_session.dat"
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"# {r.run_id}: mode={r.mode} capacity_kbps={_kbps(r.capacity)}\n")
            fh.write("# session_id mos mean_psnr\n")
            for s in r.metrics.per_session:
                fh.write(f"{s.session_id} {s.mos} {s.mean_psnr:.2f}\n")
        written.append(path)
    return written


def read_summary(path: str | os.PathLike) -> list[dict[str, Any]]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    return [
        {
            "run_id": row["run_id"],
            "mode": row["mode"],
            "capacity": int(row["capacity"]) * 1000,
            "admitted": int(row["admitted"]),
            "drop_ratio": float(row["drop_ratio"]) / 100,
            "utilization": float(row["utilization"]) / 100,
        }
        for row in rows
    ]
