"""Search orchestration: drives rescuers through the phased search that narrows
an initial network fix to a building, a floor, and finally a room.

Phases form a directed graph. The happy path is

    setup -> building_search -> move_to_peak -> building_confirm
          -> floor_room_search -> room_confirm -> found

with regressions building_confirm -> building_search (inconclusive sweep),
room_confirm -> floor_room_search (wrong room), and floor_room_search ->
building_search (building turned out wrong once inside). Scenarios with a
pre-designated building skip straight from setup to floor_room_search, a
confirm over open ground can end outdoors, and any non-terminal phase may fail
on timeout or retry exhaustion. Every transition outside this graph is a bug.
"""

from __future__ import annotations

import heapq
import itertools
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import geometry as geo
from .geometry import Point, Rect
from .lcs import (ContourMap, EstimationError, MapRegion, PositionEstimate,
                  SearchBoundary, derive_boundary, estimate_position, find_peak,
                  interpolate_idw, plan_building_search, plan_floor_search)
from .propagation import ShadowingField
from .protocol import (ChannelConfigMsg, Link, MeasurementReportMsg, Message,
                       SessionEventMsg, SessionRegistry, SweepResultMsg,
                       TaskAssignmentMsg, transport, ContourMapMsg,
                       LocationEstimateMsg)
from .sme import SmeState, directional_sweep, route_complete, set_route, step
from .world import Pose, Scenario

PHASES = ("setup", "building_search", "move_to_peak", "building_confirm",
          "floor_room_search", "room_confirm", "found", "failed")

ALLOWED_TRANSITIONS: frozenset[tuple[str, str]] = frozenset(
    [("setup", "building_search"),
     ("setup", "floor_room_search"),
     ("building_search", "move_to_peak"),
     ("building_search", "building_search"),
     ("building_search", "found"),
     ("move_to_peak", "building_confirm"),
     ("building_confirm", "floor_room_search"),
     ("building_confirm", "building_search"),
     ("building_confirm", "move_to_peak"),
     ("building_confirm", "found"),
     ("floor_room_search", "room_confirm"),
     ("floor_room_search", "building_search"),
     ("room_confirm", "floor_room_search"),
     ("room_confirm", "found")]
    + [(p, "failed") for p in PHASES if p not in ("found", "failed")])

FLOOR_MAP_MIN_REPORTS = 8
# a bearing ray must cross at least this much footprint to count as a hit;
# anything shorter is a corner graze from a vantage parked against the wall
MIN_CHORD_M = 2.0


class PhaseError(RuntimeError):
    """A transition outside the allowed phase graph was attempted."""


@dataclass
class SessionEvent:
    time_s: float
    actor: str
    event: str
    detail: dict = field(default_factory=dict)


@dataclass
class SearchOutcome:
    scenario_name: str
    policy: str
    seed: int
    success: bool
    phase_final: str
    total_time_s: float
    building_time_s: float | None = None
    room_time_s: float | None = None
    building_correct: bool | None = None
    room_correct: bool | None = None
    distances_m: dict[str, float] = field(default_factory=dict)
    n_reports: int = 0
    retries_building: int = 0
    retries_room: int = 0
    events: list[SessionEvent] = field(default_factory=list)


@dataclass
class _Task:
    kind: str  # "route" | "busy" | "sweep"
    route: list[Point] | None = None
    duration_s: float = 0.0
    started_s: float | None = None
    label: str = ""
    data: dict = field(default_factory=dict)


@dataclass
class _Rescuer:
    spec_id: str
    mode: str
    sme: SmeState
    link: Link
    meas_rng: np.random.Generator
    net_rng: np.random.Generator
    orig_speed_mps: float = 1.2
    tasks: list[_Task] = field(default_factory=list)
    pending_assign: int = 0
    idle: bool = True


def _nearest_boundary_point(rect: Rect, p: Point) -> Point:
    x = min(max(p[0], rect[0]), rect[2])
    y = min(max(p[1], rect[1]), rect[3])
    if (x, y) != (p[0], p[1]):
        return (x, y)
    gaps = [(p[0] - rect[0], (rect[0], p[1])), (rect[2] - p[0], (rect[2], p[1])),
            (p[1] - rect[1], (p[0], rect[1])), (rect[3] - p[1], (p[0], rect[3]))]
    return min(gaps)[1]


def _rect_distance(rect: Rect, p: Point) -> float:
    dx = max(rect[0] - p[0], 0.0, p[0] - rect[2])
    dy = max(rect[1] - p[1], 0.0, p[1] - rect[3])
    return math.hypot(dx, dy)


def _arc_of_nearest(pts: list[Point], p: Point) -> float:
    best_s, best_d, acc = 0.0, math.inf, 0.0
    for i in range(len(pts) - 1):
        q, d = geo.nearest_point_on_segment(p, pts[i], pts[i + 1])
        if d < best_d:
            best_d = d
            best_s = acc + geo.dist(pts[i], q)
        acc += geo.dist(pts[i], pts[i + 1])
    return best_s


def corridor_path(corridor: list[Point], a: Point, b: Point) -> list[Point]:
    """Shortest path along a corridor polyline between the projections of a and b."""
    sa = _arc_of_nearest(corridor, a)
    sb = _arc_of_nearest(corridor, b)
    lo, hi = min(sa, sb), max(sa, sb)
    pts: list[Point] = []
    xa, ya, _ = geo.polyline_point_at(corridor, lo)
    pts.append((xa, ya))
    acc = 0.0
    for i in range(len(corridor) - 1):
        acc += geo.dist(corridor[i], corridor[i + 1])
        if lo < acc < hi:
            pts.append(corridor[i + 1])
    xb, yb, _ = geo.polyline_point_at(corridor, hi)
    pts.append((xb, yb))
    if sa > sb:
        pts.reverse()
    if geo.polyline_length(pts) <= geo.EPS:
        return []
    return pts


def _level_toward(profile, point: Point) -> float:
    """Swept level in the direction of point, circularly interpolated between
    the two nearest measured bearings."""
    theta = math.atan2(point[1] - profile.y, point[0] - profile.x)
    brs = profile.bearings_rad
    lvls = profile.mean_rssi_dbm
    n = len(brs)
    diffs = [geo.angle_wrap(theta - b) for b in brs]
    i0 = min(range(n), key=lambda i: abs(diffs[i]))
    d0 = diffs[i0]
    i1 = (i0 + 1) % n if d0 >= 0 else (i0 - 1) % n
    span = abs(geo.angle_wrap(brs[i1] - brs[i0]))
    if span < geo.EPS:
        return float(lvls[i0])
    f = min(abs(d0) / span, 1.0)
    return float((1.0 - f) * lvls[i0] + f * lvls[i1])


class SessionRunner:
    """Discrete-time executor for one search session.

    The wall clock advances one uplink period per tick; measurement, transport,
    server ingest, the 1 Hz estimation pipeline, and phase policy all hang off
    that clock, so a run is a pure function of (scenario, policy, seed).
    """

    def __init__(self, scenario: Scenario, policy: str = "helps", seed: int = 0,
                 until: str = "found", publish=None, command_queue=None,
                 timeout_s: float | None = None) -> None:
        if policy not in ("helps", "knock_baseline"):
            raise ValueError(f"unknown policy {policy!r}")
        if until not in ("found", "building_commit"):
            raise ValueError(f"unknown stop condition {until!r}")
        self.scenario = scenario
        self.policy = policy
        self.seed = seed
        self.until = until
        self.publish = publish
        self.command_queue = command_queue
        self.timing = scenario.timing
        self.timeout_s = timeout_s if timeout_s is not None else self.timing.timeout_s

        ss = np.random.SeedSequence(seed)
        n = len(scenario.rescuers)
        children = ss.spawn(2 + 2 * n)
        self._world_seed = int(children[0].generate_state(1, np.uint64)[0])
        self.policy_rng = np.random.default_rng(children[1])
        self.rescuers: dict[str, _Rescuer] = {}
        for i, spec in enumerate(scenario.rescuers):
            sme = SmeState(id=spec.id, pose=replace(spec.start), speed_mps=spec.speed_mps,
                           measuring=False, pose_noise_m=spec.pose_noise_m)
            self.rescuers[spec.id] = _Rescuer(
                spec_id=spec.id, mode=spec.mode, sme=sme, link=Link(),
                meas_rng=np.random.default_rng(children[2 + 2 * i]),
                net_rng=np.random.default_rng(children[3 + 2 * i]),
                orig_speed_mps=spec.speed_mps)
        self.roster = [r.id for r in scenario.rescuers]

        self.phase = "setup"
        self.clock_s = 0.0
        self.step_i = 0
        self.dt = scenario.channel.period_s
        self.events: list[SessionEvent] = []
        self.registry = SessionRegistry(setup_delay_s=self.timing.setup_delay_s,
                                        recompute_interval_s=self.timing.recompute_interval_s)
        self.session = None
        self.shadowing: ShadowingField | None = None
        self._wire: list = []  # heap of (deliver_s, tie, kind, payload)
        self._tie = itertools.count()
        self._msg_seq = itertools.count(1)
        self._generation = itertools.count(1)

        # policy state
        self.initial_fix: Point | None = None
        self.peak_history: list[tuple[float, Point]] = []
        self.outdoor_map: ContourMap | None = None
        self.floor_maps: dict[tuple[int, int], ContourMap] = {}
        self.floor_report_xy: dict[tuple[int, int], np.ndarray] = {}
        self.estimate: PositionEstimate | None = None
        self.boundary: SearchBoundary | None = None
        self.designated: str | None = None
        self.sweep_results: list[SweepResultMsg] = []
        self.room_profiles: list[SweepResultMsg] = []
        self.committed_building: int | None = None
        self.committed_floor: int | None = None
        self.committed_room: int | None = None
        self.outdoor_commit_peak_dbm: float | None = None
        self.excluded_buildings: set[int] = set()
        self.excluded_rooms: set[int] = set()
        # vantage points whose sweeps read pure noise; the shadowing field is
        # fixed, so the hot cells that sent us there stay hot and must be
        # masked out of later peak picks
        self.sweep_exclusions: list[Point] = []
        self._hold_peak_dispatch = False
        self._room_ranking: list[int] = []
        self.retries_building = 0
        self.retries_room = 0
        self.building_time_s: float | None = None
        self.room_time_s: float | None = None
        self.n_reports_seen = 0
        self._report_cache: dict[tuple[str, int], object] = {}
        self._valid_cache: tuple[int, int, float] = (-1, 0, math.inf)
        self._plan_revision = itertools.count(1)
        self._floor_plan = None
        self._pending_recommit = False
        self._success = False
        self._done = False

    # --- bookkeeping ------------------------------------------------------

    def _event(self, event: str, actor: str = "lcs", **detail) -> None:
        # numpy scalars leak in from estimates and map cells; the wire and the
        # outcome record both need plain JSON types
        detail = {k: v.item() if isinstance(v, np.generic) else v
                  for k, v in detail.items()}
        ev = SessionEvent(time_s=self.clock_s, actor=actor, event=event,
                          detail=detail)
        self.events.append(ev)
        if self.publish is not None:
            sid = self.session.session_id if self.session else ""
            self.publish(SessionEventMsg(session_id=sid, sender="lcs",
                                         seq=next(self._msg_seq), time_s=self.clock_s,
                                         actor=actor, event=event, detail=detail))

    def _transition(self, to_phase: str) -> None:
        if (self.phase, to_phase) not in ALLOWED_TRANSITIONS:
            raise PhaseError(f"illegal transition {self.phase} -> {to_phase}")
        self._event("phase_changed", frm=self.phase, to=to_phase)
        self.phase = to_phase

    def _fallback_boundary(self) -> SearchBoundary:
        """Search boundary to fall back on when there is no usable estimate:
        the coarse network fix with its advertised sigma."""
        sigma = self.scenario.initial_fix_sigma_m
        fix_est = PositionEstimate(
            x=self.initial_fix[0], y=self.initial_fix[1],
            cov=np.eye(2) * sigma * sigma, n_reports=0,
            timestamp_s=self.clock_s, nll=0.0, offset_db=0.0)
        return derive_boundary(fix_est, self.scenario.extent)

    def _fail(self, reason: str) -> None:
        self._event("failed", reason=reason)
        self._transition("failed")
        self._done = True

    # --- wire helpers -------------------------------------------------------

    def _send_report(self, rescuer: _Rescuer, report) -> None:
        msg = MeasurementReportMsg.from_report(
            self.session.session_id, rescuer.spec_id, next(self._msg_seq), report)
        fate, t = transport(rescuer.link, self.clock_s, rescuer.net_rng)
        if fate == "delivered":
            heapq.heappush(self._wire, (t, next(self._tie), "report", msg))

    def _send_control(self, kind: str, payload, rescuer: _Rescuer) -> None:
        # control traffic rides a retransmitting stream: latency but no loss
        latency = rescuer.net_rng.uniform(rescuer.link.latency_lo_s,
                                          rescuer.link.latency_hi_s)
        heapq.heappush(self._wire, (self.clock_s + latency, next(self._tie),
                                    kind, payload))

    def _deliver_due(self) -> None:
        while self._wire and self._wire[0][0] <= self.clock_s:
            _, _, kind, payload = heapq.heappop(self._wire)
            if kind == "report":
                self.registry.ingest(payload)
                self.n_reports_seen += 1
                if self.publish is not None:
                    self.publish(payload)
            elif kind == "sweep":
                if payload.floor_index is None:
                    self.sweep_results.append(payload)
                else:
                    self.room_profiles.append(payload)
                if self.publish is not None:
                    self.publish(payload)
            elif kind == "assign":
                rescuer, tasks = payload
                # a new assignment preempts whatever was underway
                rescuer.pending_assign -= 1
                rescuer.tasks = tasks
                rescuer.sme = replace(rescuer.sme, route=None)
                rescuer.idle = False

    # --- task execution ---------------------------------------------------

    def _assign_tasks(self, rescuer: _Rescuer, tasks: list[_Task],
                      msg: TaskAssignmentMsg | None = None) -> None:
        # mark busy as soon as the server issues the order so that idle-based
        # fallbacks cannot fire during the delivery latency window
        rescuer.idle = False
        rescuer.pending_assign += 1
        self._send_control("assign", (rescuer, tasks), rescuer)
        if msg is not None and self.publish is not None:
            self.publish(msg)

    def _advance_rescuer(self, r: _Rescuer, dt: float) -> None:
        target = self.scenario.target.pose
        cfg = self.session.config if self.session else self.scenario.channel
        if not r.tasks:
            r.idle = r.pending_assign == 0
            if r.sme.measuring:
                r.sme, reports = step(r.sme, dt, target, cfg, self.scenario.rf,
                                      self.scenario, r.meas_rng, self.shadowing)
                for rep in reports:
                    self._send_report(r, rep)
            else:
                r.sme = replace(r.sme, clock_s=r.sme.clock_s + dt)
            return
        r.idle = False
        task = r.tasks[0]
        if task.started_s is None:
            # routes that start at their destination complete immediately
            while (task.kind == "route"
                   and geo.polyline_length([r.sme.pose.xy()] + list(task.route)) <= geo.EPS):
                r.tasks.pop(0)
                self._finish_task(r, task)
                if not r.tasks:
                    self._advance_rescuer(r, dt)
                    return
                task = r.tasks[0]
            task.started_s = self.clock_s
            if task.kind == "route":
                route = list(task.route)
                # corridor and strip plans are end-agnostic; walk from
                # whichever end is closer instead of backtracking
                here = r.sme.pose.xy()
                if geo.dist(here, route[-1]) + geo.EPS < geo.dist(here, route[0]):
                    route.reverse()
                r.sme = set_route(r.sme, route)
            elif task.kind == "sweep":
                self._run_sweep(r, task)
            if task.label:
                self._event(f"{task.label}_started", actor=r.spec_id, **task.data.get("ev", {}))
        if task.kind == "route":
            r.sme, reports = step(r.sme, dt, target, cfg, self.scenario.rf,
                                  self.scenario, r.meas_rng, self.shadowing)
            for rep in reports:
                self._send_report(r, rep)
            if route_complete(r.sme):
                r.tasks.pop(0)
                self._finish_task(r, task)
        else:  # busy or sweep: stationary, radio silent for omni reports
            r.sme = replace(r.sme, clock_s=r.sme.clock_s + dt)
            if self.clock_s + dt >= task.started_s + task.duration_s - 1e-9:
                r.tasks.pop(0)
                self._finish_task(r, task)

    def _finish_task(self, r: _Rescuer, task: _Task) -> None:
        apply = task.data.get("apply")
        if apply == "enter":
            pose = r.sme.pose
            r.sme = replace(r.sme, speed_mps=1.2,
                            pose=replace(pose, building_index=task.data["building"],
                                         floor_index=0))
            self._event("entered_building", actor=r.spec_id,
                        building_index=task.data["building"])
        elif apply == "floor":
            pose = r.sme.pose
            r.sme = replace(r.sme, pose=replace(pose, floor_index=task.data["floor"]))
        elif apply == "exit":
            pose = r.sme.pose
            r.sme = replace(r.sme, speed_mps=r.orig_speed_mps,
                            pose=replace(pose, building_index=None,
                                         floor_index=None))

    def _run_sweep(self, r: _Rescuer, task: _Task) -> None:
        # the sweep happens over [now, now + duration]; results hit the wire at
        # completion and ride the control stream back to the server
        cfg = self.session.config
        sme = replace(r.sme, measuring=False)
        _, profile = directional_sweep(
            sme, self.scenario.target.pose, cfg, self.scenario.rf, self.scenario,
            r.meas_rng, n_bearings=task.data["bearings"],
            dwell_s=self.timing.sweep_dwell_s, shadowing=self.shadowing)
        msg = SweepResultMsg.from_profile(self.session.session_id, r.spec_id,
                                          next(self._msg_seq), r.spec_id, profile)
        latency = r.net_rng.uniform(r.link.latency_lo_s, r.link.latency_hi_s)
        heapq.heappush(self._wire, (task.started_s + task.duration_s + latency,
                                    next(self._tie), "sweep", msg))

    # --- plans --------------------------------------------------------------

    def _issue_building_plan(self, boundary: SearchBoundary,
                             spacing: float | None = None,
                             snap_to_roads: bool = True) -> None:
        plan = plan_building_search(boundary, self.roster, self.scenario.roads,
                                    self.scenario.extent,
                                    spacing=spacing or self.timing.sweep_spacing_m,
                                    revision=next(self._plan_revision),
                                    snap_to_roads=snap_to_roads)
        for rid, a in plan.assignments.items():
            r = self.rescuers[rid]
            r.sme = replace(r.sme, measuring=True, mode="omni")
            tasks = [_Task(kind="route", route=a.routes[0], label="area_sweep")]
            msg = TaskAssignmentMsg(session_id=self.session.session_id, sender="lcs",
                                    seq=next(self._msg_seq), rescuer_id=rid,
                                    phase="building", strip=tuple(a.strip),
                                    routes=(tuple(map(tuple, a.routes[0])),),
                                    revision=plan.revision)
            self._assign_tasks(r, tasks, msg)
        self._event("plan_issued", phase="building", revision=plan.revision)

    def _issue_floor_plan(self, building_index: int) -> None:
        b = self.scenario.buildings[building_index]
        plan = plan_floor_search(b, building_index, self.roster,
                                 revision=next(self._plan_revision))
        self._floor_plan = plan
        for rid, a in plan.assignments.items():
            r = self.rescuers[rid]
            r.sme = replace(r.sme, measuring=True, mode="omni")
            tasks = self._entry_tasks(r, building_index)
            prev_floor = 0
            for f, route in zip(a.floors, a.routes):
                climb = abs(f - prev_floor) * self.timing.floor_change_s
                if climb > 0:
                    tasks.append(_Task(kind="busy", duration_s=climb, label="floor_change",
                                       data={"apply": "floor", "floor": f,
                                             "ev": {"floor": f}}))
                else:
                    tasks.append(_Task(kind="busy", duration_s=1e-6,
                                       data={"apply": "floor", "floor": f}))
                tasks.append(_Task(kind="route", route=list(route), label="corridor_walk",
                                   data={"ev": {"floor": f}}))
                prev_floor = f
            msg = TaskAssignmentMsg(session_id=self.session.session_id, sender="lcs",
                                    seq=next(self._msg_seq), rescuer_id=rid,
                                    phase="floor", floors=tuple(a.floors),
                                    building_index=building_index,
                                    routes=tuple(tuple(map(tuple, rt)) for rt in a.routes),
                                    revision=plan.revision)
            self._assign_tasks(r, tasks, msg)
        self._event("plan_issued", phase="floor", revision=plan.revision,
                    building_index=building_index)

    def _entry_tasks(self, r: _Rescuer, building_index: int) -> list[_Task]:
        b = self.scenario.buildings[building_index]
        tasks: list[_Task] = []
        pose = r.sme.pose
        if pose.building_index == building_index:
            return tasks
        if pose.building_index is not None:
            # leave the current building first
            tasks.append(_Task(kind="busy",
                               duration_s=pose.floor_index * self.timing.floor_change_s
                               + 5.0, label="exit_building", data={"apply": "exit"}))
        door = _nearest_boundary_point(b.footprint, pose.xy())
        tasks.append(_Task(kind="route", route=[door], label="approach"))
        corridor = b.floors[0].corridor
        entry, _ = geo.nearest_point_on_polyline(corridor, door)
        tasks.append(_Task(kind="busy", duration_s=3.0, label="enter_building",
                           data={"apply": "enter", "building": building_index}))
        if geo.dist(door, entry) > geo.EPS:
            tasks.append(_Task(kind="route", route=[entry]))
        return tasks

    # --- recompute and phase policy -----------------------------------------

    def _recompute(self) -> None:
        st = self.registry.sessions[self.session.session_id]
        # the store re-sorts on insert, so key the conversion cache by the
        # dedup identity rather than position
        cache = self._report_cache
        reports = []
        for m in st.reports:
            key = (m.sme_id, m.report_seq)
            r = cache.get(key)
            if r is None:
                r = m.to_report()
                cache[key] = r
            reports.append(r)
        outdoor = [r for r in reports if r.pose.building_index is None
                   and r.mode == "omni" and r.rssi.valid]
        gen = next(self._generation)
        if outdoor:
            region = MapRegion(kind="outdoor", rect=self.scenario.extent)
            self.outdoor_map = interpolate_idw(outdoor, region, cell_size=5.0,
                                               generation=gen)
        indoor: dict[tuple[int, int], list] = {}
        for r in reports:
            if r.pose.building_index is not None and r.mode == "omni" and r.rssi.valid:
                indoor.setdefault((r.pose.building_index, r.pose.floor_index),
                                  []).append(r)
        for key, reps in indoor.items():
            if len(reps) >= FLOOR_MAP_MIN_REPORTS:
                b = self.scenario.buildings[key[0]]
                region = MapRegion(kind="floor", rect=b.footprint,
                                   building_index=key[0], floor_index=key[1])
                self.floor_maps[key] = interpolate_idw(reps, region, cell_size=1.0,
                                                       generation=gen)
                self.floor_report_xy[key] = np.array(
                    [(r.pose.x, r.pose.y) for r in reps])
        window = [r for r in reports if r.mode == "omni" and r.rssi.valid]
        # thin by stride, never by recency: the caller is static, so early
        # reports carry the wide-baseline geometry the estimate needs most
        cap = self.timing.report_window
        if len(window) > cap:
            idx = np.unique(np.linspace(0, len(window) - 1, cap).round().astype(int))
            window = [window[i] for i in idx]
        if len(window) >= 4:
            try:
                est = estimate_position(window, self.scenario.extent, self.scenario.rf)
                est.floor_index = self.committed_floor
                self.estimate = est
                self.boundary = derive_boundary(est, self.scenario.extent)
            except EstimationError:
                pass
        self._publish_state()

    def _publish_state(self) -> None:
        if self.publish is None:
            return
        sid = self.session.session_id
        if self.outdoor_map is not None:
            self.publish(ContourMapMsg.from_contour(sid, "lcs", next(self._msg_seq),
                                                    self.outdoor_map))
        if self.committed_building is not None:
            for (bi, fi), cm in sorted(self.floor_maps.items()):
                if bi == self.committed_building:
                    self.publish(ContourMapMsg.from_contour(sid, "lcs",
                                                            next(self._msg_seq), cm))
        if self.estimate is not None and self.boundary is not None:
            e, b = self.estimate, self.boundary
            self.publish(LocationEstimateMsg(
                session_id=sid, sender="lcs", seq=next(self._msg_seq),
                x=e.x, y=e.y, cov=tuple(map(tuple, e.cov.tolist())),
                floor_index=e.floor_index, building_index=self.committed_building,
                n_reports=e.n_reports, timestamp_s=e.timestamp_s,
                degenerate=e.degenerate, boundary_center=b.center,
                boundary_semi_axes=b.semi_axes,
                boundary_orientation_rad=b.orientation_rad, boundary_rect=b.rect))

    def _all_idle(self) -> bool:
        return all(r.idle for r in self.rescuers.values())

    def _peak_excluding(self, cmap: ContourMap) -> tuple[Point, float] | None:
        """Strongest peak-eligible cell outside all sweep exclusion disks."""
        vals = cmap.peak_values
        if self.sweep_exclusions:
            ny, nx = vals.shape
            jj, ii = np.meshgrid(np.arange(nx), np.arange(ny))
            cx = cmap.origin[0] + (jj + 0.5) * cmap.cell_size
            cy = cmap.origin[1] + (ii + 0.5) * cmap.cell_size
            rr = self.timing.exclusion_radius_m ** 2
            masked = np.zeros(vals.shape, dtype=bool)
            for ex, ey in self.sweep_exclusions:
                masked |= (cx - ex) ** 2 + (cy - ey) ** 2 <= rr
            vals = np.where(masked, np.nan, vals)
        if not np.isfinite(vals).any():
            return None
        cell, dbm = find_peak(vals)
        return cmap.cell_center(cell), dbm

    def _policy_building_search(self) -> None:
        if self._hold_peak_dispatch:
            # a retry survey is in flight; pulling the rescuer off the strips
            # to chase the same stale peak is what burned the budget before
            if not self._all_idle():
                return
            self._hold_peak_dispatch = False
        if self.outdoor_map is None:
            return
        found = self._peak_excluding(self.outdoor_map)
        if found is None:
            return
        peak, peak_dbm = found
        self.peak_history.append((self.clock_s, peak))
        t = self.timing
        st = self.registry.sessions[self.session.session_id]
        # rescanning the whole store every tick is quadratic; the multiset of
        # valid levels only changes when the store grows
        if len(st.reports) != self._valid_cache[0]:
            vals = [m.rssi_dbm for m in st.reports
                    if m.rssi_valid and m.building_index is None]
            p90 = float(np.percentile(vals, 90.0)) if len(vals) >= 4 else math.inf
            self._valid_cache = (len(st.reports), len(vals), p90)
        _, n_valid, p90_dbm = self._valid_cache
        recent = [(ts, p) for ts, p in self.peak_history if ts >= self.clock_s - t.peak_stable_s]
        covered = recent and recent[0][0] <= self.clock_s - t.peak_stable_s + 1.5 * t.recompute_interval_s
        stable = covered and all(geo.dist(p, peak) <= t.peak_stable_radius_m
                                 for _, p in recent)
        enough = n_valid >= t.min_reports_commit
        dominant = n_valid >= 4 and peak_dbm >= p90_dbm + t.peak_dominance_db
        if (stable and enough and dominant) or (self._all_idle() and n_valid >= 4):
            self._event("peak_stable", x=peak[0], y=peak[1],
                        peak_dbm=peak_dbm, n_valid=n_valid)
            if not any(_rect_distance(b.footprint, peak) <= t.candidate_radius_m
                       for b in self.scenario.buildings):
                # nothing to confirm against: driving out for a bearing sweep
                # would only burn the clock, so judge the open-field case on
                # the map we already have.  Only on a finished survey though;
                # a half-driven strip can show a lucky peaked profile
                if self._all_idle():
                    self._open_field(peak)
                return
            self._dispatch_to_peak(peak)

    def _dispatch_to_peak(self, peak: Point) -> None:
        rid = min(self.roster,
                  key=lambda r: geo.dist(self.rescuers[r].sme.pose.xy(), peak))
        self.designated = rid
        r = self.rescuers[rid]
        dest = peak
        bi = self.scenario.building_at(*peak)
        if bi is not None:
            fp = self.scenario.buildings[bi].footprint
            edge = _nearest_boundary_point(fp, peak)
            off = self.timing.standoff_m
            dx, dy = edge[0] - peak[0], edge[1] - peak[1]
            norm = math.hypot(dx, dy)
            if norm > geo.EPS:
                dest = (edge[0] + dx / norm * off, edge[1] + dy / norm * off)
            else:
                dest = (edge[0] + off, edge[1])
        dest = geo.clamp_to_rect(self.scenario.extent, *dest)
        self.outdoor_commit_peak_dbm = self.outdoor_map.peak_dbm
        tasks = []
        if geo.dist(r.sme.pose.xy(), dest) > geo.EPS:
            tasks.append(_Task(kind="route", route=[dest], label="drive_to_peak"))
        tasks.append(_Task(kind="sweep",
                           duration_s=self.timing.sweep_bearings * self.timing.sweep_dwell_s,
                           label="bearing_sweep",
                           data={"bearings": self.timing.sweep_bearings}))
        self._assign_tasks(r, tasks)
        self._event("rescuer_dispatched", actor=rid, x=dest[0], y=dest[1])
        self._transition("move_to_peak")

    def _policy_move_to_peak(self) -> None:
        r = self.rescuers[self.designated]
        if r.tasks and r.tasks[0].kind == "sweep" and r.tasks[0].started_s is not None:
            self._transition("building_confirm")

    def _policy_building_confirm(self) -> None:
        if not self.sweep_results:
            return
        sweep = self.sweep_results[-1]
        self.sweep_results.clear()
        contrast = max(sweep.mean_rssi_dbm) - min(sweep.mean_rssi_dbm)
        origin = (sweep.x, sweep.y)
        t = self.timing
        if contrast < t.profile_contrast_db:
            self.retries_building += 1
            self._event("inconclusive_sweep", actor=sweep.sme_id, contrast_db=contrast)
            if self.retries_building > t.max_retries:
                self._fail("building retries exhausted")
                return
            self.sweep_exclusions.append(origin)
            self.peak_history.clear()
            nxt = None if self.outdoor_map is None else self._peak_excluding(self.outdoor_map)
            if nxt is not None:
                # the map already holds detections elsewhere; trying the next
                # hot spot beats resurveying the whole boundary
                self._dispatch_to_peak(nxt[0])
            else:
                self._transition("building_search")
                self._issue_building_plan(self.boundary or self._fallback_boundary())
            return
        candidates = [bi for bi, b in enumerate(self.scenario.buildings)
                      if _rect_distance(b.footprint, origin) <= t.candidate_radius_m]
        if not candidates:
            self._open_field(origin)
            return
        best = sweep.best_bearing_rad
        # the refined bearing is good to a few degrees, so the first footprint
        # the ray pierces is the building in front of the beam; a sliver of a
        # corner does not count as pierced, and misses rank by how far the
        # bearing falls outside the footprint's angular span
        ranked = []
        for bi in candidates:
            fp = self.scenario.buildings[bi].footprint
            span = geo.ray_rect_span(origin, best, fp)
            if span is not None and span[1] - span[0] >= MIN_CHORD_M:
                ranked.append(((0.0, span[0], bi), bi))
            else:
                corners = ((fp[0], fp[1]), (fp[0], fp[3]), (fp[2], fp[1]), (fp[2], fp[3]))
                ang = min(abs(geo.angle_wrap(geo.bearing_to(origin, c) - best))
                          for c in corners)
                ranked.append(((ang, _rect_distance(fp, origin), bi), bi))
        ranked.sort()
        choice = next((bi for _, bi in ranked if bi not in self.excluded_buildings), None)
        if choice is None:
            self.retries_building += 1
            if self.retries_building > t.max_retries:
                self._fail("building retries exhausted")
                return
            self.excluded_buildings.clear()
            self.peak_history.clear()
            self._transition("building_search")
            self._issue_building_plan(self.boundary or self._fallback_boundary())
            return
        self.committed_building = choice
        self.building_time_s = self.clock_s
        self._event("building_committed", building_index=choice,
                    bearing_rad=sweep.best_bearing_rad, contrast_db=contrast)
        if self.until == "building_commit":
            self._success = choice == self.scenario.target.pose.building_index
            self._done = True
            return
        self._transition("floor_room_search")
        self._issue_floor_plan(choice)

    def _strongest_outdoor_report(self):
        if self.session is None:
            return None
        st = self.registry.sessions.get(self.session.session_id)
        if st is None:
            return None
        best = None
        for m in st.reports:
            if m.mode == "omni" and m.rssi_valid and m.building_index is None:
                if best is None or m.rssi_dbm > best.rssi_dbm:
                    best = m
        return best

    def _pass_peaked(self, strongest, ring=(5.0, 12.0), min_drop_db=5.0) -> bool:
        """True when the profile around the strongest report falls off the way
        a close pass must: samples a few meters from the pose are clearly
        quieter.  A shadowing artifact twenty meters out stays flat here."""
        if strongest is None or self.session is None:
            return False
        st = self.registry.sessions.get(self.session.session_id)
        if st is None:
            return False
        pose = (strongest.x, strongest.y)
        ring_max = -math.inf
        n_ring = 0
        for m in st.reports:
            if not (m.mode == "omni" and m.rssi_valid and m.building_index is None):
                continue
            d = geo.dist((m.x, m.y), pose)
            if ring[0] <= d <= ring[1]:
                n_ring += 1
                ring_max = max(ring_max, m.rssi_dbm)
        return n_ring >= 2 and strongest.rssi_dbm - ring_max >= min_drop_db

    def _open_field(self, origin: Point) -> None:
        """No building near the profiled peak, so the caller is in the open.

        The grid estimate inherits a bias of ten meters or more from the
        correlated shadowing, which is fatal at the outdoor find radius.  The
        fitted offset gives one check: the strongest report heard so far
        implies a range.  The offset also soaks up the local shadow though,
        so a hot artifact can fake a short range; a genuine drive-by leaves a
        second signature the artifact cannot, a sharply peaked profile around
        the strongest pose (path loss falls off fast at a few meters while
        the shadow is common-mode at that scale).  Demand both before
        committing, otherwise re-survey a tightening box with narrower
        off-road strips until somebody drives right past the caller.
        """
        t = self.timing
        strongest = self._strongest_outdoor_report()
        est = self.estimate
        d_implied = math.inf
        if strongest is not None and est is not None and not est.degenerate:
            n = self.scenario.rf.exponent_outdoor
            d_implied = 10.0 ** ((est.offset_db - strongest.rssi_dbm) / (10.0 * n))
        # never commit off the first road-snapped survey alone; it can be a
        # short stub that leaves most of the boundary unseen, and sparse data
        # passes any profile test by luck
        if (d_implied <= 0.6 * t.outdoor_found_radius_m
                and self.retries_building >= 1
                and self._pass_peaked(strongest)):
            self._commit_outdoor(origin)
            return
        self.retries_building += 1
        if self.retries_building > t.max_retries:
            self._commit_outdoor(origin)
            return
        self._event("open_field_retry", implied_range_m=round(d_implied, 1))
        self.peak_history.clear()
        anchor = None
        if est is not None and not est.degenerate:
            anchor = (est.x, est.y)
        elif strongest is not None:
            anchor = (strongest.x, strongest.y)
        if anchor is not None:
            # both the estimate and the apparent hot spot can sit a full
            # correlation length from the caller, so the focus box has to
            # cover that slop; a pass within a few meters then produces a
            # sample loud enough to bury the shadowing artifact
            r = min(max(1.5 * d_implied, 1.2 * self.scenario.rf.decorrelation_outdoor_m),
                    3.0 * self.scenario.initial_fix_sigma_m)
            focus = PositionEstimate(
                x=anchor[0], y=anchor[1], cov=np.eye(2) * (r / 3.0) ** 2,
                n_reports=0, timestamp_s=self.clock_s, nll=0.0, offset_db=0.0)
            boundary = derive_boundary(focus, self.scenario.extent)
        else:
            boundary = self.boundary or self._fallback_boundary()
        spacing = max(t.sweep_spacing_m * 0.5 ** self.retries_building, 8.0)
        self._hold_peak_dispatch = True
        self._transition("building_search")
        self._issue_building_plan(boundary, spacing=spacing, snap_to_roads=False)

    def _commit_outdoor(self, origin: Point) -> None:
        # no building nearby: the caller is in the open; the pose of the
        # strongest report beats the grid estimate because the link budget
        # already vouched for its range, and pushing it by the implied range
        # toward the estimate recovers the offset the drive-by could not close
        strongest = self._strongest_outdoor_report()
        est = self.estimate
        if strongest is not None:
            guess = (strongest.x, strongest.y)
            if est is not None and not est.degenerate:
                n = self.scenario.rf.exponent_outdoor
                d_imp = 10.0 ** ((est.offset_db - strongest.rssi_dbm) / (10.0 * n))
                vx, vy = est.x - strongest.x, est.y - strongest.y
                nv = math.hypot(vx, vy)
                if nv > geo.EPS:
                    guess = (strongest.x + vx / nv * d_imp,
                             strongest.y + vy / nv * d_imp)
        elif est is not None:
            guess = (est.x, est.y)
        else:
            guess = origin
        self.building_time_s = self.clock_s
        self._event("outdoor_committed", x=guess[0], y=guess[1])
        target = self.scenario.target.pose
        self._success = (target.building_index is None
                         and geo.dist(guess, target.xy()) <= self.timing.outdoor_found_radius_m)
        self._transition("found")
        self._done = True

    def _policy_floor_room_search(self) -> None:
        t = self.timing
        bi = self.committed_building
        maps = {f: cm for (b, f), cm in self.floor_maps.items() if b == bi}
        if self._all_idle():
            # everyone has finished their corridors; check the building is right
            best_peak = max((cm.peak_dbm for cm in maps.values()), default=None)
            if (best_peak is None or (self.outdoor_commit_peak_dbm is not None
                                      and best_peak < self.outdoor_commit_peak_dbm
                                      + t.wrong_building_margin_db)):
                self._wrong_building()
                return
        if not maps:
            return
        best_f = max(maps, key=lambda f: (maps[f].peak_dbm, -f))
        cm = maps[best_f]
        peak_xy = cm.peak_xy
        floors_present = self.scenario.buildings[bi].floor_count
        neighbors = [f for f in (best_f - 1, best_f + 1) if 0 <= f < floors_present]
        ok = self._peak_interior(bi, best_f, peak_xy, t.peak_interior_margin_m)
        for f in neighbors:
            if not ok:
                break
            ncm = maps.get(f)
            if ncm is None or not self._measured_near(bi, f, peak_xy,
                                                      t.floor_support_radius_m):
                ok = False
                break
            near = self._max_near(ncm, peak_xy, t.floor_support_radius_m)
            if near is None or cm.peak_dbm - near < t.floor_commit_margin_db:
                ok = False
                break
        if ok or self._all_idle():
            self._commit_floor(best_f, peak_xy)

    def _peak_interior(self, bi: int, floor: int, xy: Point, margin: float) -> bool:
        """A peak at the edge of the surveyed span is usually just the
        measurement frontier riding along with the rescuer; only trust one
        with coverage past it on the long axis of the survey. A span edge
        that reaches the corridor end has nothing beyond it to measure, so a
        peak there is genuine."""
        pos = self.floor_report_xy.get((bi, floor))
        if pos is None or len(pos) < 2:
            return False
        ax = int(np.argmax(pos.max(axis=0) - pos.min(axis=0)))
        lo, hi = float(pos[:, ax].min()), float(pos[:, ax].max())
        corridor = self.scenario.buildings[bi].floors[floor].corridor
        cvals = [p[ax] for p in corridor]
        low_ok = xy[ax] >= lo + margin or lo <= min(cvals) + 0.5
        high_ok = xy[ax] <= hi - margin or hi >= max(cvals) - 0.5
        return low_ok and high_ok

    def _measured_near(self, bi: int, floor: int, xy: Point, radius: float) -> bool:
        """True when the floor actually has a report within radius of xy, so the
        comparison is against coverage rather than interpolation reach."""
        pos = self.floor_report_xy.get((bi, floor))
        if pos is None or len(pos) == 0:
            return False
        d = np.hypot(pos[:, 0] - xy[0], pos[:, 1] - xy[1])
        return bool(d.min() <= radius)

    def _max_near(self, cm: ContourMap, xy: Point, radius: float):
        i0 = int((xy[1] - cm.origin[1]) / cm.cell_size)
        j0 = int((xy[0] - cm.origin[0]) / cm.cell_size)
        rad = max(int(math.ceil(radius / cm.cell_size)), 1)
        ny, nx = cm.values.shape
        lo_i, hi_i = max(i0 - rad, 0), min(i0 + rad + 1, ny)
        lo_j, hi_j = max(j0 - rad, 0), min(j0 + rad + 1, nx)
        if lo_i >= hi_i or lo_j >= hi_j:
            return None
        block = cm.values[lo_i:hi_i, lo_j:hi_j]
        if not np.isfinite(block).any():
            return None
        return float(np.nanmax(block))

    def _wrong_building(self) -> None:
        t = self.timing
        self.excluded_buildings.add(self.committed_building)
        self.retries_building += 1
        self._event("wrong_building", building_index=self.committed_building)
        if self.retries_building > t.max_retries:
            self._fail("building retries exhausted")
            return
        self.committed_building = None
        self.floor_maps.clear()
        self.floor_report_xy.clear()
        self.peak_history.clear()
        self._transition("building_search")
        self._issue_building_plan(self.boundary or self._fallback_boundary())

    def _floor_anchor(self, bi: int, floor: int) -> Point | None:
        """ML fit of the caller column from one floor's own reports.

        The fit averages over the whole measured profile, so a single hot
        shadowing draw cannot drag it the way it drags the map argmax.
        Reports are binned to a 1 m grid first so an idle rescuer parked at
        the corridor end cannot dominate the residual.
        """
        st = self.registry.sessions[self.session.session_id]
        bins: dict[tuple[int, int], list] = {}
        for msg in st.reports:
            r = msg.to_report()
            if (r.mode == "omni" and r.rssi.valid and r.pose.building_index == bi
                    and r.pose.floor_index == floor):
                bins.setdefault((round(r.pose.x), round(r.pose.y)), []).append(r)
        if len(bins) < FLOOR_MAP_MIN_REPORTS:
            return None
        merged = []
        for rs in bins.values():
            mean_dbm = float(np.mean([x.rssi.rssi_dbm for x in rs]))
            last = max(rs, key=lambda x: x.rssi.timestamp_s)
            merged.append(replace(last, rssi=replace(last.rssi, rssi_dbm=mean_dbm)))
        rf = self.scenario.rf
        try:
            est = estimate_position(merged, self.scenario.buildings[bi].footprint,
                                    rf, cell_size=1.0, exponent=rf.exponent_indoor)
        except EstimationError:
            return None
        return (est.x, est.y)

    def _commit_floor(self, floor: int, peak_xy: Point) -> None:
        self.committed_floor = floor
        if self.estimate is not None:
            self.estimate.floor_index = floor
        self._event("floor_committed", floor=floor, x=peak_xy[0], y=peak_xy[1])
        t = self.timing
        corridor = self.scenario.buildings[self.committed_building].floors[floor].corridor
        anchor = self._floor_anchor(self.committed_building, floor)
        s_peak = _arc_of_nearest(corridor, anchor if anchor is not None else peak_xy)
        length = geo.polyline_length(corridor)
        # straddle the anchor so the sweeps see the caller from opposite
        # sides and their bearings cross at the room instead of running down
        # the same diagonal
        n_pos = max(t.room_sweep_positions, 1)
        if n_pos == 1:
            ss = [min(max(s_peak, 0.0), length)]
        else:
            ss = [min(max(s_peak + t.room_offset_m * (2 * i / (n_pos - 1) - 1), 0.0),
                      length) for i in range(n_pos)]
        pts = [geo.polyline_point_at(corridor, s)[:2] for s in ss]

        def travel_cost(r: _Rescuer, pt: Point) -> float:
            cur = r.sme.pose.floor_index if r.sme.pose.indoor else 0
            climb = abs(floor - cur) * t.floor_change_s
            return climb + geo.dist(r.sme.pose.xy(), pt) / max(r.sme.speed_mps, geo.EPS)

        # one rescuer per position when possible so the sweeps run in parallel
        sweepers: list[tuple[_Rescuer, list[Point]]] = []
        pool = list(self.rescuers.values())
        for pt in pts:
            if pool:
                r = min(pool, key=lambda r: (travel_cost(r, pt), r.spec_id))
                pool.remove(r)
                sweepers.append((r, [pt]))
            else:
                r, chain = min(sweepers,
                               key=lambda sw: (geo.dist(sw[1][-1], pt), sw[0].spec_id))
                chain.append(pt)
        dur = t.room_sweep_bearings * t.sweep_dwell_s
        for r, chain in sweepers:
            tasks: list[_Task] = []
            cur_floor = r.sme.pose.floor_index if r.sme.pose.indoor else 0
            climb = abs(floor - cur_floor) * t.floor_change_s
            if climb > 0:
                tasks.append(_Task(kind="busy", duration_s=climb, label="floor_change",
                                   data={"apply": "floor", "floor": floor,
                                         "ev": {"floor": floor}}))
            prev = r.sme.pose.xy()
            for pt in chain:
                path = corridor_path(corridor, prev, pt)
                if path:
                    tasks.append(_Task(kind="route", route=path))
                tasks.append(_Task(kind="sweep", duration_s=dur, label="room_sweep",
                                   data={"bearings": t.room_sweep_bearings}))
                prev = pt
            self._assign_tasks(r, tasks)
        self.room_profiles.clear()
        self._transition("room_confirm")

    def _policy_room_confirm(self) -> None:
        t = self.timing
        if len(self.room_profiles) < t.room_sweep_positions:
            return
        profiles = list(self.room_profiles)
        self.room_profiles.clear()
        b = self.scenario.buildings[self.committed_building]
        corridor = b.floors[self.committed_floor].corridor
        rooms = b.floors[self.committed_floor].rooms
        cm = self.floor_maps.get((self.committed_building, self.committed_floor))
        anchor = self._floor_anchor(self.committed_building, self.committed_floor)
        if anchor is not None:
            # tie-break on the corridor projection so the row side is decided
            # by the sweep levels alone
            s = _arc_of_nearest(corridor, anchor)
            ax, ay, _ = geo.polyline_point_at(corridor, s)
            peak_xy = (ax, ay)
        elif cm is not None:
            peak_xy = cm.peak_xy
        else:
            peak_xy = (profiles[0].x, profiles[0].y)
        # score each room by the swept level toward its centroid, summed over
        # positions; the pattern shape is common-mode in shadowing, so the two
        # profiles triangulate even when the map peak or anchor is off
        scores = np.zeros(len(rooms))
        for p in profiles:
            scores += np.array([_level_toward(p, geo.rect_center(room))
                                for room in rooms])
        ranking = sorted(range(len(rooms)),
                         key=lambda ri: (-scores[ri],
                                         geo.dist(geo.rect_center(rooms[ri]), peak_xy),
                                         ri))
        self._room_ranking = ranking
        self._commit_room_from_ranking()

    def _commit_room_from_ranking(self) -> None:
        choice = next((ri for ri in self._room_ranking
                       if ri not in self.excluded_rooms), None)
        if choice is None:
            self._fail("room candidates exhausted")
            return
        self.committed_room = choice
        self.room_time_s = self.clock_s
        self._event("room_committed", room_index=choice, floor=self.committed_floor)
        target = self.scenario.target.pose
        correct = (self.committed_building == target.building_index
                   and self.committed_floor == target.floor_index
                   and choice == self.scenario.target_room_index())
        if correct:
            self._success = True
            self._event("found", room_index=choice)
            self._transition("found")
            self._done = True
            return
        # opening the door shows an empty room; strike it and try the next one
        self.retries_room += 1
        self.excluded_rooms.add(choice)
        self._event("wrong_room", room_index=choice)
        if self.retries_room > self.timing.max_retries:
            self._fail("room retries exhausted")
            return
        self._transition("floor_room_search")
        rid = self.designated or self.roster[0]
        plan = self._floor_plan
        if plan is not None:
            rid = next((a.rescuer_id for a in plan.assignments.values()
                        if self.committed_floor in a.floors), rid)
        r = self.rescuers[rid]
        tasks = [_Task(kind="busy", duration_s=self.timing.knock_s, label="door_check",
                       data={"ev": {"room_index": choice}})]
        self._assign_tasks(r, tasks)
        self._pending_recommit = True

    def _policy_phase(self) -> None:
        if self.phase == "building_search":
            self._policy_building_search()
        elif self.phase == "move_to_peak":
            self._policy_move_to_peak()
        elif self.phase == "building_confirm":
            self._policy_building_confirm()
        elif self.phase == "floor_room_search":
            if getattr(self, "_pending_recommit", False):
                if self._all_idle():
                    self._pending_recommit = False
                    self._transition("room_confirm")
                    self._commit_room_from_ranking()
            else:
                self._policy_floor_room_search()
        elif self.phase == "room_confirm":
            self._policy_room_confirm()

    # --- console commands -----------------------------------------------

    def _apply_commands(self) -> None:
        if self.command_queue is None:
            return
        while True:
            try:
                msg = self.command_queue.get_nowait()
            except Exception:
                return
            self._apply_command(msg)

    def _apply_command(self, msg: Message) -> None:
        if isinstance(msg, TaskAssignmentMsg) and msg.rescuer_id in self.rescuers:
            r = self.rescuers[msg.rescuer_id]
            tasks = [_Task(kind="route", route=[tuple(p) for p in rt], label="console_route")
                     for rt in msg.routes if len(rt) >= 1]
            if tasks:
                r.sme = replace(r.sme, measuring=True)
                self._assign_tasks(r, tasks)
                self._event("console_reroute", actor=msg.sender, rescuer=msg.rescuer_id)
        elif isinstance(msg, SessionEventMsg):
            if msg.event == "request_sweep" and msg.detail.get("rescuer_id") in self.rescuers:
                r = self.rescuers[msg.detail["rescuer_id"]]
                if r.idle:
                    dur = self.timing.sweep_bearings * self.timing.sweep_dwell_s
                    self._assign_tasks(r, [_Task(kind="sweep", duration_s=dur,
                                                 label="bearing_sweep",
                                                 data={"bearings": self.timing.sweep_bearings})])
                    self._event("console_sweep", actor=msg.sender,
                                rescuer=msg.detail["rescuer_id"])
            elif msg.event == "abort":
                self._fail("aborted by console")
        elif isinstance(msg, MeasurementReportMsg):
            # an externally connected unit feeding the live session
            if self.session is not None and msg.session_id == self.session.session_id:
                try:
                    self.registry.ingest(msg)
                except Exception as e:
                    self._event("report_rejected", sender=msg.sender, reason=str(e))

    # --- main loop --------------------------------------------------------

    def start(self) -> None:
        scen = self.scenario
        self.shadowing = ShadowingField.from_scenario(scen, self._world_seed)
        self.session = self.registry.start_session(
            scen.target.target_id, self.clock_s, scen.channel,
            reachable=scen.target.reachable)
        for rid in self.roster:
            self.registry.subscribe(self.session.session_id, rid)
        self.registry.subscribe(self.session.session_id, "console")
        fix = (scen.target.pose.x + float(self.policy_rng.standard_normal()) * scen.initial_fix_sigma_m,
               scen.target.pose.y + float(self.policy_rng.standard_normal()) * scen.initial_fix_sigma_m)
        self.initial_fix = geo.clamp_to_rect(scen.extent, *fix)
        self._event("session_started", target_id=scen.target.target_id,
                    fix_x=self.initial_fix[0], fix_y=self.initial_fix[1],
                    fix_sigma_m=scen.initial_fix_sigma_m)

    def tick(self) -> None:
        """One simulation step of one uplink period."""
        self._apply_commands()
        if self.phase == "setup":
            for msg in self.registry.poll_activation(self.clock_s):
                if self.publish is not None:
                    self.publish(msg)
            if self.session and self.registry.sessions[self.session.session_id].active:
                self._event("channel_active")
                if self.scenario.designated_building is not None:
                    self.committed_building = self.scenario.designated_building
                    self.building_time_s = self.clock_s
                    self._transition("floor_room_search")
                    self._issue_floor_plan(self.scenario.designated_building)
                else:
                    sigma = self.scenario.initial_fix_sigma_m
                    cov = np.eye(2) * sigma * sigma
                    fix_est = PositionEstimate(
                        x=self.initial_fix[0], y=self.initial_fix[1], cov=cov,
                        n_reports=0, timestamp_s=self.clock_s, nll=0.0,
                        offset_db=0.0)
                    self.boundary = derive_boundary(fix_est, self.scenario.extent)
                    self._transition("building_search")
                    self._issue_building_plan(self.boundary)
        for rid in self.roster:
            self._advance_rescuer(self.rescuers[rid], self.dt)
        self.step_i += 1
        self.clock_s = self.step_i * self.dt
        self._deliver_due()
        if self.session and self.registry.should_recompute(self.session.session_id,
                                                           self.clock_s):
            self._recompute()
        if not self._done and self.phase not in ("found", "failed"):
            self._policy_phase()
        if not self._done and self.clock_s > self.timeout_s:
            self._fail("timeout")

    def outcome(self) -> SearchOutcome:
        scen = self.scenario
        target = scen.target.pose
        building_correct = None
        if self.committed_building is not None or self.building_time_s is not None:
            building_correct = self.committed_building == target.building_index
        room_correct = None
        if self.committed_room is not None:
            room_correct = (self.committed_building == target.building_index
                            and self.committed_floor == target.floor_index
                            and self.committed_room == scen.target_room_index())
        return SearchOutcome(
            scenario_name=scen.name, policy=self.policy, seed=self.seed,
            success=self._success, phase_final=self.phase,
            total_time_s=self.clock_s,
            building_time_s=self.building_time_s, room_time_s=self.room_time_s,
            building_correct=building_correct, room_correct=room_correct,
            distances_m={rid: round(self.rescuers[rid].sme.distance_m, 3)
                         for rid in self.roster},
            n_reports=self.n_reports_seen,
            retries_building=self.retries_building, retries_room=self.retries_room,
            events=self.events)

    def run(self) -> SearchOutcome:
        self.start()
        while not self._done and self.phase not in ("found", "failed"):
            self.tick()
        return self.outcome()


# --- door-to-door baseline ---------------------------------------------------

def run_knock_baseline(scenario: Scenario, seed: int = 0) -> SearchOutcome:
    """Exhaustive door-knock search of the target building with no radio help.

    Rescuers split the floors round-robin, walk each corridor knocking on every
    door in corridor order, and climb stairs between their floors. The caller
    is found when someone knocks on the right door.
    """
    target = scenario.target.pose
    bi = scenario.designated_building
    if bi is None:
        bi = target.building_index
    if bi is None:
        raise ValueError("knock baseline needs an indoor target or designated building")
    b = scenario.buildings[bi]
    t = scenario.timing
    target_room = scenario.target_room_index()
    events = [SessionEvent(0.0, "lcs", "session_started",
                           {"policy": "knock_baseline", "building_index": bi})]
    roster = [r.id for r in scenario.rescuers]
    n = len(roster)
    floors_of = {rid: [f for f in range(b.floor_count) if roster.index(rid) == f % n]
                 for rid in roster}
    found_t: float | None = None
    distances = {}
    for rid, spec in zip(roster, scenario.rescuers):
        walk_speed = spec.speed_mps if spec.mode == "foot" else 1.2
        door = _nearest_boundary_point(b.footprint, spec.start.xy())
        dist_m = geo.dist(spec.start.xy(), door)
        clock = dist_m / walk_speed
        prev_floor = 0
        for f in floors_of[rid]:
            clock += abs(f - prev_floor) * t.floor_change_s
            prev_floor = f
            corridor = b.floors[f].corridor
            entry, _ = geo.nearest_point_on_polyline(corridor, door)
            s_at = _arc_of_nearest(corridor, entry)
            doors = sorted(
                ((_arc_of_nearest(corridor, geo.rect_center(room)), ri)
                 for ri, room in enumerate(b.floors[f].rooms)),
                key=lambda d: (abs(d[0] - s_at), d[0]))
            pos_s = s_at
            for door_s, ri in doors:
                walk = abs(door_s - pos_s)
                clock += walk / walk_speed
                dist_m += walk
                pos_s = door_s
                clock += t.knock_s
                if f == target.floor_index and ri == target_room and bi == target.building_index:
                    if found_t is None or clock < found_t:
                        found_t = clock
                    events.append(SessionEvent(round(clock, 3), rid, "found",
                                               {"room_index": ri, "floor": f}))
                    break
            else:
                continue
            break
        distances[rid] = round(dist_m, 3)
    success = found_t is not None and found_t <= t.timeout_s
    total = found_t if found_t is not None else t.timeout_s
    return SearchOutcome(
        scenario_name=scenario.name, policy="knock_baseline", seed=seed,
        success=success, phase_final="found" if success else "failed",
        total_time_s=round(total, 3), building_time_s=0.0,
        room_time_s=round(total, 3) if found_t is not None else None,
        building_correct=bi == target.building_index,
        room_correct=success or None,
        distances_m=distances, events=events)


def run_session(scenario: Scenario, policy: str = "helps", seed: int = 0,
                until: str = "found", publish=None, command_queue=None,
                timeout_s: float | None = None) -> SearchOutcome:
    """Run one search session to completion and return its outcome."""
    if policy == "knock_baseline":
        return run_knock_baseline(scenario, seed)
    runner = SessionRunner(scenario, policy=policy, seed=seed, until=until,
                           publish=publish, command_queue=command_queue,
                           timeout_s=timeout_s)
    return runner.run()
