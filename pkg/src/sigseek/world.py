"""World model: scenario documents (extent, buildings, roads, caller, rescuers)
plus the geometric queries the propagation model needs.

A scenario is a JSON document. Loading validates every structural invariant and
reports the first violation; serialize/load round-trips to an identical value.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, fields, replace
from typing import Any

import numpy as np

from . import geometry as geo
from .geometry import Point, Rect
from .propagation import RfParams
from .uplink import ChannelConfig

SCHEMA_VERSION = 1
DEVICE_HEIGHT_M = 1.5  # handset / vehicle antenna height above the local floor


class ScenarioError(ValueError):
    """Malformed or invariant-violating scenario document."""


@dataclass
class Pose:
    """Position plus heading. Indoor poses carry building and floor indices;
    outdoor poses carry neither."""

    x: float
    y: float
    heading: float = 0.0
    building_index: int | None = None
    floor_index: int | None = None

    def __post_init__(self) -> None:
        if (self.building_index is None) != (self.floor_index is None):
            raise ScenarioError("pose must set building_index and floor_index together")

    @property
    def indoor(self) -> bool:
        return self.building_index is not None

    def xy(self) -> Point:
        return (self.x, self.y)


@dataclass
class Floor:
    corridor: list[Point]
    rooms: list[Rect]


@dataclass
class Building:
    footprint: Rect
    floor_count: int
    floor_height: float
    floors: list[Floor]
    _cache: dict = field(default_factory=dict, compare=False, repr=False)

    @property
    def height(self) -> float:
        return self.floor_count * self.floor_height

    def ext_edges(self) -> np.ndarray:
        if "ext" not in self._cache:
            self._cache["ext"] = geo.rect_edges(self.footprint)
        return self._cache["ext"]

    def room_edges(self, floor_index: int) -> np.ndarray:
        key = ("rooms", floor_index)
        if key not in self._cache:
            rooms = self.floors[floor_index].rooms
            if rooms:
                self._cache[key] = np.concatenate([geo.rect_edges(r) for r in rooms])
            else:
                self._cache[key] = np.empty((0, 4))
        return self._cache[key]


@dataclass
class TargetPlacement:
    pose: Pose
    target_id: str = "caller-1"
    reachable: bool = True


@dataclass
class RescuerSpec:
    id: str
    start: Pose
    mode: str = "vehicle"  # "vehicle" | "foot"
    speed_mps: float | None = None
    pose_noise_m: float = 0.0

    def __post_init__(self) -> None:
        if self.mode not in ("vehicle", "foot"):
            raise ScenarioError(f"rescuer mode must be vehicle or foot, got {self.mode!r}")
        if self.speed_mps is None:
            self.speed_mps = 8.0 if self.mode == "vehicle" else 1.2


@dataclass
class TimingParams:
    """Durations and decision thresholds for the search orchestration."""

    setup_delay_s: float = 2.0
    recompute_interval_s: float = 1.0
    report_window: int = 200
    sweep_bearings: int = 12
    sweep_dwell_s: float = 1.25
    room_sweep_bearings: int = 8
    room_sweep_positions: int = 2
    room_offset_m: float = 6.0
    peak_stable_s: float = 8.0
    peak_stable_radius_m: float = 10.0
    min_reports_commit: int = 40
    # a stale hot cell can sit still while coverage moves elsewhere, so
    # stability alone is not commitment-worthy; the peak must also clear the
    # background of weak scattered detections
    peak_dominance_db: float = 6.0
    sweep_spacing_m: float = 40.0
    candidate_radius_m: float = 100.0
    standoff_m: float = 3.0
    # disk blanked out around a vantage whose sweep read nothing; sized to the
    # outdoor shadowing correlation length so the whole hot patch goes with it
    exclusion_radius_m: float = 25.0
    floor_change_s: float = 20.0
    knock_s: float = 20.0
    floor_commit_margin_db: float = 6.0
    # must be small: near the target the field falls off 15+ dB over a few
    # meters, so a neighbor-floor value measured further away than this says
    # nothing about the column under the peak
    floor_support_radius_m: float = 3.0
    peak_interior_margin_m: float = 3.0
    wrong_building_margin_db: float = 5.0
    profile_contrast_db: float = 3.0
    outdoor_found_radius_m: float = 10.0
    max_retries: int = 3
    timeout_s: float = 1800.0

    def validate(self) -> None:
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, (int, float)) and v <= 0:
                raise ScenarioError(f"timing.{f.name} must be positive")


@dataclass
class ObstructionCount:
    exterior_walls: int = 0
    interior_walls: int = 0
    floors_crossed: int = 0


@dataclass
class Scenario:
    extent: Rect
    buildings: list[Building]
    roads: list[list[Point]]
    target: TargetPlacement
    rescuers: list[RescuerSpec]
    rf: RfParams
    channel: ChannelConfig
    timing: TimingParams
    seed: int
    name: str = "scenario"
    schema_version: int = SCHEMA_VERSION
    initial_fix_sigma_m: float = 41.7
    designated_building: int | None = None

    # --- geometry queries ---------------------------------------------------

    def pose_z(self, pose: Pose) -> float:
        """Antenna height above ground for a pose."""
        if pose.building_index is None:
            return DEVICE_HEIGHT_M
        if not 0 <= pose.building_index < len(self.buildings):
            raise ScenarioError(f"pose references building {pose.building_index}")
        b = self.buildings[pose.building_index]
        if not 0 <= pose.floor_index < b.floor_count:
            raise ScenarioError(f"pose references floor {pose.floor_index}")
        return pose.floor_index * b.floor_height + DEVICE_HEIGHT_M

    def building_at(self, x: float, y: float) -> int | None:
        for i, b in enumerate(self.buildings):
            if geo.rect_contains(b.footprint, x, y):
                return i
        return None

    def obstructions_between(self, a: Pose, b: Pose) -> ObstructionCount:
        """Count exterior walls, interior walls and floor slabs pierced by the
        straight 3-D segment between two poses.

        Interior walls are the room partitions of whichever floor the segment
        passes through at the crossing point; a partition shared by two rooms
        (or lying on the footprint boundary) counts once.
        """
        za, zb = self.pose_z(a), self.pose_z(b)
        p0, p1 = (a.x, a.y), (b.x, b.y)
        out = ObstructionCount()
        for bld in self.buildings:
            fp = bld.footprint
            span = geo.segment_rect_interval(p0, p1, fp)
            if span is None:
                continue
            fh = bld.floor_height
            ext_t = []
            for t in geo.segment_edge_crossings(p0, p1, bld.ext_edges()):
                z = za + t * (zb - za)
                if -geo.EPS <= z <= bld.height + geo.EPS:
                    ext_t.append(round(float(t), 7))
            out.exterior_walls += len(ext_t)
            ext_set = set(ext_t)
            # z is linear in t, so the heights at the clipped span endpoints
            # bound every crossing inside this footprint
            z0, z1 = za + span[0] * (zb - za), za + span[1] * (zb - za)
            fi_lo = max(0, int((min(z0, z1) - geo.EPS) // fh))
            fi_hi = min(bld.floor_count - 1, int((max(z0, z1) + geo.EPS) // fh))
            for fi in range(fi_lo, fi_hi + 1):
                edges = bld.room_edges(fi)
                if edges.size == 0:
                    continue
                seen: set[float] = set()
                for t in geo.segment_edge_crossings(p0, p1, edges):
                    z = za + float(t) * (zb - za)
                    if min(int(z // fh), bld.floor_count - 1) != fi:
                        continue
                    key = round(float(t), 7)
                    if key not in ext_set:
                        seen.add(key)
                out.interior_walls += len(seen)
            for k in range(1, bld.floor_count):
                z = k * fh
                if (za - z) * (zb - z) < 0.0:
                    t = (z - za) / (zb - za)
                    x = p0[0] + t * (p1[0] - p0[0])
                    y = p0[1] + t * (p1[1] - p0[1])
                    if geo.rect_contains(fp, x, y, tol=geo.EPS):
                        out.floors_crossed += 1
        return out

    def target_room_index(self) -> int | None:
        """Index of the room containing the caller, None when outdoors."""
        pose = self.target.pose
        if not pose.indoor:
            return None
        floor = self.buildings[pose.building_index].floors[pose.floor_index]
        for i, room in enumerate(floor.rooms):
            if geo.rect_contains(room, pose.x, pose.y):
                return i
        return None

    # --- validation -----------------------------------------------------

    def validate(self) -> None:
        if geo.rect_area(self.extent) <= 0.0:
            raise ScenarioError("extent must have positive area")
        for bi, b in enumerate(self.buildings):
            where = f"buildings[{bi}]"
            if geo.rect_area(b.footprint) <= 0.0:
                raise ScenarioError(f"{where}.footprint must have positive area")
            if not geo.rect_inside(b.footprint, self.extent):
                raise ScenarioError(f"{where}.footprint outside extent")
            if b.floor_count < 1:
                raise ScenarioError(f"{where} must have at least one floor")
            if b.floor_height <= 0.0:
                raise ScenarioError(f"{where}.floor_height must be positive")
            if len(b.floors) != b.floor_count:
                raise ScenarioError(f"{where}: floor_count != len(floors)")
            for fi, fl in enumerate(b.floors):
                fw = f"{where}.floors[{fi}]"
                if len(fl.rooms) < 1:
                    raise ScenarioError(f"{fw} must have at least one room")
                for ri, room in enumerate(fl.rooms):
                    if geo.rect_area(room) <= 0.0:
                        raise ScenarioError(f"{fw}.rooms[{ri}] must have positive area")
                    if not geo.rect_inside(room, b.footprint):
                        raise ScenarioError(f"{fw}.rooms[{ri}] outside footprint")
                for ri in range(len(fl.rooms)):
                    for rj in range(ri + 1, len(fl.rooms)):
                        if geo.rect_overlap_area(fl.rooms[ri], fl.rooms[rj]) > 1e-9:
                            raise ScenarioError(f"{fw}.rooms[{ri}] overlaps rooms[{rj}]")
                if len(fl.corridor) < 2:
                    raise ScenarioError(f"{fw}.corridor needs at least 2 points")
                for p in fl.corridor:
                    if not geo.rect_contains(b.footprint, p[0], p[1], tol=geo.EPS):
                        raise ScenarioError(f"{fw}.corridor leaves the footprint")
        for ri, road in enumerate(self.roads):
            if len(road) < 2:
                raise ScenarioError(f"roads[{ri}] needs at least 2 points")
            for p in road:
                if not geo.rect_contains(self.extent, p[0], p[1], tol=geo.EPS):
                    raise ScenarioError(f"roads[{ri}] leaves the extent")
        self._validate_pose(self.target.pose, "target.pose")
        if self.target.pose.indoor and self.target_room_index() is None:
            raise ScenarioError("target.pose must lie inside a room")
        if not self.rescuers:
            raise ScenarioError("at least one rescuer is required")
        seen_ids: set[str] = set()
        for i, r in enumerate(self.rescuers):
            if r.id in seen_ids:
                raise ScenarioError(f"duplicate rescuer id {r.id!r}")
            seen_ids.add(r.id)
            self._validate_pose(r.start, f"rescuers[{i}].start")
            if r.speed_mps <= 0.0:
                raise ScenarioError(f"rescuers[{i}].speed_mps must be positive")
            if r.pose_noise_m < 0.0:
                raise ScenarioError(f"rescuers[{i}].pose_noise_m must be >= 0")
        try:
            self.rf.validate()
            self.channel.validate()
        except ValueError as e:
            raise ScenarioError(str(e)) from e
        self.timing.validate()
        if not (0 <= self.seed < 2 ** 63):
            raise ScenarioError("seed must be a non-negative 63-bit integer")
        if self.designated_building is not None:
            if not 0 <= self.designated_building < len(self.buildings):
                raise ScenarioError("designated_building index out of range")
        if self.initial_fix_sigma_m <= 0.0:
            raise ScenarioError("initial_fix_sigma_m must be positive")

    def _validate_pose(self, pose: Pose, where: str) -> None:
        if not geo.rect_contains(self.extent, pose.x, pose.y, tol=geo.EPS):
            raise ScenarioError(f"{where} outside extent")
        if pose.indoor:
            if not 0 <= pose.building_index < len(self.buildings):
                raise ScenarioError(f"{where}.building_index out of range")
            b = self.buildings[pose.building_index]
            if not 0 <= pose.floor_index < b.floor_count:
                raise ScenarioError(f"{where}.floor_index out of range")
            if not geo.rect_contains(b.footprint, pose.x, pose.y, tol=geo.EPS):
                raise ScenarioError(f"{where} outside its building footprint")


def walls_between(a: Pose, b: Pose, scenario: Scenario) -> ObstructionCount:
    """Obstruction counts for the segment a->b; both poses must be in the extent."""
    for pose, name in ((a, "a"), (b, "b")):
        if not geo.rect_contains(scenario.extent, pose.x, pose.y, tol=geo.EPS):
            raise ScenarioError(f"pose {name} outside extent")
    return scenario.obstructions_between(a, b)


def route_point_at(route: list[Point], s: float) -> Pose:
    """Pose at arc length s along a route, heading tangent to the segment."""
    x, y, heading = geo.polyline_point_at(route, s)
    return Pose(x=x, y=y, heading=heading)


# --- JSON mapping ---------------------------------------------------------

def _kwargs_for(cls, d: dict[str, Any]) -> dict[str, Any]:
    known = {f.name for f in fields(cls) if f.init and not f.name.startswith("_")}
    return {k: v for k, v in d.items() if k in known}


def _pose_from(d: dict[str, Any], where: str) -> Pose:
    try:
        return Pose(**_kwargs_for(Pose, d))
    except TypeError as e:
        raise ScenarioError(f"{where}: {e}") from e


def _pose_to(p: Pose) -> dict[str, Any]:
    return {"x": p.x, "y": p.y, "heading": p.heading,
            "building_index": p.building_index, "floor_index": p.floor_index}


def _rect(v: Any, where: str) -> Rect:
    if not (isinstance(v, (list, tuple)) and len(v) == 4):
        raise ScenarioError(f"{where} must be [x0, y0, x1, y1]")
    x0, y0, x1, y1 = (float(c) for c in v)
    if x1 <= x0 or y1 <= y0:
        raise ScenarioError(f"{where} must satisfy x0 < x1 and y0 < y1")
    return (x0, y0, x1, y1)


def _points(v: Any, where: str) -> list[Point]:
    if not isinstance(v, (list, tuple)):
        raise ScenarioError(f"{where} must be a list of [x, y] points")
    out = []
    for i, p in enumerate(v):
        if not (isinstance(p, (list, tuple)) and len(p) == 2):
            raise ScenarioError(f"{where}[{i}] must be [x, y]")
        out.append((float(p[0]), float(p[1])))
    return out


def scenario_from_dict(doc: dict[str, Any]) -> Scenario:
    if not isinstance(doc, dict):
        raise ScenarioError("scenario document must be a JSON object")
    version = doc.get("schema_version", SCHEMA_VERSION)
    if int(version) != SCHEMA_VERSION:
        raise ScenarioError(f"unsupported schema_version {version}")
    for key in ("extent", "target", "rescuers", "seed"):
        if key not in doc:
            raise ScenarioError(f"missing required key {key!r}")
    extent = _rect(doc["extent"], "extent")
    buildings = []
    for bi, bd in enumerate(doc.get("buildings", [])):
        floors = []
        for fi, fd in enumerate(bd.get("floors", [])):
            floors.append(Floor(
                corridor=_points(fd.get("corridor", []), f"buildings[{bi}].floors[{fi}].corridor"),
                rooms=[_rect(r, f"buildings[{bi}].floors[{fi}].rooms[{ri}]")
                       for ri, r in enumerate(fd.get("rooms", []))],
            ))
        buildings.append(Building(
            footprint=_rect(bd.get("footprint"), f"buildings[{bi}].footprint"),
            floor_count=int(bd.get("floor_count", len(floors))),
            floor_height=float(bd.get("floor_height", 3.0)),
            floors=floors,
        ))
    roads = [_points(r, f"roads[{i}]") for i, r in enumerate(doc.get("roads", []))]
    td = doc["target"]
    target = TargetPlacement(
        pose=_pose_from(td.get("pose", {}), "target.pose"),
        target_id=str(td.get("target_id", "caller-1")),
        reachable=bool(td.get("reachable", True)),
    )
    rescuers = []
    for i, rd in enumerate(doc["rescuers"]):
        kw = _kwargs_for(RescuerSpec, rd)
        kw["start"] = _pose_from(rd.get("start", {}), f"rescuers[{i}].start")
        try:
            rescuers.append(RescuerSpec(**kw))
        except TypeError as e:
            raise ScenarioError(f"rescuers[{i}]: {e}") from e
    scen = Scenario(
        extent=extent,
        buildings=buildings,
        roads=roads,
        target=target,
        rescuers=rescuers,
        rf=RfParams(**_kwargs_for(RfParams, doc.get("rf", {}))),
        channel=ChannelConfig(**_kwargs_for(ChannelConfig, doc.get("channel", {}))),
        timing=TimingParams(**_kwargs_for(TimingParams, doc.get("timing", {}))),
        seed=int(doc["seed"]),
        name=str(doc.get("name", "scenario")),
        schema_version=SCHEMA_VERSION,
        initial_fix_sigma_m=float(doc.get("initial_fix_sigma_m", 41.7)),
        designated_building=(None if doc.get("designated_building") is None
                             else int(doc["designated_building"])),
    )
    scen.validate()
    return scen


def scenario_to_dict(s: Scenario) -> dict[str, Any]:
    def dc(obj) -> dict[str, Any]:
        return {f.name: getattr(obj, f.name) for f in fields(obj)
                if not f.name.startswith("_")}

    return {
        "schema_version": s.schema_version,
        "name": s.name,
        "extent": list(s.extent),
        "seed": s.seed,
        "buildings": [{
            "footprint": list(b.footprint),
            "floor_count": b.floor_count,
            "floor_height": b.floor_height,
            "floors": [{"corridor": [list(p) for p in fl.corridor],
                        "rooms": [list(r) for r in fl.rooms]} for fl in b.floors],
        } for b in s.buildings],
        "roads": [[list(p) for p in road] for road in s.roads],
        "target": {"target_id": s.target.target_id,
                   "pose": _pose_to(s.target.pose),
                   "reachable": s.target.reachable},
        "rescuers": [{"id": r.id, "start": _pose_to(r.start), "mode": r.mode,
                      "speed_mps": r.speed_mps, "pose_noise_m": r.pose_noise_m}
                     for r in s.rescuers],
        "rf": dc(s.rf),
        "channel": dc(s.channel),
        "timing": dc(s.timing),
        "initial_fix_sigma_m": s.initial_fix_sigma_m,
        "designated_building": s.designated_building,
    }


def load_scenario(text: str) -> Scenario:
    """Parse and validate a scenario document from JSON text."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ScenarioError(f"invalid JSON: {e}") from e
    return scenario_from_dict(doc)


def load_scenario_file(path: str) -> Scenario:
    with open(path, "r", encoding="utf-8") as fh:
        return load_scenario(fh.read())


def serialize_scenario(s: Scenario) -> str:
    return json.dumps(scenario_to_dict(s), indent=2, sort_keys=True) + "\n"


def with_target(s: Scenario, pose: Pose) -> Scenario:
    """Copy of the scenario with the caller moved (used for randomized trials)."""
    return replace(s, target=replace(s.target, pose=pose))
