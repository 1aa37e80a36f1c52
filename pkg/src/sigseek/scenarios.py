"""Built-in scenario constructors: a 25-building urban test area, a single
office building for room-level search, and a minimal open-field document.

The constructors return validated Scenario values; the bundled JSON files under
scenarios/ are serialized from these.
"""

from __future__ import annotations

import numpy as np

from .geometry import Rect, rect_center
from .propagation import RfParams
from .uplink import ChannelConfig
from .world import (Building, Floor, Pose, RescuerSpec, Scenario,
                    TargetPlacement, TimingParams, with_target)


def _grid_building(x0: float, y0: float) -> Building:
    """30 x 32 m block, five floors, eight rooms per floor split by a central
    north-south corridor."""
    fp: Rect = (x0, y0, x0 + 30.0, y0 + 32.0)
    floors = []
    for _ in range(5):
        rooms: list[Rect] = []
        for k in range(4):
            ylo = y0 + 8.0 * k
            rooms.append((x0, ylo, x0 + 14.0, ylo + 8.0))
            rooms.append((x0 + 16.0, ylo, x0 + 30.0, ylo + 8.0))
        corridor = [(x0 + 15.0, y0 + 1.0), (x0 + 15.0, y0 + 31.0)]
        floors.append(Floor(corridor=corridor, rooms=rooms))
    return Building(footprint=fp, floor_count=5, floor_height=3.0, floors=floors)


def make_testbed(seed: int = 1) -> Scenario:
    """250 x 300 m district: a 5 x 5 block grid with a road lattice between the
    blocks and three vehicle-mounted measurement units."""
    buildings = []
    for j in range(5):
        for i in range(5):
            buildings.append(_grid_building(50.0 * i + 10.0, 60.0 * j + 14.0))
    roads = []
    for i in range(6):
        roads.append([(50.0 * i, 0.0), (50.0 * i, 300.0)])
    for j in range(6):
        roads.append([(0.0, 60.0 * j), (250.0, 60.0 * j)])
    target = TargetPlacement(pose=Pose(x=117.0, y=138.0, building_index=12,
                                       floor_index=2))
    rescuers = [
        RescuerSpec(id="sme-1", start=Pose(0.0, 0.0), mode="vehicle"),
        RescuerSpec(id="sme-2", start=Pose(250.0, 0.0), mode="vehicle"),
        RescuerSpec(id="sme-3", start=Pose(0.0, 300.0), mode="vehicle"),
    ]
    scen = Scenario(extent=(0.0, 0.0, 250.0, 300.0), buildings=buildings,
                    roads=roads, target=target, rescuers=rescuers,
                    rf=RfParams(), channel=ChannelConfig(), timing=TimingParams(),
                    seed=seed, name="urban-testbed", initial_fix_sigma_m=41.7)
    scen.validate()
    return scen


def make_office(seed: int = 1) -> Scenario:
    """One 40 x 20 m office slab with five floors of twenty 4 x 8 m rooms along
    a central corridor; the building is pre-designated so sessions start at the
    floor/room phase. Also the stage for the door-knock baseline."""
    x0, y0 = 20.0, 10.0
    fp: Rect = (x0, y0, x0 + 40.0, y0 + 20.0)
    floors = []
    for _ in range(5):
        rooms: list[Rect] = []
        for k in range(10):
            xlo = x0 + 4.0 * k
            rooms.append((xlo, y0, xlo + 4.0, y0 + 8.0))
        for k in range(10):
            xlo = x0 + 4.0 * k
            rooms.append((xlo, y0 + 12.0, xlo + 4.0, y0 + 20.0))
        corridor = [(x0 + 1.0, y0 + 10.0), (x0 + 39.0, y0 + 10.0)]
        floors.append(Floor(corridor=corridor, rooms=rooms))
    building = Building(footprint=fp, floor_count=5, floor_height=3.0,
                        floors=floors)
    target = TargetPlacement(pose=Pose(x=38.0, y=26.0, building_index=0,
                                       floor_index=3))
    rescuers = [
        RescuerSpec(id="rescuer-1", start=Pose(16.0, 18.0), mode="foot"),
        RescuerSpec(id="rescuer-2", start=Pose(16.0, 20.0), mode="foot"),
        RescuerSpec(id="rescuer-3", start=Pose(16.0, 22.0), mode="foot"),
    ]
    scen = Scenario(extent=(0.0, 0.0, 80.0, 40.0), buildings=[building],
                    roads=[[(10.0, 20.0), (70.0, 20.0)]], target=target,
                    rescuers=rescuers, rf=RfParams(), channel=ChannelConfig(),
                    timing=TimingParams(), seed=seed, name="office-floors",
                    designated_building=0, initial_fix_sigma_m=15.0)
    scen.validate()
    return scen


def make_minimal(seed: int = 1) -> Scenario:
    """Open field, one unit, caller in the clear. Smallest valid document."""
    scen = Scenario(extent=(0.0, 0.0, 120.0, 120.0), buildings=[],
                    roads=[[(0.0, 60.0), (120.0, 60.0)],
                           [(60.0, 0.0), (60.0, 120.0)]],
                    target=TargetPlacement(pose=Pose(80.0, 70.0)),
                    rescuers=[RescuerSpec(id="sme-1", start=Pose(5.0, 60.0),
                                          mode="vehicle")],
                    rf=RfParams(), channel=ChannelConfig(), timing=TimingParams(),
                    seed=seed, name="minimal-open-field", initial_fix_sigma_m=20.0)
    scen.validate()
    return scen


def make_freespace(seed: int = 1, span: float = 400.0) -> Scenario:
    """Empty extent used by estimator convergence studies."""
    scen = Scenario(extent=(0.0, 0.0, span, span), buildings=[], roads=[],
                    target=TargetPlacement(pose=Pose(span / 2.0, span / 2.0)),
                    rescuers=[RescuerSpec(id="sme-1", start=Pose(5.0, 5.0),
                                          mode="vehicle", speed_mps=5.0)],
                    rf=RfParams(shadowing_sigma_outdoor_db=4.0),
                    channel=ChannelConfig(), timing=TimingParams(), seed=seed,
                    name="freespace", initial_fix_sigma_m=50.0)
    scen.validate()
    return scen


BUILTIN = {
    "testbed": make_testbed,
    "office": make_office,
    "minimal": make_minimal,
    "freespace": make_freespace,
}


def randomize_target(scenario: Scenario, rng: np.random.Generator,
                     placement: str = "building", margin_m: float = 0.5) -> Scenario:
    """Move the caller to a uniformly random room.

    placement "building" draws the building uniformly; "room" keeps the current
    (or designated) building and draws only floor and room; "keep" returns the
    scenario unchanged. The draw order is fixed so a given rng state always
    produces the same placement regardless of the search policy under test.
    """
    if placement == "keep":
        return scenario
    if placement == "building":
        if not scenario.buildings:
            # open terrain: uniform over the extent, clear of nothing
            x0, y0, x1, y1 = scenario.extent
            x = float(rng.uniform(x0 + margin_m, x1 - margin_m))
            y = float(rng.uniform(y0 + margin_m, y1 - margin_m))
            return with_target(scenario, Pose(x=x, y=y))
        bi = int(rng.integers(len(scenario.buildings)))
    elif placement == "room":
        bi = scenario.designated_building
        if bi is None:
            bi = scenario.target.pose.building_index
        if bi is None:
            raise ValueError("room placement needs a designated or target building")
    else:
        raise ValueError(f"unknown placement {placement!r}")
    b = scenario.buildings[bi]
    fi = int(rng.integers(b.floor_count))
    ri = int(rng.integers(len(b.floors[fi].rooms)))
    room = b.floors[fi].rooms[ri]
    m = min(margin_m, (room[2] - room[0]) / 4.0, (room[3] - room[1]) / 4.0)
    x = float(rng.uniform(room[0] + m, room[2] - m))
    y = float(rng.uniform(room[1] + m, room[3] - m))
    return with_target(scenario, Pose(x=x, y=y, building_index=bi, floor_index=fi))
