"""Scenario geometry: obstruction counting, validation, serialization."""

import math

import pytest

from sigseek.world import (Pose, RescuerSpec, ScenarioError, load_scenario,
                           route_point_at, scenario_from_dict,
                           scenario_to_dict, serialize_scenario, walls_between,
                           with_target)
from support import open_room_building, tiny_scenario, two_room_building


def test_pose_requires_paired_indices():
    with pytest.raises(ScenarioError):
        Pose(x=1.0, y=2.0, building_index=0)
    with pytest.raises(ScenarioError):
        Pose(x=1.0, y=2.0, floor_index=1)
    assert Pose(x=1.0, y=2.0).indoor is False
    assert Pose(x=1.0, y=2.0, building_index=0, floor_index=2).indoor is True


def test_obstructions_zero_in_open_terrain():
    s = tiny_scenario(buildings=[])
    obs = walls_between(Pose(x=5.0, y=5.0), Pose(x=95.0, y=95.0), s)
    assert (obs.exterior_walls, obs.interior_walls, obs.floors_crossed) == (0, 0, 0)


def test_exterior_and_interior_wall_counts():
    # segment fully crossing the footprint pierces both exterior walls and
    # the single shared partition at x=20 exactly once
    s = tiny_scenario(buildings=[two_room_building()],
                      target=Pose(x=15.0, y=20.0, building_index=0, floor_index=0))
    obs = walls_between(Pose(x=0.0, y=20.0), Pose(x=40.0, y=20.0), s)
    assert obs.exterior_walls == 2
    assert obs.interior_walls == 1
    assert obs.floors_crossed == 0


def test_single_exterior_wall_into_building():
    s = tiny_scenario(buildings=[open_room_building()],
                      target=Pose(x=15.0, y=20.0, building_index=0, floor_index=0))
    obs = walls_between(Pose(x=0.0, y=20.0),
                        Pose(x=15.0, y=20.0, building_index=0, floor_index=0), s)
    assert obs.exterior_walls == 1
    assert obs.interior_walls == 0
    assert obs.floors_crossed == 0


def test_floor_slabs_between_floors():
    # first to third floor inside one building: two slabs, no walls (the
    # single room's edges coincide with the footprint)
    s = tiny_scenario(buildings=[open_room_building()],
                      target=Pose(x=15.0, y=20.0, building_index=0, floor_index=0))
    a = Pose(x=15.0, y=20.0, building_index=0, floor_index=0)
    b = Pose(x=25.0, y=20.0, building_index=0, floor_index=2)
    obs = walls_between(a, b, s)
    assert obs.floors_crossed == 2
    assert obs.exterior_walls == 0


def test_partition_counted_on_the_floor_it_is_crossed():
    # slanted path crosses x=20 at z between floors 1 and 2; only that
    # floor's partition may count
    s = tiny_scenario(buildings=[two_room_building()],
                      target=Pose(x=15.0, y=20.0, building_index=0, floor_index=0))
    a = Pose(x=15.0, y=20.0, building_index=0, floor_index=0)
    b = Pose(x=25.0, y=20.0, building_index=0, floor_index=2)
    obs = walls_between(a, b, s)
    # crossing at x=20 happens at t=0.5, z=4.5m -> floor index 1
    assert obs.interior_walls == 1
    assert obs.floors_crossed == 2


def test_target_room_index():
    s = tiny_scenario(buildings=[two_room_building()],
                      target=Pose(x=25.0, y=15.0, building_index=0, floor_index=0))
    assert s.target_room_index() == 1
    s2 = with_target(s, Pose(x=12.0, y=15.0, building_index=0, floor_index=0))
    assert s2.target_room_index() == 0
    s3 = with_target(s, Pose(x=60.0, y=60.0))
    assert s3.target_room_index() is None


def test_validation_rejects_overlapping_rooms():
    b = two_room_building()
    b.floors[0].rooms[1] = (15.0, 10.0, 30.0, 30.0)
    with pytest.raises(ScenarioError):
        tiny_scenario(buildings=[b],
                      target=Pose(x=12.0, y=15.0, building_index=0, floor_index=0))


def test_validation_rejects_corridor_outside_footprint():
    b = open_room_building()
    b.floors[1].corridor = [(12.0, 20.0), (45.0, 20.0)]
    with pytest.raises(ScenarioError):
        tiny_scenario(buildings=[b],
                      target=Pose(x=12.0, y=15.0, building_index=0, floor_index=0))


def test_validation_rejects_duplicate_rescuer_ids():
    s = tiny_scenario()
    s.rescuers.append(RescuerSpec(id="sme-1", start=Pose(x=4.0, y=50.0)))
    with pytest.raises(ScenarioError):
        s.validate()


def test_validation_rejects_indoor_target_outside_room():
    b = two_room_building()
    # shrink the rooms so the corridor strip at y=20 is uncovered
    b.floors[0].rooms = [(10.0, 10.0, 20.0, 18.0), (20.0, 10.0, 30.0, 18.0)]
    with pytest.raises(ScenarioError):
        tiny_scenario(buildings=[b],
                      target=Pose(x=15.0, y=25.0, building_index=0, floor_index=0))


def test_serialization_round_trip():
    s = tiny_scenario(buildings=[two_room_building()],
                      target=Pose(x=25.0, y=15.0, building_index=0, floor_index=1))
    doc = scenario_to_dict(s)
    back = scenario_from_dict(doc)
    assert back == s
    assert load_scenario(serialize_scenario(s)) == s


def test_from_dict_ignores_unknown_keys():
    s = tiny_scenario()
    doc = scenario_to_dict(s)
    doc["annotation"] = "survey of the north lot"
    doc["rescuers"][0]["callsign"] = "alpha"
    assert scenario_from_dict(doc) == s


def test_route_point_at():
    route = [(0.0, 0.0), (10.0, 0.0), (10.0, 10.0)]
    p = route_point_at(route, 5.0)
    assert (p.x, p.y) == (5.0, 0.0)
    assert abs(p.heading) < 1e-9
    p = route_point_at(route, 15.0)
    assert (p.x, p.y) == (10.0, 5.0)
    assert abs(p.heading - math.pi / 2) < 1e-9
