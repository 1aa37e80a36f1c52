"""Shared builders for the test suite."""

import itertools

from sigseek.protocol import (CallConnectRequest, ChannelConfigMsg,
                              ContourMapMsg, ErrorMsg, LocationEstimateMsg,
                              MeasurementReportMsg, SessionEventMsg,
                              SweepResultMsg, TaskAssignmentMsg)
from sigseek.sme import MeasurementReport
from sigseek.uplink import RssiSample
from sigseek.world import (Building, Floor, Pose, RescuerSpec, Scenario,
                           TargetPlacement, TimingParams)
from sigseek.propagation import RfParams
from sigseek.uplink import ChannelConfig

_seq = itertools.count()


def mk_report(x, y, rssi_dbm, sme_id="sme-1", seq=None, t=0.0, valid=True,
              mode="omni", building_index=None, floor_index=None):
    """One measurement report at (x, y) with the given RSSI reading."""
    if seq is None:
        seq = next(_seq)
    pose = Pose(x=float(x), y=float(y), building_index=building_index,
                floor_index=floor_index)
    return MeasurementReport(
        sme_id=sme_id, target_id="caller-1", seq=seq, timestamp_s=float(t),
        pose=pose, mode=mode,
        rssi=RssiSample(timestamp_s=float(t), rssi_dbm=float(rssi_dbm),
                        valid=valid))


def two_room_building(floor_count=3):
    """20x20 footprint at (10,10), rooms split at x=20 on every floor."""
    floors = [Floor(corridor=[(12.0, 20.0), (28.0, 20.0)],
                    rooms=[(10.0, 10.0, 20.0, 30.0), (20.0, 10.0, 30.0, 30.0)])
              for _ in range(floor_count)]
    return Building(footprint=(10.0, 10.0, 30.0, 30.0),
                    floor_count=floor_count, floor_height=3.0, floors=floors)


def open_room_building(floor_count=3):
    """Same footprint but one full-footprint room per floor (no partitions)."""
    floors = [Floor(corridor=[(12.0, 20.0), (28.0, 20.0)],
                    rooms=[(10.0, 10.0, 30.0, 30.0)])
              for _ in range(floor_count)]
    return Building(footprint=(10.0, 10.0, 30.0, 30.0),
                    floor_count=floor_count, floor_height=3.0, floors=floors)


def _indoor_pair(rng):
    if rng.random() < 0.5:
        return None, None
    return int(rng.integers(0, 30)), int(rng.integers(0, 6))


def random_message(rng):
    """One random protocol message, any variant, with JSON-safe field values."""
    sid = f"s{int(rng.integers(1, 10000)):04d}"
    sender = str(rng.choice(["lcs", "sme-1", "sme-2", "console-1"]))
    seq = int(rng.integers(0, 1 << 20))
    kind = int(rng.integers(0, 9))
    if kind == 0:
        return CallConnectRequest(session_id="", sender=sender, seq=seq,
                                  target_id=f"caller-{int(rng.integers(1, 9))}",
                                  requester=str(sender))
    if kind == 1:
        return ChannelConfigMsg(session_id=sid, sender="lcs", seq=seq,
                                tx_power_dbm=float(rng.uniform(10, 23)),
                                period_ms=float(rng.choice([40.0, 80.0, 160.0])),
                                activated_at_s=float(rng.uniform(0, 10)))
    if kind == 2:
        bi, fi = _indoor_pair(rng)
        directional = bool(rng.random() < 0.3)
        return MeasurementReportMsg(
            session_id=sid, sender=str(sender), seq=seq,
            sme_id=f"sme-{int(rng.integers(1, 5))}",
            target_id="caller-1", report_seq=int(rng.integers(0, 100000)),
            timestamp_s=float(rng.uniform(0, 300)),
            x=float(rng.uniform(0, 300)), y=float(rng.uniform(0, 300)),
            heading=float(rng.uniform(-3.14, 3.14)),
            building_index=bi, floor_index=fi,
            mode="directional" if directional else "omni",
            antenna_heading_rad=float(rng.uniform(0, 6.28)) if directional else None,
            rssi_dbm=float(rng.uniform(-120, -40)),
            rssi_valid=bool(rng.random() < 0.9))
    if kind == 3:
        bi, fi = _indoor_pair(rng)
        sxx, syy = float(rng.uniform(1, 900)), float(rng.uniform(1, 900))
        sxy = float(rng.uniform(-10, 10))
        x, y = float(rng.uniform(0, 300)), float(rng.uniform(0, 300))
        return LocationEstimateMsg(
            session_id=sid, sender="lcs", seq=seq, x=x, y=y,
            cov=((sxx, sxy), (sxy, syy)), floor_index=fi, building_index=bi,
            n_reports=int(rng.integers(4, 500)),
            timestamp_s=float(rng.uniform(0, 300)),
            degenerate=bool(rng.random() < 0.1),
            boundary_center=(x, y),
            boundary_semi_axes=(float(rng.uniform(5, 90)), float(rng.uniform(1, 5))),
            boundary_orientation_rad=float(rng.uniform(0, 3.14)),
            boundary_rect=(x - 30.0, y - 20.0, x + 30.0, y + 20.0))
    if kind == 4:
        ny, nx = int(rng.integers(1, 6)), int(rng.integers(1, 6))
        values = tuple(
            tuple(None if rng.random() < 0.2 else round(float(rng.uniform(-110, -50)), 2)
                  for _ in range(nx))
            for _ in range(ny))
        bi, fi = _indoor_pair(rng)
        return ContourMapMsg(
            session_id=sid, sender="lcs", seq=seq,
            region_kind="floor" if bi is not None else "outdoor",
            region_rect=(0.0, 0.0, nx * 5.0, ny * 5.0),
            building_index=bi, floor_index=fi, origin=(0.0, 0.0),
            cell_size=5.0, shape=(ny, nx), values=values,
            peak_cell=(int(rng.integers(0, ny)), int(rng.integers(0, nx))),
            peak_dbm=round(float(rng.uniform(-110, -50)), 2),
            generation=int(rng.integers(0, 50)))
    if kind == 5:
        n_routes = int(rng.integers(1, 3))
        routes = tuple(
            tuple((float(rng.uniform(0, 300)), float(rng.uniform(0, 300)))
                  for _ in range(int(rng.integers(2, 5))))
            for _ in range(n_routes))
        return TaskAssignmentMsg(
            session_id=sid, sender="lcs", seq=seq,
            rescuer_id=f"sme-{int(rng.integers(1, 5))}",
            phase=str(rng.choice(["building", "floor", "room"])),
            strip=(0.0, 0.0, float(rng.uniform(10, 100)), float(rng.uniform(10, 100))),
            floors=tuple(int(f) for f in rng.integers(0, 5, size=rng.integers(1, 4)))
            if rng.random() < 0.5 else None,
            routes=routes,
            building_index=int(rng.integers(0, 30)) if rng.random() < 0.5 else None,
            revision=int(rng.integers(0, 20)))
    if kind == 6:
        nb = int(rng.integers(4, 16))
        bi, fi = _indoor_pair(rng)
        return SweepResultMsg(
            session_id=sid, sender=str(sender), seq=seq,
            sme_id=f"sme-{int(rng.integers(1, 5))}",
            x=float(rng.uniform(0, 300)), y=float(rng.uniform(0, 300)),
            building_index=bi, floor_index=fi,
            started_s=float(rng.uniform(0, 300)),
            elapsed_s=float(rng.uniform(5, 30)),
            bearings_rad=tuple(float(rng.uniform(0, 6.28)) for _ in range(nb)),
            mean_rssi_dbm=tuple(float(rng.uniform(-110, -50)) for _ in range(nb)),
            best_bearing_rad=float(rng.uniform(0, 6.28)))
    if kind == 7:
        return SessionEventMsg(
            session_id=sid, sender=str(sender), seq=seq,
            time_s=float(rng.uniform(0, 300)),
            actor=str(rng.choice(["lcs", "sme-1", "console-1"])),
            event=str(rng.choice(["phase_change", "peak_stable", "session_closed",
                                  "building_committed", "open_field_retry"])),
            detail={"note": "n" * int(rng.integers(0, 8)),
                    "value": float(rng.uniform(-200, 200)),
                    "count": int(rng.integers(0, 100))})
    return ErrorMsg(session_id=sid, sender="lcs", seq=seq,
                    code=str(rng.choice(["auth_failed", "malformed_frame",
                                         "unknown_session", "forbidden"])),
                    detail="d" * int(rng.integers(0, 12)))


def tiny_scenario(buildings=None, target=None, extent=(0.0, 0.0, 100.0, 100.0),
                  roads=None, rf=None):
    """Minimal valid scenario for geometry and propagation tests."""
    if target is None:
        target = Pose(x=50.0, y=50.0)
    s = Scenario(
        extent=extent,
        buildings=list(buildings or []),
        roads=list(roads if roads is not None else [[(0.0, 50.0), (extent[2], 50.0)]]),
        target=TargetPlacement(pose=target),
        rescuers=[RescuerSpec(id="sme-1", start=Pose(x=2.0, y=50.0))],
        rf=rf or RfParams(),
        channel=ChannelConfig(),
        timing=TimingParams(),
        seed=0,
        name="tiny")
    s.validate()
    return s
