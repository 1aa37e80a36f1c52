"""Mobile measurement unit carried by a rescuer (vehicle mount or handheld).

The unit follows an assigned route, samples the caller's periodic uplink bursts
with an omnidirectional antenna while moving, and can stop to run a directional
sweep that estimates the bearing of strongest arrival.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import TYPE_CHECKING

import numpy as np

from . import geometry as geo
from .propagation import AntennaPattern
from .uplink import ChannelConfig, RssiSample, synthesize_rssi, tx_times
from .world import Pose

if TYPE_CHECKING:  # pragma: no cover
    from .propagation import RfParams, ShadowingField
    from .world import Scenario

OMNI = AntennaPattern(kind="omni")
DIRECTIONAL = AntennaPattern(kind="directional")


@dataclass
class MeasurementReport:
    """One uplink RSSI observation stamped with the reporting unit's pose."""

    sme_id: str
    target_id: str
    seq: int
    timestamp_s: float
    pose: Pose
    mode: str  # "omni" | "directional"
    rssi: RssiSample
    heading_rad: float | None = None  # antenna boresight for directional reports


@dataclass
class BearingProfile:
    """Result of a stationary directional sweep."""

    pose: Pose
    started_s: float
    elapsed_s: float
    bearings_rad: list[float]
    mean_rssi_dbm: list[float]
    best_bearing_rad: float

    def contrast_db(self) -> float:
        return max(self.mean_rssi_dbm) - min(self.mean_rssi_dbm)


@dataclass
class SmeState:
    """Kinematic and radio state of one measurement unit."""

    id: str
    pose: Pose
    speed_mps: float
    clock_s: float = 0.0
    mode: str = "omni"
    route: list[geo.Point] | None = None
    route_progress_m: float = 0.0
    distance_m: float = 0.0
    seq: int = 0
    measuring: bool = True
    pose_noise_m: float = 0.0
    pending_reports: list[MeasurementReport] = field(default_factory=list)


def set_route(state: SmeState, route: list[geo.Point]) -> SmeState:
    """Assign a route starting from the unit's current position."""
    if not route:
        raise ValueError("route needs at least one waypoint")
    full = [state.pose.xy()] + list(route)
    if geo.polyline_length(full) <= geo.EPS:
        raise ValueError("route must have positive length")
    return replace(state, route=full, route_progress_m=0.0)


def _pose_on_route(state: SmeState, progress: float) -> Pose:
    x, y, heading = geo.polyline_point_at(state.route, progress)
    return Pose(x=x, y=y, heading=heading,
                building_index=state.pose.building_index,
                floor_index=state.pose.floor_index)


def _reported_pose(pose: Pose, noise_m: float, rng: np.random.Generator) -> Pose:
    if noise_m <= 0.0:
        return pose
    dx, dy = rng.standard_normal(2) * noise_m
    return replace(pose, x=pose.x + dx, y=pose.y + dy)


def step(state: SmeState, dt: float, target: Pose, config: ChannelConfig,
         params: "RfParams", scenario: "Scenario", rng: np.random.Generator,
         shadowing: "ShadowingField | None" = None,
         ) -> tuple[SmeState, list[MeasurementReport]]:
    """Advance the unit dt seconds along its route, measuring any uplink bursts
    that fall inside the window.

    Each report's pose is interpolated along the route at the burst instant, so
    reports land where the unit actually was, not at the step boundary.
    """
    if dt < 0.0:
        raise ValueError("dt must be non-negative")
    t0 = state.clock_s
    t1 = t0 + dt
    route = state.route
    length = geo.polyline_length(route) if route else 0.0
    remaining = max(length - state.route_progress_m, 0.0)
    travel = min(state.speed_mps * dt, remaining) if route else 0.0

    reports: list[MeasurementReport] = []
    seq = state.seq
    if state.measuring and state.mode == "omni":
        for t in tx_times(t0, t1, config):
            frac = (t - t0) / dt if dt > 0 else 0.0
            progress = state.route_progress_m + travel * frac
            pose = _pose_on_route(state, progress) if route else state.pose
            sample = synthesize_rssi(float(t), target, pose, config, params,
                                     scenario, rng, rx_pattern=OMNI,
                                     shadowing=shadowing)
            reports.append(MeasurementReport(
                sme_id=state.id, target_id=scenario.target.target_id, seq=seq,
                timestamp_s=float(t),
                pose=_reported_pose(pose, state.pose_noise_m, rng),
                mode="omni", rssi=sample))
            seq += 1

    if route:
        new_progress = state.route_progress_m + travel
        new_pose = _pose_on_route(state, new_progress)
        done = new_progress >= length - geo.EPS
        state = replace(state, pose=new_pose, route_progress_m=new_progress,
                        route=None if done else route,
                        distance_m=state.distance_m + travel)
    return replace(state, clock_s=t1, seq=seq), reports


def route_complete(state: SmeState) -> bool:
    return state.route is None


def directional_sweep(state: SmeState, target: Pose, config: ChannelConfig,
                      params: "RfParams", scenario: "Scenario",
                      rng: np.random.Generator,
                      n_bearings: int = 12, dwell_s: float = 1.25,
                      shadowing: "ShadowingField | None" = None,
                      pattern: AntennaPattern = DIRECTIONAL,
                      ) -> tuple[SmeState, BearingProfile]:
    """Rotate a directional antenna through n_bearings uniform headings, dwelling
    at each long enough to average at least one burst, and report the bearing of
    the strongest mean RSSI. Advances the unit clock by n_bearings * dwell_s."""
    if n_bearings < 4:
        raise ValueError("sweep needs at least 4 bearings")
    if state.route is not None:
        raise ValueError("sweep requires a stationary unit")
    if dwell_s < config.period_s:
        raise ValueError("dwell must cover at least one burst period")
    bearings = [2.0 * math.pi * k / n_bearings for k in range(n_bearings)]
    means: list[float] = []
    t = state.clock_s
    for b in bearings:
        samples = []
        for ti in tx_times(t, t + dwell_s, config):
            s = synthesize_rssi(float(ti), target, state.pose, config, params,
                                scenario, rng, rx_pattern=pattern,
                                rx_heading=b, shadowing=shadowing)
            samples.append(s.rssi_dbm)
        t += dwell_s
        means.append(float(np.mean(samples)))
    i = int(np.argmax(means))
    best = bearings[i]
    # shadowing is common across bearings at a fixed position, so the measured
    # pattern keeps its parabolic peak; three-point interpolation recovers the
    # arrival direction to a few degrees instead of the raw step quantization
    left = means[(i - 1) % n_bearings]
    right = means[(i + 1) % n_bearings]
    den = left - 2.0 * means[i] + right
    if den < -1e-9:
        shift = 0.5 * (left - right) / den
        step = 2.0 * math.pi / n_bearings
        best = best + max(-0.5, min(0.5, shift)) * step
    elapsed = n_bearings * dwell_s
    profile = BearingProfile(pose=state.pose, started_s=state.clock_s,
                             elapsed_s=elapsed, bearings_rad=bearings,
                             mean_rssi_dbm=means, best_bearing_rad=best)
    return replace(state, clock_s=state.clock_s + elapsed), profile
