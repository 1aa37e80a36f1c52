"""Radio propagation: log-distance path loss with wall/floor penetration, antenna
patterns, and spatially correlated log-normal shadowing.

Path loss between two poses is

    PL(d) = FSPL(d_ref) + 10 n log10(d / d_ref)
            + L_ext * n_ext + L_int * n_int + L_floor * n_floor

where the obstruction counts come from the world geometry. Shadowing is a
zero-mean Gaussian field with exponentially decaying spatial correlation
(frozen per world realization), synthesized on a grid per region via circulant
embedding so that a full map costs two FFTs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np

if TYPE_CHECKING:  # pragma: no cover
    from .world import Pose, Scenario

SPEED_OF_LIGHT = 299792458.0


@dataclass
class RfParams:
    """Propagation constants for one scenario."""

    exponent_outdoor: float = 3.0
    exponent_indoor: float = 2.2
    ref_distance_m: float = 1.0
    exterior_wall_db: float = 12.0
    interior_wall_db: float = 5.0
    floor_db: float = 18.0
    shadowing_sigma_outdoor_db: float = 6.0
    shadowing_sigma_indoor_db: float = 4.0
    decorrelation_outdoor_m: float = 25.0
    decorrelation_indoor_m: float = 3.0

    def validate(self) -> None:
        if self.exponent_outdoor < 2.0 or self.exponent_indoor < 2.0:
            raise ValueError("path loss exponents must be >= 2 (free space)")
        if self.ref_distance_m <= 0.0:
            raise ValueError("ref_distance_m must be positive")
        for name in ("exterior_wall_db", "interior_wall_db", "floor_db"):
            if getattr(self, name) < 0.0:
                raise ValueError(f"{name} must be non-negative")
        if self.shadowing_sigma_outdoor_db < 0.0 or self.shadowing_sigma_indoor_db < 0.0:
            raise ValueError("shadowing sigma must be non-negative")
        if self.decorrelation_outdoor_m <= 0.0 or self.decorrelation_indoor_m <= 0.0:
            raise ValueError("decorrelation distances must be positive")


@dataclass
class AntennaPattern:
    """Receive antenna pattern. kind is "omni" or "directional".

    Directional gain follows a parabolic main lobe in dB,
    G(theta) = gain_db - 3 (2 theta / hpbw)^2, floored at gain_db - front_to_back_db.
    """

    kind: str = "omni"
    gain_db: float | None = None
    hpbw_deg: float = 60.0
    front_to_back_db: float = 15.0

    def __post_init__(self) -> None:
        if self.kind not in ("omni", "directional"):
            raise ValueError(f"unknown antenna kind {self.kind!r}")
        if self.gain_db is None:
            self.gain_db = 6.0 if self.kind == "directional" else 0.0
        if self.hpbw_deg <= 0.0 or self.hpbw_deg > 360.0:
            raise ValueError("hpbw_deg must lie in (0, 360]")
        if self.front_to_back_db < 0.0:
            raise ValueError("front_to_back_db must be non-negative")


def antenna_gain_db(pattern: AntennaPattern, off_boresight_rad: float) -> float:
    """Gain toward a direction off_boresight_rad away from boresight."""
    if pattern.kind == "omni":
        return float(pattern.gain_db)
    theta = abs(math.remainder(off_boresight_rad, 2.0 * math.pi))
    hpbw = math.radians(pattern.hpbw_deg)
    g = pattern.gain_db - 3.0 * (2.0 * theta / hpbw) ** 2
    return float(max(g, pattern.gain_db - pattern.front_to_back_db))


def fspl_db(distance_m: float, freq_hz: float) -> float:
    """Free-space path loss at the given distance and carrier frequency."""
    if distance_m <= 0.0 or freq_hz <= 0.0:
        raise ValueError("distance and frequency must be positive")
    return 20.0 * math.log10(4.0 * math.pi * distance_m * freq_hz / SPEED_OF_LIGHT)


def path_loss_db(tx: "Pose", rx: "Pose", freq_hz: float, params: RfParams,
                 scenario: "Scenario") -> float:
    """Deterministic path loss between two poses (no shadowing, no antenna gain)."""
    dz = scenario.pose_z(rx) - scenario.pose_z(tx)
    d = math.sqrt((rx.x - tx.x) ** 2 + (rx.y - tx.y) ** 2 + dz * dz)
    if d < 1e-9:
        raise ValueError("path loss undefined for coincident poses")
    d = max(d, params.ref_distance_m)
    obs = scenario.obstructions_between(tx, rx)
    same_building = (tx.building_index is not None
                     and tx.building_index == rx.building_index)
    n = params.exponent_indoor if same_building else params.exponent_outdoor
    pl = fspl_db(params.ref_distance_m, freq_hz)
    pl += 10.0 * n * math.log10(d / params.ref_distance_m)
    pl += params.exterior_wall_db * obs.exterior_walls
    pl += params.interior_wall_db * obs.interior_walls
    pl += params.floor_db * obs.floors_crossed
    return pl


def received_power_dbm(tx_power_dbm: float, tx: "Pose", rx: "Pose", freq_hz: float,
                       params: RfParams, scenario: "Scenario",
                       rx_pattern: AntennaPattern | None = None,
                       rx_heading: float | None = None,
                       shadowing: "ShadowingField | None" = None) -> float:
    """Mean received power at rx for a transmitter at tx.

    Shadowing, when provided, is sampled at the receiver pose so that a moving
    receiver sees a spatially consistent field around a stationary transmitter.
    """
    p = tx_power_dbm - path_loss_db(tx, rx, freq_hz, params, scenario)
    if rx_pattern is not None:
        boresight = rx_heading if rx_heading is not None else rx.heading
        toward_tx = math.atan2(tx.y - rx.y, tx.x - rx.x)
        p += antenna_gain_db(rx_pattern, toward_tx - boresight)
    if shadowing is not None:
        p += shadowing.value_at(rx)
    return p


# --- correlated shadowing -------------------------------------------------

def sample_correlated_grid(rng: np.random.Generator, nx: int, ny: int,
                           spacing_m: float, sigma_db: float,
                           decorrelation_m: float) -> np.ndarray:
    """One realization of a zero-mean Gaussian field on an (ny, nx) grid with
    correlation sigma^2 exp(-d / d_corr), via circulant embedding."""
    if nx < 1 or ny < 1:
        raise ValueError("grid must have at least one node per axis")
    if sigma_db == 0.0:
        return np.zeros((ny, nx))
    m = 1 << max(2 * ny - 1, 2).bit_length()
    n = 1 << max(2 * nx - 1, 2).bit_length()
    wy = np.minimum(np.arange(m), m - np.arange(m)) * spacing_m
    wx = np.minimum(np.arange(n), n - np.arange(n)) * spacing_m
    d = np.hypot(wy[:, None], wx[None, :])
    cov = sigma_db ** 2 * np.exp(-d / decorrelation_m)
    lam = np.fft.fft2(cov).real
    # tiny negative eigenvalues from the embedding are clipped; the variance
    # deficit is negligible for the exponential kernel with 2x padding
    lam = np.maximum(lam, 0.0)
    noise = rng.standard_normal((m, n)) + 1j * rng.standard_normal((m, n))
    grid = np.fft.fft2(np.sqrt(lam / (m * n)) * noise).real
    return np.ascontiguousarray(grid[:ny, :nx])


@dataclass
class _RegionGrid:
    origin: tuple[float, float]
    spacing_m: float
    values: np.ndarray

    def value_at(self, x: float, y: float) -> float:
        ny, nx = self.values.shape
        j = int(round((x - self.origin[0]) / self.spacing_m))
        i = int(round((y - self.origin[1]) / self.spacing_m))
        return float(self.values[min(max(i, 0), ny - 1), min(max(j, 0), nx - 1)])


@dataclass
class ShadowingField:
    """Frozen shadowing realization for one world: an outdoor grid plus one grid
    per building floor, each drawn from its own seeded stream."""

    seed: int
    regions: dict[object, _RegionGrid] = field(default_factory=dict)

    @classmethod
    def from_scenario(cls, scenario: "Scenario", seed: int,
                      max_nodes_per_axis: int = 240) -> "ShadowingField":
        rf = scenario.rf
        out = cls(seed=seed)
        n_regions = 1 + sum(b.floor_count for b in scenario.buildings)
        children = np.random.SeedSequence(seed).spawn(n_regions)
        idx = 0

        def build(rect, sigma, dcorr):
            nonlocal idx
            w = rect[2] - rect[0]
            h = rect[3] - rect[1]
            spacing = max(dcorr / 5.0, max(w, h) / max_nodes_per_axis, 1e-3)
            nx = max(int(math.ceil(w / spacing)) + 1, 2)
            ny = max(int(math.ceil(h / spacing)) + 1, 2)
            rng = np.random.default_rng(children[idx])
            idx += 1
            vals = sample_correlated_grid(rng, nx, ny, spacing, sigma, dcorr)
            return _RegionGrid(origin=(rect[0], rect[1]), spacing_m=spacing, values=vals)

        out.regions["outdoor"] = build(
            scenario.extent, rf.shadowing_sigma_outdoor_db, rf.decorrelation_outdoor_m)
        for bi, b in enumerate(scenario.buildings):
            for fi in range(b.floor_count):
                out.regions[(bi, fi)] = build(
                    b.footprint, rf.shadowing_sigma_indoor_db, rf.decorrelation_indoor_m)
        return out

    def value_at(self, pose: "Pose") -> float:
        if pose.building_index is None:
            key: object = "outdoor"
        else:
            key = (pose.building_index, pose.floor_index)
        grid = self.regions.get(key)
        if grid is None:
            raise ValueError(f"no shadowing region for pose {pose!r}")
        return grid.value_at(pose.x, pose.y)
