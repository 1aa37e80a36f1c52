"""Uplink burst model: periodic wideband transmissions from the caller's handset
and the RSSI samples a receiver takes from them.

The handset transmits a 1 ms burst every period (default 80 ms) at full power,
which both raises the per-burst SNR about 10 dB over a normal voice call and
keeps the average radiated power well below continuous transmission. RSSI is
estimated from the reference symbols of each burst across the receive antennas,
so the per-sample noise scales with 1/sqrt(n_symbols * n_antennas).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from .propagation import AntennaPattern, RfParams, received_power_dbm

if TYPE_CHECKING:  # pragma: no cover
    from .propagation import ShadowingField
    from .world import Pose, Scenario

THERMAL_NOISE_DBM_HZ = -174.0


@dataclass
class ChannelConfig:
    """Uplink arrangement negotiated with the serving base station."""

    uplink_freq_hz: float = 738e6
    downlink_freq_hz: float = 793e6
    bandwidth_hz: float = 7.5e6
    subframe_ms: float = 1.0
    period_ms: float = 80.0
    tx_power_dbm: float = 23.0
    voice_tx_power_dbm: float = 13.0
    dmrs_symbols: int = 2
    rx_antennas: int = 2
    noise_figure_db: float = 7.0
    meas_noise_db: float = 2.0
    detection_margin_db: float = 3.0

    @property
    def period_s(self) -> float:
        return self.period_ms * 1e-3

    def validate(self) -> None:
        if self.uplink_freq_hz <= 0.0 or self.downlink_freq_hz <= 0.0:
            raise ValueError("carrier frequencies must be positive")
        if not (0.0 < self.bandwidth_hz <= 10e6):
            raise ValueError("bandwidth_hz must lie in (0, 10 MHz]")
        if self.subframe_ms <= 0.0:
            raise ValueError("subframe_ms must be positive")
        if self.period_ms < self.subframe_ms:
            raise ValueError("period_ms must be >= subframe_ms")
        if self.tx_power_dbm > 23.0:
            raise ValueError("tx_power_dbm exceeds the 23 dBm handset power class")
        if self.dmrs_symbols < 1 or self.rx_antennas < 1:
            raise ValueError("dmrs_symbols and rx_antennas must be >= 1")
        if self.noise_figure_db < 0.0 or self.meas_noise_db < 0.0:
            raise ValueError("noise figure and measurement noise must be >= 0")


def noise_floor_dbm(config: ChannelConfig) -> float:
    """Receiver noise floor over the configured bandwidth."""
    return (THERMAL_NOISE_DBM_HZ + 10.0 * math.log10(config.bandwidth_hz)
            + config.noise_figure_db)


def avg_tx_power_ratio(config: ChannelConfig) -> float:
    """Average radiated power of the burst scheme relative to a continuous voice
    call at the voice power level (linear ratio)."""
    boost = 10.0 ** ((config.tx_power_dbm - config.voice_tx_power_dbm) / 10.0)
    return boost * (config.subframe_ms / config.period_ms)


def tx_times(t0: float, t1: float, config: ChannelConfig) -> np.ndarray:
    """Burst instants k * period that fall in the half-open window [t0, t1)."""
    if t1 < t0:
        raise ValueError("window end precedes start")
    p = config.period_s
    k0 = int(math.ceil(t0 / p - 1e-9))
    k1 = int(math.ceil(t1 / p - 1e-9)) - 1
    if k1 < k0:
        return np.empty(0)
    return np.arange(k0, k1 + 1, dtype=float) * p


@dataclass
class RssiSample:
    timestamp_s: float
    rssi_dbm: float
    valid: bool


def synthesize_rssi(t: float, target: "Pose", rx: "Pose", config: ChannelConfig,
                    params: RfParams, scenario: "Scenario",
                    rng: np.random.Generator,
                    rx_pattern: AntennaPattern | None = None,
                    rx_heading: float | None = None,
                    shadowing: "ShadowingField | None" = None) -> RssiSample:
    """One RSSI measurement of the burst at time t as seen from rx.

    The mean follows the propagation model; measurement noise shrinks with the
    number of reference symbols times antennas. Readings cannot resolve below
    the noise floor, and anything within the detection margin of the floor is
    flagged invalid.
    """
    mean = received_power_dbm(config.tx_power_dbm, target, rx, config.uplink_freq_hz,
                              params, scenario, rx_pattern=rx_pattern,
                              rx_heading=rx_heading, shadowing=shadowing)
    sigma = config.meas_noise_db / math.sqrt(config.dmrs_symbols * config.rx_antennas)
    rssi = mean + float(rng.standard_normal()) * sigma
    floor = noise_floor_dbm(config)
    valid = rssi >= floor + config.detection_margin_db
    if rssi < floor:
        rssi = floor
    return RssiSample(timestamp_s=t, rssi_dbm=rssi, valid=valid)
