"""Path loss model, antenna patterns, and correlated shadowing."""

import math

import numpy as np
import pytest

from sigseek.propagation import (AntennaPattern, RfParams, ShadowingField,
                                 antenna_gain_db, fspl_db, path_loss_db,
                                 received_power_dbm, sample_correlated_grid)
from sigseek.world import Pose
from support import open_room_building, tiny_scenario, two_room_building


def test_fspl_reference_value():
    # 20 log10(4 pi d f / c) at 1 m, 738 MHz, frozen from the closed form
    assert abs(fspl_db(1.0, 738e6) - 29.80891) < 1e-4
    with pytest.raises(ValueError):
        fspl_db(0.0, 738e6)
    with pytest.raises(ValueError):
        fspl_db(10.0, -1.0)


def test_fspl_distance_and_frequency_laws():
    assert abs(fspl_db(200.0, 738e6) - fspl_db(2.0, 738e6) - 40.0) < 1e-9
    assert abs(fspl_db(5.0, 7.38e9) - fspl_db(5.0, 738e6) - 20.0) < 1e-9


def test_path_loss_outdoor_exponent():
    s = tiny_scenario(buildings=[])
    tx = Pose(x=10.0, y=50.0)
    pl1 = path_loss_db(tx, Pose(x=11.0, y=50.0), 738e6, s.rf, s)
    pl10 = path_loss_db(tx, Pose(x=20.0, y=50.0), 738e6, s.rf, s)
    # exponent 3: one decade of distance adds 30 dB
    assert abs(pl10 - pl1 - 10.0 * s.rf.exponent_outdoor) < 1e-9
    assert abs(pl1 - fspl_db(1.0, 738e6)) < 1e-9


def test_path_loss_wall_penalties():
    b = two_room_building()
    s = tiny_scenario(buildings=[b],
                      target=Pose(x=15.0, y=20.0, building_index=0, floor_index=0))
    s_empty = tiny_scenario(buildings=[])
    tx, rx = Pose(x=0.0, y=20.0), Pose(x=40.0, y=20.0)
    with_b = path_loss_db(tx, rx, 738e6, s.rf, s)
    without = path_loss_db(tx, rx, 738e6, s.rf, s_empty)
    # 2 exterior walls + 1 interior partition on the way through
    expect = 2 * s.rf.exterior_wall_db + s.rf.interior_wall_db
    assert abs(with_b - without - expect) < 1e-9


def test_path_loss_floor_slabs_and_indoor_exponent():
    s = tiny_scenario(buildings=[open_room_building()],
                      target=Pose(x=15.0, y=20.0, building_index=0, floor_index=0))
    a = Pose(x=15.0, y=20.0, building_index=0, floor_index=0)
    b = Pose(x=25.0, y=20.0, building_index=0, floor_index=2)
    c = Pose(x=25.0, y=20.0, building_index=0, floor_index=0)
    d3 = math.sqrt(10.0 ** 2 + 6.0 ** 2)
    pl_diag = path_loss_db(a, b, 738e6, s.rf, s)
    pl_flat = path_loss_db(a, c, 738e6, s.rf, s)
    # same building uses the indoor exponent; two slabs on the slanted path
    expect = (10.0 * s.rf.exponent_indoor * math.log10(d3 / 10.0)
              + 2 * s.rf.floor_db)
    assert abs(pl_diag - pl_flat - expect) < 1e-9


def test_path_loss_rejects_coincident_poses():
    s = tiny_scenario(buildings=[])
    p = Pose(x=10.0, y=10.0)
    with pytest.raises(ValueError):
        path_loss_db(p, Pose(x=10.0, y=10.0), 738e6, s.rf, s)


def test_antenna_gain_profile():
    pat = AntennaPattern(kind="directional")
    assert antenna_gain_db(pat, 0.0) == pat.gain_db
    # half-power beamwidth: 3 dB down at +-hpbw/2
    half = math.radians(pat.hpbw_deg / 2.0)
    assert abs(antenna_gain_db(pat, half) - (pat.gain_db - 3.0)) < 1e-9
    assert abs(antenna_gain_db(pat, -half) - (pat.gain_db - 3.0)) < 1e-9
    # far off boresight the pattern floors at the front-to-back ratio
    assert antenna_gain_db(pat, math.pi) == pat.gain_db - pat.front_to_back_db
    # wrap: 2 pi off boresight is boresight again
    assert abs(antenna_gain_db(pat, 2.0 * math.pi) - pat.gain_db) < 1e-9
    omni = AntennaPattern(kind="omni")
    assert antenna_gain_db(omni, 1.234) == 0.0


def test_received_power_antenna_gain():
    s = tiny_scenario(buildings=[])
    tx = Pose(x=50.0, y=50.0)
    rx = Pose(x=80.0, y=50.0)
    base = received_power_dbm(23.0, tx, rx, 738e6, s.rf, s)
    pat = AntennaPattern(kind="directional")
    toward = received_power_dbm(23.0, tx, rx, 738e6, s.rf, s,
                                rx_pattern=pat, rx_heading=math.pi)
    away = received_power_dbm(23.0, tx, rx, 738e6, s.rf, s,
                              rx_pattern=pat, rx_heading=0.0)
    assert abs(toward - base - pat.gain_db) < 1e-9
    assert abs(toward - away - pat.front_to_back_db) < 1e-9


def test_rf_params_validation():
    with pytest.raises(ValueError):
        RfParams(exponent_outdoor=1.5).validate()
    with pytest.raises(ValueError):
        RfParams(ref_distance_m=0.0).validate()
    with pytest.raises(ValueError):
        RfParams(floor_db=-1.0).validate()
    RfParams().validate()


def test_correlated_grid_shape_and_zero_sigma():
    rng = np.random.default_rng(0)
    g = sample_correlated_grid(rng, nx=12, ny=7, spacing_m=5.0, sigma_db=6.0,
                               decorrelation_m=25.0)
    assert g.shape == (7, 12)
    z = sample_correlated_grid(rng, nx=4, ny=4, spacing_m=5.0, sigma_db=0.0,
                               decorrelation_m=25.0)
    assert np.all(z == 0.0)


def test_correlated_grid_statistics():
    # variance ~ sigma^2 and lag-1 correlation ~ exp(-spacing/d_corr),
    # averaged over independent realizations
    rng = np.random.default_rng(42)
    sigma, spacing, dcorr = 6.0, 5.0, 25.0
    fields = [sample_correlated_grid(rng, 48, 48, spacing, sigma, dcorr)
              for _ in range(40)]
    flat = np.concatenate([f.ravel() for f in fields])
    assert abs(flat.std() - sigma) < 0.5
    # the field is zero-mean by construction, so use raw second moments
    num = n_pairs = sq = n_cells = 0.0
    for f in fields:
        num += float((f[:, :-1] * f[:, 1:]).sum() + (f[:-1, :] * f[1:, :]).sum())
        n_pairs += 2.0 * f[:, :-1].size
        sq += float((f * f).sum())
        n_cells += f.size
    rho = (num / n_pairs) / (sq / n_cells)
    assert abs(rho - math.exp(-spacing / dcorr)) < 0.05


def test_shadowing_field_deterministic_per_seed():
    s = tiny_scenario(buildings=[two_room_building()],
                      target=Pose(x=15.0, y=20.0, building_index=0, floor_index=0))
    f1 = ShadowingField.from_scenario(s, seed=5)
    f2 = ShadowingField.from_scenario(s, seed=5)
    f3 = ShadowingField.from_scenario(s, seed=6)
    poses = [Pose(x=3.0, y=9.0), Pose(x=77.0, y=61.0),
             Pose(x=15.0, y=20.0, building_index=0, floor_index=1)]
    vals1 = [f1.value_at(p) for p in poses]
    vals2 = [f2.value_at(p) for p in poses]
    vals3 = [f3.value_at(p) for p in poses]
    assert vals1 == vals2
    assert vals1 != vals3
