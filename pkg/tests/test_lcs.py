"""Estimation pipeline: IDW surfaces, ML position fixes, boundaries, routes."""

import math

import numpy as np
import pytest

from sigseek.lcs import (ContourMap, EstimationError, MapRegion, area_ratio,
                         boustrophedon_route, derive_boundary,
                         estimate_position, find_peak, floor_survey_order,
                         interpolate_idw, partition_strips,
                         plan_building_search, snap_route_to_roads)
from sigseek.propagation import RfParams
from support import mk_report


def _region(rect=(0.0, 0.0, 60.0, 60.0)):
    return MapRegion(kind="outdoor", rect=rect)


def test_idw_exact_at_cell_centered_samples():
    # samples dropped on cell centers must survive interpolation untouched
    reports = [mk_report(5.0, 5.0, -70.0), mk_report(25.0, 15.0, -82.5),
               mk_report(45.0, 55.0, -91.0)]
    cmap = interpolate_idw(reports, _region(), cell_size=10.0)
    assert cmap.values[0, 0] == -70.0
    assert cmap.values[1, 2] == -82.5
    assert cmap.values[5, 4] == -91.0


def test_idw_bounded_by_sample_range():
    rng = np.random.default_rng(11)
    for _ in range(50):
        n = int(rng.integers(2, 12))
        reports = [mk_report(rng.uniform(0, 60), rng.uniform(0, 60),
                             rng.uniform(-110, -50)) for _ in range(n)]
        vals = [r.rssi.rssi_dbm for r in reports]
        cmap = interpolate_idw(reports, _region(), cell_size=5.0)
        finite = cmap.values[np.isfinite(cmap.values)]
        assert finite.size > 0
        assert finite.min() >= min(vals) - 1e-9
        assert finite.max() <= max(vals) + 1e-9


def test_idw_masks_unsupported_cells():
    # one sample in a corner: the far corner is beyond the support reach
    reports = [mk_report(2.0, 2.0, -75.0)]
    cmap = interpolate_idw(reports, _region((0.0, 0.0, 200.0, 200.0)),
                           cell_size=5.0)
    assert not cmap.support[-1, -1]
    assert math.isnan(cmap.values[-1, -1])
    assert cmap.support[0, 0]


def test_idw_skips_invalid_and_directional_reports():
    reports = [mk_report(10.0, 10.0, -70.0),
               mk_report(20.0, 10.0, -60.0, valid=False),
               mk_report(30.0, 10.0, -55.0, mode="directional"),
               mk_report(40.0, 10.0, -72.0)]
    cmap = interpolate_idw(reports, _region(), cell_size=5.0)
    finite = cmap.values[np.isfinite(cmap.values)]
    # the stronger but unusable readings must not lift the surface
    assert finite.max() <= -70.0 + 1e-9
    with pytest.raises(EstimationError):
        interpolate_idw([mk_report(1.0, 1.0, -70.0, valid=False)], _region(),
                        cell_size=5.0)


def test_find_peak_tie_breaks_to_lowest_cell():
    v = np.full((4, 4), np.nan)
    v[2, 3] = -60.0
    v[1, 1] = -60.0
    v[3, 0] = -70.0
    cell, peak = find_peak(v)
    assert cell == (1, 1)
    assert peak == -60.0
    with pytest.raises(EstimationError):
        find_peak(np.full((3, 3), np.nan))


def test_contour_cell_centers():
    reports = [mk_report(5.0, 5.0, -70.0)]
    cmap = interpolate_idw(reports, _region(), cell_size=10.0)
    assert cmap.cell_center((0, 0)) == (5.0, 5.0)
    assert cmap.cell_center((2, 1)) == (15.0, 25.0)
    assert cmap.peak_xy == (5.0, 5.0)


def _ring_reports(cx, cy, r, n, rf, offset_db=-40.0, phase=0.0):
    out = []
    for k in range(n):
        th = phase + 2.0 * math.pi * k / n
        x, y = cx + r * math.cos(th), cy + r * math.sin(th)
        d = max(math.hypot(x - cx, y - cy), rf.ref_distance_m)
        rssi = offset_db - 10.0 * rf.exponent_outdoor * math.log10(d)
        out.append(mk_report(x, y, rssi, t=float(k)))
    return out


def test_estimate_position_noiseless_ring():
    rf = RfParams()
    extent = (0.0, 0.0, 120.0, 120.0)
    reports = _ring_reports(61.0, 57.0, 30.0, 8, rf)
    est = estimate_position(reports, extent, rf)
    assert math.hypot(est.x - 61.0, est.y - 57.0) < 5.0
    assert est.degenerate is False
    assert est.n_reports == 8


def test_estimate_position_needs_min_reports():
    rf = RfParams()
    reports = _ring_reports(50.0, 50.0, 20.0, 3, rf)
    with pytest.raises(EstimationError):
        estimate_position(reports, (0.0, 0.0, 100.0, 100.0), rf)


def test_estimate_position_collinear_is_degenerate():
    rf = RfParams()
    extent = (0.0, 0.0, 100.0, 100.0)
    reports = []
    for k in range(8):
        x = 10.0 + 10.0 * k
        d = max(abs(x - 50.0), 1.0)
        rssi = -40.0 - 10.0 * rf.exponent_outdoor * math.log10(d)
        reports.append(mk_report(x, 20.0, rssi, t=float(k)))
    est = estimate_position(reports, extent, rf)
    assert est.degenerate is True
    b = derive_boundary(est, extent)
    # unobservable cross-track axis blows the ellipse up to extent scale
    assert b.semi_axes[0] > 40.0


def test_derive_boundary_axes_and_rect():
    from sigseek.lcs import PositionEstimate
    est = PositionEstimate(x=50.0, y=40.0, cov=np.diag([100.0, 25.0]),
                           n_reports=10, timestamp_s=1.0, nll=0.0,
                           offset_db=0.0)
    b = derive_boundary(est)
    assert b.semi_axes == pytest.approx((30.0, 15.0))
    assert b.orientation_rad == pytest.approx(0.0)
    assert b.rect == pytest.approx((20.0, 25.0, 80.0, 55.0))
    assert b.area_m2() == pytest.approx(math.pi * 450.0)
    clipped = derive_boundary(est, extent=(0.0, 0.0, 60.0, 60.0))
    assert clipped.rect == pytest.approx((20.0, 25.0, 60.0, 55.0))
    with pytest.raises(ValueError):
        derive_boundary(PositionEstimate(x=0, y=0, cov=np.array([[1, 2], [2, 1]]),
                                         n_reports=4, timestamp_s=0.0, nll=0.0,
                                         offset_db=0.0))


def test_area_ratio_values_and_errors():
    assert area_ratio(1.0, 2.0) == 0.25
    assert area_ratio(10.0, 10.0) == 1.0
    with pytest.raises(ValueError):
        area_ratio(0.0, 5.0)
    with pytest.raises(ValueError):
        area_ratio(5.0, -1.0)


def test_boustrophedon_route_covers_strip():
    strip = (0.0, 0.0, 100.0, 40.0)
    spacing = 10.0
    route = boustrophedon_route(strip, spacing)
    xs = sorted({p[0] for p in route})
    # every column of the strip lies within spacing/2 of a pass
    for x in np.linspace(0.0, 100.0, 201):
        assert min(abs(x - px) for px in xs) <= spacing / 2.0 + 1e-9
    for p in route:
        assert 0.0 <= p[0] <= 100.0 and 0.0 <= p[1] <= 40.0
    # passes alternate between the top and bottom margins
    ys = [p[1] for p in route]
    assert set(ys) == {5.0, 35.0}


def test_partition_strips_tile_exactly():
    rect = (10.0, 20.0, 90.0, 60.0)
    strips = partition_strips(rect, 3)
    assert len(strips) == 3
    assert strips[0][0] == 10.0
    assert strips[-1][2] == 90.0
    for a, b in zip(strips, strips[1:]):
        assert a[2] == pytest.approx(b[0])
    total = sum((s[2] - s[0]) * (s[3] - s[1]) for s in strips)
    assert total == pytest.approx(80.0 * 40.0)


def test_snap_route_to_roads():
    roads = [[(0.0, 50.0), (100.0, 50.0)]]
    route = [(10.0, 10.0), (90.0, 90.0)]
    snapped = snap_route_to_roads(route, roads, (0.0, 0.0, 100.0, 100.0))
    assert all(p[1] == 50.0 for p in snapped)
    assert snapped[0][0] == pytest.approx(10.0)
    # without roads the route is returned as planned
    assert snap_route_to_roads(route, [], (0.0, 0.0, 100.0, 100.0)) == route


def test_floor_survey_order_evens_then_odds():
    assert floor_survey_order(1) == [0]
    assert floor_survey_order(2) == [0, 1]
    assert floor_survey_order(5) == [0, 2, 4, 1, 3]
    assert floor_survey_order(6) == [0, 2, 4, 1, 3, 5]


def test_plan_building_search_assignments():
    from sigseek.lcs import SearchBoundary
    boundary = SearchBoundary(center=(50.0, 50.0), semi_axes=(40.0, 30.0),
                              orientation_rad=0.0,
                              rect=(10.0, 20.0, 90.0, 80.0))
    plan = plan_building_search(boundary, ["sme-1", "sme-2"], roads=[],
                                extent=(0.0, 0.0, 100.0, 100.0), spacing=20.0,
                                revision=3)
    assert plan.revision == 3
    assert list(plan.assignments) == ["sme-1", "sme-2"]
    strips = [a.strip for a in plan.assignments.values()]
    assert strips[0][0] == 10.0 and strips[-1][2] == 90.0
    for a in plan.assignments.values():
        assert a.routes and a.routes[0], "every rescuer gets a route"
        for p in a.routes[0]:
            assert 10.0 <= p[0] <= 90.0 and 20.0 <= p[1] <= 80.0
