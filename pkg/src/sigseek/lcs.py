"""Location calculation: RSSI contour interpolation, caller position estimation,
search boundary derivation, and area partitioning with sweep routes.

The estimator treats the unknown link budget (handset power, penetration losses,
antenna gains) as a nuisance offset: for a candidate position c the model is
rssi_i = b - 10 n log10(d_i(c)) + e_i, and b is profiled out in closed form, so
only the spatial shape of the decay matters. The residual sum over a candidate
grid gives a likelihood surface; its curvature at the optimum yields the
covariance that defines the search boundary ellipse.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np
from scipy.spatial import cKDTree

from . import geometry as geo
from .geometry import Point, Rect
from .propagation import RfParams
from .sme import MeasurementReport


class EstimationError(ValueError):
    """Not enough usable reports to form an estimate."""


@dataclass
class MapRegion:
    kind: str  # "outdoor" | "floor"
    rect: Rect
    building_index: int | None = None
    floor_index: int | None = None


@dataclass
class ContourMap:
    """Interpolated RSSI surface over a region grid. Cells too far from any
    report carry no support and hold NaN."""

    region: MapRegion
    origin: Point
    cell_size: float
    values: np.ndarray  # (ny, nx), dBm, NaN where unsupported
    support: np.ndarray  # (ny, nx) bool
    # values restricted to cells eligible for peak selection (close to a
    # sample); rescan this, not values, when hunting alternate peaks
    peak_values: np.ndarray
    peak_cell: tuple[int, int]
    peak_dbm: float
    generation: int = 0

    def cell_center(self, cell: tuple[int, int]) -> Point:
        i, j = cell
        return (self.origin[0] + (j + 0.5) * self.cell_size,
                self.origin[1] + (i + 0.5) * self.cell_size)

    @property
    def peak_xy(self) -> Point:
        return self.cell_center(self.peak_cell)


def find_peak(values: np.ndarray) -> tuple[tuple[int, int], float]:
    """Strongest finite cell; ties break to the lowest (row, col)."""
    finite = np.isfinite(values)
    if not finite.any():
        raise EstimationError("contour has no supported cells")
    vmax = np.nanmax(values)
    cells = np.argwhere(finite & (values == vmax))
    i, j = cells[0]
    return (int(i), int(j)), float(vmax)


def _grid_centers(rect: Rect, cell_size: float) -> tuple[np.ndarray, np.ndarray, int, int]:
    nx = max(int(math.ceil((rect[2] - rect[0]) / cell_size)), 1)
    ny = max(int(math.ceil((rect[3] - rect[1]) / cell_size)), 1)
    xs = rect[0] + (np.arange(nx) + 0.5) * cell_size
    ys = rect[1] + (np.arange(ny) + 0.5) * cell_size
    return xs, ys, nx, ny


def interpolate_idw(reports: Iterable[MeasurementReport], region: MapRegion,
                    cell_size: float, power: float = 2.0, k_neighbors: int = 8,
                    support_factor: float = 3.0, peak_near_factor: float = 1.0,
                    generation: int = 0) -> ContourMap:
    """Inverse-distance-weighted RSSI surface from valid omnidirectional reports.

    Weighting happens in the dB domain. A cell within cell_size/4 of a report
    snaps to that report's value; cells farther than
    support_factor * cell_size * sqrt(k) from every report are masked out.

    The reported peak only considers cells with a sample within
    peak_near_factor * cell_size. Far from the samples IDW flattens toward a
    local mean, and when the measured profile is noisy that smoothed plateau
    can out-vote every measured cell even though nobody took a reading there.
    """
    pts = []
    vals = []
    for r in reports:
        if r.mode == "omni" and r.rssi.valid:
            pts.append((r.pose.x, r.pose.y))
            vals.append(r.rssi.rssi_dbm)
    if not pts:
        raise EstimationError("no valid reports to interpolate")
    p = np.asarray(pts)
    v = np.asarray(vals)
    xs, ys, nx, ny = _grid_centers(region.rect, cell_size)
    gx, gy = np.meshgrid(xs, ys)
    q = np.column_stack([gx.ravel(), gy.ravel()])

    k = min(k_neighbors, len(p))
    tree = cKDTree(p)
    d, idx = tree.query(q, k=k)
    if k == 1:
        d = d[:, None]
        idx = idx[:, None]
    with np.errstate(divide="ignore", invalid="ignore"):
        w = 1.0 / np.power(d, power)
        est = np.einsum("ij,ij->i", w, v[idx]) / w.sum(axis=1)
    near = d[:, 0] < cell_size / 4.0
    est[near] = v[idx[near, 0]]

    reach = support_factor * cell_size * math.sqrt(k_neighbors)
    supported = d[:, 0] <= reach
    est[~supported] = np.nan
    values = est.reshape(ny, nx)
    support = supported.reshape(ny, nx)
    # the cell containing a sample is at most cell_size/sqrt(2) from it, so
    # this mask is never empty
    near_sample = (d[:, 0] <= peak_near_factor * cell_size).reshape(ny, nx)
    peak_values = np.where(near_sample, values, np.nan)
    peak_cell, peak_dbm = find_peak(peak_values)
    return ContourMap(region=region, origin=(region.rect[0], region.rect[1]),
                      cell_size=cell_size, values=values, support=support,
                      peak_values=peak_values, peak_cell=peak_cell,
                      peak_dbm=peak_dbm, generation=generation)


@dataclass
class PositionEstimate:
    x: float
    y: float
    cov: np.ndarray  # 2x2
    n_reports: int
    timestamp_s: float
    nll: float
    offset_db: float
    degenerate: bool = False
    floor_index: int | None = None

    def xy(self) -> Point:
        return (self.x, self.y)


def _profiled_nll(px: np.ndarray, py: np.ndarray, m: np.ndarray, cx: np.ndarray,
                  cy: np.ndarray, n_exp: float, sigma: float, d_floor: float) -> np.ndarray:
    """Residual NLL per candidate with the link-budget offset profiled out."""
    d2 = (px[None, :] - cx[:, None]) ** 2 + (py[None, :] - cy[:, None]) ** 2
    d2 = np.maximum(d2, d_floor * d_floor)
    g = m[None, :] + 5.0 * n_exp * np.log10(d2)
    b = g.mean(axis=1)
    sse = ((g - b[:, None]) ** 2).sum(axis=1)
    return sse / (2.0 * sigma * sigma), b


def estimate_position(reports: list[MeasurementReport], extent: Rect, rf: RfParams,
                      cell_size: float = 5.0, sigma_resid_db: float = 4.0,
                      min_reports: int = 4, exponent: float | None = None) -> PositionEstimate:
    """Maximum-likelihood caller position over a candidate grid spanning extent.

    Uses valid omnidirectional reports only. Raises EstimationError with fewer
    than min_reports usable reports. When the reporting geometry is nearly
    collinear the cross-track direction is unobservable; the covariance is then
    inflated along that axis and the estimate flagged degenerate.

    exponent defaults to the outdoor path loss exponent; pass the indoor one
    when all reports come from inside the target's building.
    """
    use = [r for r in reports if r.mode == "omni" and r.rssi.valid]
    if len(use) < min_reports:
        raise EstimationError(f"need at least {min_reports} valid reports, have {len(use)}")
    px = np.array([r.pose.x for r in use])
    py = np.array([r.pose.y for r in use])
    m = np.array([r.rssi.rssi_dbm for r in use])
    t_latest = max(r.rssi.timestamp_s for r in use)

    xs, ys, nx, ny = _grid_centers(extent, cell_size)
    d_floor = max(rf.ref_distance_m, cell_size / 2.0)
    n_exp = rf.exponent_outdoor if exponent is None else exponent

    # coarse pass over a 3x-decimated grid, then the full-resolution scan only
    # inside a window around the coarse minimum; the profiled surface is smooth
    # at the coarse scale so the basin survives decimation
    j_lo, j_hi, i_lo, i_hi = 0, nx, 0, ny
    if nx * ny > 1024:
        cxs, cys = xs[1::3], ys[1::3]
        gxc, gyc = np.meshgrid(cxs, cys)
        cnll, _ = _profiled_nll(px, py, m, gxc.ravel(), gyc.ravel(), n_exp,
                                sigma_resid_db, d_floor)
        ci, cj = divmod(int(np.argmin(cnll)), len(cxs))
        j_lo, j_hi = max(0, 3 * cj + 1 - 9), min(nx, 3 * cj + 1 + 10)
        i_lo, i_hi = max(0, 3 * ci + 1 - 9), min(ny, 3 * ci + 1 + 10)
    gx, gy = np.meshgrid(xs[j_lo:j_hi], ys[i_lo:i_hi])
    nll, b = _profiled_nll(px, py, m, gx.ravel(), gy.ravel(), n_exp,
                           sigma_resid_db, d_floor)
    wi, wj = divmod(int(np.argmin(nll)), j_hi - j_lo)
    best = int(np.argmin(nll))
    bi, bj = wi + i_lo, wj + j_lo
    surface = np.full((ny, nx), np.inf)
    surface[i_lo:i_hi, j_lo:j_hi] = nll.reshape(i_hi - i_lo, j_hi - j_lo)

    # quadratic refinement of the peak cell, one axis at a time
    def refine(i: int, j: int, axis: int) -> float:
        if axis == 0:
            lo = surface[i, j - 1] if j > 0 else None
            hi = surface[i, j + 1] if j < nx - 1 else None
        else:
            lo = surface[i - 1, j] if i > 0 else None
            hi = surface[i + 1, j] if i < ny - 1 else None
        c = surface[i, j]
        if lo is None or hi is None or not (np.isfinite(lo) and np.isfinite(hi)):
            return 0.0
        den = lo - 2.0 * c + hi
        if den <= 1e-12:
            return 0.0
        off = 0.5 * (lo - hi) / den
        return float(np.clip(off, -1.0, 1.0))

    x_hat = xs[bj] + refine(bi, bj, 0) * cell_size
    y_hat = ys[bi] + refine(bi, bj, 1) * cell_size

    # observed-information covariance from central differences of the NLL
    h = cell_size

    def nll_at(x: float, y: float) -> float:
        val, _ = _profiled_nll(px, py, m, np.array([x]), np.array([y]),
                               n_exp, sigma_resid_db, d_floor)
        return float(val[0])

    f0 = nll_at(x_hat, y_hat)
    fxx = (nll_at(x_hat + h, y_hat) - 2 * f0 + nll_at(x_hat - h, y_hat)) / h ** 2
    fyy = (nll_at(x_hat, y_hat + h) - 2 * f0 + nll_at(x_hat, y_hat - h)) / h ** 2
    fxy = (nll_at(x_hat + h, y_hat + h) - nll_at(x_hat + h, y_hat - h)
           - nll_at(x_hat - h, y_hat + h) + nll_at(x_hat - h, y_hat - h)) / (4 * h ** 2)
    hess = np.array([[fxx, fxy], [fxy, fyy]])

    floor_var = (cell_size / 2.0) ** 2
    try:
        cov = np.linalg.inv(hess)
        if not np.all(np.isfinite(cov)) or np.linalg.eigvalsh(cov).min() <= 0:
            raise np.linalg.LinAlgError
    except np.linalg.LinAlgError:
        cov = np.eye(2) * floor_var
    cov = 0.5 * (cov + cov.T)
    # resolution floor of half a cell per ellipse axis. Floor the eigenvalues,
    # not the diagonal: clamping diagonals leaves the stale cross term in the
    # determinant and the ellipse area creeps as it decays, whereas a fully
    # clamped covariance here is exactly isotropic and the area stays put.
    evals, evecs = np.linalg.eigh(cov)
    if evals[1] <= floor_var:
        cov = np.eye(2) * floor_var
    elif evals[0] < floor_var:
        evals[0] = floor_var
        cov = evecs @ np.diag(evals) @ evecs.T
        cov = 0.5 * (cov + cov.T)

    # collinear reporting track: cross-track position is unobservable
    degenerate = False
    pos = np.column_stack([px, py])
    centered = pos - pos.mean(axis=0)
    pc_vals, pc_vecs = np.linalg.eigh(centered.T @ centered / len(use))
    span = max(extent[2] - extent[0], extent[3] - extent[1])
    if math.sqrt(max(pc_vals[0], 0.0)) < 1.0:
        weak = pc_vecs[:, 0]
        cov = cov + np.outer(weak, weak) * (span / 4.0) ** 2
        degenerate = True
        if math.sqrt(max(pc_vals[1], 0.0)) < 1.0:
            strong = pc_vecs[:, 1]
            cov = cov + np.outer(strong, strong) * (span / 4.0) ** 2

    return PositionEstimate(x=float(x_hat), y=float(y_hat), cov=cov,
                            n_reports=len(use), timestamp_s=float(t_latest),
                            nll=f0, offset_db=float(b[best]), degenerate=degenerate)


@dataclass
class SearchBoundary:
    """3-sigma confidence ellipse plus its axis-aligned bounding rectangle."""

    center: Point
    semi_axes: tuple[float, float]  # major, minor
    orientation_rad: float  # of the major axis, in [0, pi)
    rect: Rect

    def area_m2(self) -> float:
        return math.pi * self.semi_axes[0] * self.semi_axes[1]


def derive_boundary(est: PositionEstimate, extent: Rect | None = None,
                    n_sigma: float = 3.0) -> SearchBoundary:
    """Confidence ellipse of the estimate. Raises ValueError on a non-PSD
    covariance; zero eigenvalues are floored so the axes stay positive."""
    cov = np.asarray(est.cov, dtype=float)
    if cov.shape != (2, 2) or abs(cov[0, 1] - cov[1, 0]) > 1e-6:
        raise ValueError("covariance must be symmetric 2x2")
    vals, vecs = np.linalg.eigh(cov)
    if vals.min() < -1e-9:
        raise ValueError("covariance is not positive semidefinite")
    vals = np.maximum(vals, 1e-12)
    major = float(n_sigma * math.sqrt(vals[1]))
    minor = float(n_sigma * math.sqrt(vals[0]))
    v = vecs[:, 1]
    orientation = math.atan2(v[1], v[0]) % math.pi
    hx = n_sigma * math.sqrt(cov[0, 0])
    hy = n_sigma * math.sqrt(cov[1, 1])
    rect = (est.x - hx, est.y - hy, est.x + hx, est.y + hy)
    if extent is not None:
        rect = geo.clamp_rect(rect, extent)
    return SearchBoundary(center=(est.x, est.y), semi_axes=(major, minor),
                          orientation_rad=orientation, rect=rect)


def area_ratio(radius_new: float, radius_old: float) -> float:
    """Area shrink factor between two square search regions given their
    characteristic half-widths."""
    if radius_new <= 0.0 or radius_old <= 0.0:
        raise ValueError("radii must be positive")
    return (radius_new * radius_new) / (radius_old * radius_old)


# --- partitioning and routing ----------------------------------------------

@dataclass
class Assignment:
    rescuer_id: str
    strip: Rect | None = None
    floors: tuple[int, ...] = ()
    routes: list[list[Point]] = field(default_factory=list)
    building_index: int | None = None


@dataclass
class SearchPlan:
    phase: str  # "building" | "floor"
    assignments: dict[str, Assignment]
    revision: int = 0


def boustrophedon_route(strip: Rect, spacing: float) -> list[Point]:
    """Back-and-forth vertical passes across a strip, spaced spacing apart."""
    w = geo.rect_width(strip)
    h = geo.rect_height(strip)
    margin = min(spacing, w, h) / 2.0
    x = strip[0] + margin
    xs = []
    while x <= strip[2] - margin + geo.EPS:
        xs.append(x)
        x += spacing
    if not xs:
        xs = [0.5 * (strip[0] + strip[2])]
    y_lo, y_hi = strip[1] + margin, strip[3] - margin
    pts: list[Point] = []
    for i, xv in enumerate(xs):
        if i % 2 == 0:
            pts.extend([(xv, y_lo), (xv, y_hi)])
        else:
            pts.extend([(xv, y_hi), (xv, y_lo)])
    return pts


def snap_route_to_roads(route: list[Point], roads: list[list[Point]],
                        strip: Rect) -> list[Point]:
    """Project route vertices onto the road segments that pass through the
    strip. Falls back to the raw route when no road crosses the strip."""
    segs: list[tuple[Point, Point]] = []
    for road in roads:
        for i in range(len(road) - 1):
            clipped = geo.clip_segment_to_rect(road[i], road[i + 1], strip)
            if clipped is not None:
                segs.append(clipped)
    if not segs:
        return route
    snapped: list[Point] = []
    for p in route:
        best, best_d = None, math.inf
        for a, b in segs:
            q, d = geo.nearest_point_on_segment(p, a, b)
            if d < best_d:
                best, best_d = q, d
        if not snapped or geo.dist(snapped[-1], best) > 0.5:
            snapped.append(best)
    if len(snapped) < 2 or geo.polyline_length(snapped) <= geo.EPS:
        return route
    return snapped


def partition_strips(rect: Rect, n: int) -> list[Rect]:
    """n equal-width vertical strips that exactly tile the rectangle."""
    if n < 1:
        raise ValueError("need at least one partition")
    x0, y0, x1, y1 = rect
    w = x1 - x0
    cuts = [x0 + w * i / n for i in range(n + 1)]
    cuts[-1] = x1
    return [(cuts[i], y0, cuts[i + 1], y1) for i in range(n)]


def plan_building_search(boundary: SearchBoundary, rescuer_ids: list[str],
                         roads: list[list[Point]], extent: Rect,
                         spacing: float = 40.0, revision: int = 0,
                         snap_to_roads: bool = True) -> SearchPlan:
    """Split the boundary rectangle into per-rescuer strips with road-following
    sweep routes.  snap_to_roads=False keeps the raw strips for close-in
    passes where road geometry caps the approach distance."""
    if not rescuer_ids:
        raise ValueError("need at least one rescuer")
    rect = geo.clamp_rect(boundary.rect, extent)
    if geo.rect_area(rect) <= 0.0:
        pad = 10.0
        cx, cy = geo.clamp_to_rect(extent, *boundary.center)
        rect = geo.clamp_rect((cx - pad, cy - pad, cx + pad, cy + pad), extent)
    assignments: dict[str, Assignment] = {}
    for rid, strip in zip(rescuer_ids, partition_strips(rect, len(rescuer_ids))):
        route = boustrophedon_route(strip, spacing)
        if snap_to_roads:
            route = snap_route_to_roads(route, roads, strip)
        assignments[rid] = Assignment(rescuer_id=rid, strip=strip, routes=[route])
    return SearchPlan(phase="building", assignments=assignments, revision=revision)


def floor_survey_order(floor_count: int) -> list[int]:
    """Evens bottom-up, then odds.  The first pass leaves no two-floor gap, so
    every floor gets measured neighbors (one slab away) as early as possible."""
    return [f for f in range(floor_count) if f % 2 == 0] + \
           [f for f in range(floor_count) if f % 2 == 1]


def plan_floor_search(building, building_index: int, rescuer_ids: list[str],
                      revision: int = 0) -> SearchPlan:
    """Assign floors round-robin in survey order; the route on each floor is
    its corridor."""
    if not rescuer_ids:
        raise ValueError("need at least one rescuer")
    n = len(rescuer_ids)
    assignments = {rid: Assignment(rescuer_id=rid, building_index=building_index)
                   for rid in rescuer_ids}
    for i, f in enumerate(floor_survey_order(building.floor_count)):
        rid = rescuer_ids[i % n]
        a = assignments[rid]
        a.floors = a.floors + (f,)
        a.routes.append(list(building.floors[f].corridor))
    return SearchPlan(phase="floor", assignments=assignments, revision=revision)
