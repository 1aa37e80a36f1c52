"""Figure and delimited-text rendering for batch and contour outputs.

The CSV files are the canonical record; the figures are derived views written
next to them so a batch directory is self-describing: trials.csv plus
search_time_cdf.png and milestones.png, and contour.csv plus contour.png when
a grid dump is present.
"""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def contour_csv(cmap) -> bytes:
    """Delimited dump of one contour grid: cell centers and levels, row-major,
    empty level for unsupported cells."""
    buf = io.StringIO(newline="")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["x", "y", "rssi_dbm"])
    ny, nx = cmap.values.shape
    for i in range(ny):
        cy = cmap.origin[1] + (i + 0.5) * cmap.cell_size
        for j in range(nx):
            cx = cmap.origin[0] + (j + 0.5) * cmap.cell_size
            v = cmap.values[i, j]
            w.writerow([f"{cx:.3f}", f"{cy:.3f}",
                        "" if not np.isfinite(v) else f"{v:.2f}"])
    return buf.getvalue().encode()


def read_contour_csv(path: str | Path):
    """Rebuild (xs, ys, grid) from a contour.csv written by contour_csv."""
    xs_seen: list[float] = []
    ys_seen: list[float] = []
    rows = []
    with open(path, newline="") as f:
        for rec in csv.DictReader(f):
            x, y = float(rec["x"]), float(rec["y"])
            v = float(rec["rssi_dbm"]) if rec["rssi_dbm"] else math.nan
            rows.append((x, y, v))
            if x not in xs_seen:
                xs_seen.append(x)
            if y not in ys_seen:
                ys_seen.append(y)
    xs, ys = sorted(xs_seen), sorted(ys_seen)
    xi = {x: j for j, x in enumerate(xs)}
    yi = {y: i for i, y in enumerate(ys)}
    grid = np.full((len(ys), len(xs)), np.nan)
    for x, y, v in rows:
        grid[yi[y], xi[x]] = v
    return np.array(xs), np.array(ys), grid


def render_contour(csv_path: str | Path, out_path: str | Path | None = None) -> Path:
    """Heat map of a contour dump; unsupported cells stay transparent."""
    csv_path = Path(csv_path)
    out = Path(out_path) if out_path else csv_path.with_suffix(".png")
    xs, ys, grid = read_contour_csv(csv_path)
    fig, ax = plt.subplots(figsize=(7, 6))
    masked = np.ma.masked_invalid(grid)
    half = 0.0
    if len(xs) > 1:
        half = (xs[1] - xs[0]) / 2.0
    im = ax.imshow(masked, origin="lower", aspect="equal", cmap="inferno",
                   extent=(xs[0] - half, xs[-1] + half,
                           ys[0] - half, ys[-1] + half))
    if masked.count():
        i, j = np.unravel_index(np.nanargmax(grid), grid.shape)
        ax.plot(xs[j], ys[i], "c^", ms=10, mec="k", label="peak")
        ax.legend(loc="upper right")
    fig.colorbar(im, ax=ax, label="RSSI (dBm)")
    ax.set_xlabel("x (m)")
    ax.set_ylabel("y (m)")
    ax.set_title(csv_path.stem)
    fig.tight_layout()
    fig.savefig(out, dpi=120)
    plt.close(fig)
    return out


def _read_trials(path: Path) -> list[dict]:
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


def render_search_time_cdf(trials: list[dict], deadline_s: float,
                           out_path: Path) -> Path:
    times = sorted(float(r["total_time"]) for r in trials if r["success"] == "1")
    fig, ax = plt.subplots(figsize=(6, 4))
    if times:
        # ECDF over all trials, so failures cap the curve below 1
        frac = np.arange(1, len(times) + 1) / len(trials)
        ax.step(times, frac, where="post", lw=2)
    ax.axvline(deadline_s, color="r", ls="--", lw=1, label=f"deadline {deadline_s:.0f}s")
    ax.axhline(0.9, color="gray", ls=":", lw=1)
    ax.set_xlabel("search time (s)")
    ax.set_ylabel("fraction of trials found")
    ax.set_ylim(0.0, 1.02)
    ax.legend(loc="lower right")
    ax.set_title(f"search time CDF, n={len(trials)}")
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
    return out_path


def render_milestones(trials: list[dict], summary: dict | None,
                      out_path: Path) -> Path:
    cols = [("building_time", "building"), ("room_time", "room"),
            ("total_time", "total")]
    means, p90s, labels = [], [], []
    for key, label in cols:
        vals = sorted(float(r[key]) for r in trials if r.get(key))
        if not vals:
            continue
        labels.append(label)
        means.append(float(np.mean(vals)))
        p90s.append(vals[math.ceil(0.9 * len(vals)) - 1])
    fig, ax = plt.subplots(figsize=(6, 4))
    pos = np.arange(len(labels))
    ax.bar(pos - 0.2, means, width=0.4, label="mean")
    ax.bar(pos + 0.2, p90s, width=0.4, label="p90")
    ax.set_xticks(pos, labels)
    ax.set_ylabel("time (s)")
    title = "milestone times"
    if summary:
        title += f", success {summary['success_rate_within_deadline']:.0%}"
    ax.set_title(title)
    ax.legend()
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
    return out_path


def render_batch_dir(batch_dir: str | Path) -> list[Path]:
    """Render every figure a batch directory supports, next to its CSVs."""
    d = Path(batch_dir)
    trials_path = d / "trials.csv"
    written: list[Path] = []
    if trials_path.exists():
        trials = _read_trials(trials_path)
        summary = None
        deadline = 180.0
        spath = d / "summary.json"
        if spath.exists():
            summary = json.loads(spath.read_text())
            deadline = float(summary.get("deadline_s", deadline))
        written.append(render_search_time_cdf(trials, deadline,
                                              d / "search_time_cdf.png"))
        written.append(render_milestones(trials, summary, d / "milestones.png"))
    for cpath in sorted(d.glob("*contour*.csv")):
        written.append(render_contour(cpath))
    if not written:
        raise FileNotFoundError(f"nothing to render in {d} (no trials.csv or contour csv)")
    return written
