"""Figure and delimited-output rendering."""

import numpy as np
import pytest

from sigseek.harness import BatchSpec, run_batch
from sigseek.lcs import MapRegion, interpolate_idw
from sigseek.report import (contour_csv, read_contour_csv, render_batch_dir,
                            render_contour)
from support import mk_report


def _cmap():
    reports = [mk_report(5.0, 5.0, -70.0), mk_report(35.0, 25.0, -85.25),
               mk_report(15.0, 35.0, -92.333)]
    region = MapRegion(kind="outdoor", rect=(0.0, 0.0, 40.0, 40.0))
    return interpolate_idw(reports, region, cell_size=10.0)


def test_contour_csv_round_trip(tmp_path):
    cmap = _cmap()
    raw = contour_csv(cmap)
    lines = raw.decode().splitlines()
    assert lines[0] == "x,y,rssi_dbm"
    assert len(lines) == 1 + cmap.values.size
    p = tmp_path / "contour.csv"
    p.write_bytes(raw)
    xs, ys, grid = read_contour_csv(p)
    assert list(xs) == [5.0, 15.0, 25.0, 35.0]
    assert list(ys) == [5.0, 15.0, 25.0, 35.0]
    assert grid.shape == cmap.values.shape
    finite = np.isfinite(cmap.values)
    assert np.array_equal(np.isfinite(grid), finite)
    # levels survive the 0.01 dB column formatting
    assert np.allclose(grid[finite], cmap.values[finite], atol=0.005)


def test_render_contour_png(tmp_path):
    p = tmp_path / "contour.csv"
    p.write_bytes(contour_csv(_cmap()))
    out = render_contour(p)
    assert out.exists()
    assert out.suffix == ".png"
    assert out.stat().st_size > 1000


def test_render_batch_dir(tmp_path):
    spec = BatchSpec(scenario="minimal", policy="helps", n_trials=2,
                     seed_base=500, placement="uniform-random-building")
    run_batch(spec, out_dir=tmp_path)
    made = render_batch_dir(tmp_path)
    assert made, "no figures rendered"
    for path in made:
        assert path.exists()
        assert path.suffix == ".png"


def test_render_batch_dir_empty(tmp_path):
    with pytest.raises(FileNotFoundError):
        render_batch_dir(tmp_path)
