"""Command-line entry points, run headless."""

import json

import pytest

from sigseek.cli import main


def test_validate_builtin(capsys):
    assert main(["validate", "--scenario", "minimal"]) == 0
    out = capsys.readouterr().out
    assert out.startswith("OK minimal-open-field")
    assert "1 rescuers" in out


def test_validate_rejects_bad_file(tmp_path, capsys):
    p = tmp_path / "broken.json"
    p.write_text('{"extent": [0, 0, -5, 10]}')
    assert main(["validate", "--scenario", str(p)]) == 1
    assert "INVALID" in capsys.readouterr().err


def test_run_writes_session_dir(tmp_path, capsys):
    rc = main(["run", "--scenario", "minimal", "--seed", "3",
               "--out", str(tmp_path)])
    assert rc == 0
    assert "result: success" in capsys.readouterr().out
    (session_dir,) = [p for p in tmp_path.iterdir() if p.is_dir()]
    assert (session_dir / "outcome.json").exists()
    assert (session_dir / "reports.jsonl").stat().st_size > 0


def test_batch_csv_to_stdout(capsys):
    rc = main(["batch", "--scenario", "minimal", "--trials", "2",
               "--seed", "500", "--placement", "uniform-random-building"])
    assert rc == 0
    captured = capsys.readouterr()
    lines = captured.out.splitlines()
    assert lines[0].startswith("seed,success,")
    assert len(lines) == 3
    assert "success" in captured.err


def test_batch_writes_dir_and_figures(tmp_path, capsys):
    rc = main(["batch", "--scenario", "minimal", "--trials", "2",
               "--seed", "500", "--placement", "uniform-random-building",
               "--out", str(tmp_path), "--figures"])
    assert rc == 0
    names = {p.name for p in tmp_path.iterdir()}
    assert {"trials.csv", "summary.json"} <= names
    assert any(n.endswith(".png") for n in names)
    doc = json.loads((tmp_path / "summary.json").read_text())
    assert doc["n_trials"] == 2


def test_export_contour(tmp_path, capsys):
    out = tmp_path / "grid.csv"
    rc = main(["export-contour", "--scenario", "minimal", "--seed", "3",
               "--out", str(out), "--png"])
    assert rc == 0
    assert out.exists()
    header = out.read_text().splitlines()[0]
    assert header == "x,y,rssi_dbm"
    assert out.with_suffix(".png").exists()


def test_report_command(tmp_path, capsys):
    main(["batch", "--scenario", "minimal", "--trials", "2", "--seed", "500",
          "--placement", "uniform-random-building", "--out", str(tmp_path)])
    capsys.readouterr()
    assert main(["report", str(tmp_path)]) == 0
    assert "wrote" in capsys.readouterr().out
    empty = tmp_path / "nothing"
    empty.mkdir()
    assert main(["report", str(empty)]) == 1


def test_knock_baseline_run(capsys):
    rc = main(["run", "--scenario", "office", "--policy", "knock_baseline",
               "--seed", "1"])
    assert rc == 0
    assert "result: success" in capsys.readouterr().out
