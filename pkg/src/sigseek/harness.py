"""Monte Carlo batch driver.

Runs seeded search sessions in bulk, writes the per-trial CSV and a summary
record, and hosts the shrinking-boundary approach study. Every trial owns its
RNG streams, derived from (seed base, trial index) alone, so per-trial output
is bit-identical no matter how many workers execute the batch or in what order
trials finish.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from dataclasses import dataclass, field
from multiprocessing import Pool
from pathlib import Path

import numpy as np

from .lcs import derive_boundary, estimate_position
from .orchestrator import run_session
from .propagation import ShadowingField
from .scenarios import BUILTIN, randomize_target
from .sme import SmeState, set_route, step
from .world import Scenario, load_scenario_file, scenario_to_dict

PLACEMENTS = ("fixed", "uniform-random-room", "uniform-random-building")


def resolve_scenario(ref: str) -> Scenario:
    """Accept a built-in scenario name or a path to a scenario JSON file."""
    maker = BUILTIN.get(ref)
    if maker is not None:
        return maker()
    return load_scenario_file(ref)


@dataclass
class BatchSpec:
    scenario: str  # built-in name or JSON path
    policy: str = "helps"
    n_trials: int = 1
    seed_base: int = 0
    deadline_s: float = 180.0
    placement: str = "fixed"
    workers: int = 1
    # building-search experiments end at building identification; full runs
    # end when a room or outdoor position is committed
    until: str = "found"

    def __post_init__(self) -> None:
        if self.n_trials < 1:
            raise ValueError("n_trials must be >= 1")
        if self.deadline_s <= 0.0:
            raise ValueError("deadline must be positive")
        if self.placement not in PLACEMENTS:
            raise ValueError(f"placement must be one of {PLACEMENTS}")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        if self.until not in ("found", "building_commit"):
            raise ValueError(f"unknown stop condition {self.until!r}")


@dataclass
class TrialRecord:
    trial: int
    seed: int
    success: bool
    building_time_s: float | None
    room_time_s: float | None
    total_time_s: float
    distances_m: dict[str, float]
    building_correct: bool | None
    room_correct: bool | None
    phase_final: str


@dataclass
class MetricsSummary:
    n_trials: int
    deadline_s: float
    success_rate_within_deadline: float
    mean_time_s: float | None  # over successful trials, no deadline filter
    p90_time_s: float | None
    n_success: int
    milestones: dict[str, dict] = field(default_factory=dict)
    fingerprint: str = ""

    def to_dict(self) -> dict:
        return {
            "n_trials": self.n_trials,
            "deadline_s": self.deadline_s,
            "success_rate_within_deadline": self.success_rate_within_deadline,
            "mean_time_s": self.mean_time_s,
            "p90_time_s": self.p90_time_s,
            "n_success": self.n_success,
            "milestones": self.milestones,
            "fingerprint": self.fingerprint,
        }


def p90(times: list[float]) -> float:
    """Smallest value whose empirical CDF reaches 0.9 (lower interpolation)."""
    if not times:
        raise ValueError("p90 of empty sample")
    ordered = sorted(times)
    k = math.ceil(0.9 * len(ordered))
    return float(ordered[k - 1])


def fingerprint(spec: BatchSpec) -> str:
    """Digest of everything that determines batch output. Worker count is
    excluded on purpose: parallelism must not change results."""
    doc = {
        "scenario": scenario_to_dict(resolve_scenario(spec.scenario)),
        "policy": spec.policy,
        "n_trials": spec.n_trials,
        "seed_base": spec.seed_base,
        "deadline_s": spec.deadline_s,
        "placement": spec.placement,
        "until": spec.until,
    }
    blob = json.dumps(doc, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _place_target(scenario: Scenario, placement: str, seed_base: int,
                  trial: int) -> Scenario:
    if placement == "fixed":
        return scenario
    rng = np.random.default_rng((seed_base, trial, 7))
    kind = "room" if placement == "uniform-random-room" else "building"
    return randomize_target(scenario, rng, placement=kind)


def run_trial(spec: BatchSpec, trial: int) -> TrialRecord:
    scenario = resolve_scenario(spec.scenario)
    scenario = _place_target(scenario, spec.placement, spec.seed_base, trial)
    seed = spec.seed_base + trial
    out = run_session(scenario, spec.policy, seed=seed, until=spec.until)
    return TrialRecord(
        trial=trial, seed=seed, success=bool(out.success),
        building_time_s=out.building_time_s, room_time_s=out.room_time_s,
        total_time_s=out.total_time_s,
        distances_m={k: round(v, 2) for k, v in sorted(out.distances_m.items())},
        building_correct=out.building_correct, room_correct=out.room_correct,
        phase_final=out.phase_final)


def _worker(args: tuple) -> TrialRecord:
    spec_dict, trial = args
    return run_trial(BatchSpec(**spec_dict), trial)


def run_batch(spec: BatchSpec, out_dir: str | Path | None = None,
              ) -> tuple[MetricsSummary, list[TrialRecord]]:
    """Execute n_trials independent sessions and summarize them.

    With out_dir set, writes trials.csv and summary.json there.
    """
    spec_dict = {
        "scenario": spec.scenario, "policy": spec.policy,
        "n_trials": spec.n_trials, "seed_base": spec.seed_base,
        "deadline_s": spec.deadline_s, "placement": spec.placement,
        "workers": 1, "until": spec.until,
    }
    jobs = [(spec_dict, i) for i in range(spec.n_trials)]
    if spec.workers == 1:
        records = [_worker(j) for j in jobs]
    else:
        with Pool(spec.workers) as pool:
            records = pool.map(_worker, jobs, chunksize=max(1, spec.n_trials // (4 * spec.workers)))
    records.sort(key=lambda r: r.trial)
    summary = summarize(records, spec.deadline_s)
    summary.fingerprint = fingerprint(spec)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "trials.csv").write_bytes(records_csv(records))
        (out / "summary.json").write_text(
            json.dumps(summary.to_dict(), indent=2, sort_keys=True) + "\n")
    return summary, records


def records_csv(records: list[TrialRecord]) -> bytes:
    """Per-trial CSV: seed, success flags and milestone times, then one
    distance column per rescuer."""
    ids: list[str] = []
    for r in records:
        for k in r.distances_m:
            if k not in ids:
                ids.append(k)
    buf = io.StringIO(newline="")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["seed", "success", "building_time", "room_time", "total_time"]
               + [f"distance_{i}" for i in ids])
    for r in records:
        w.writerow([
            r.seed,
            int(r.success),
            "" if r.building_time_s is None else f"{r.building_time_s:.3f}",
            "" if r.room_time_s is None else f"{r.room_time_s:.3f}",
            f"{r.total_time_s:.3f}",
        ] + [f"{r.distances_m.get(i, 0.0):.2f}" for i in ids])
    return buf.getvalue().encode()


def summarize(records: list[TrialRecord], deadline_s: float = 180.0) -> MetricsSummary:
    """Batch metrics. Mean and p90 cover successful trials only; the success
    rate counts success within the deadline over all trials."""
    if not records:
        raise ValueError("no outcomes to summarize")
    n = len(records)
    succ = [r for r in records if r.success]
    within = sum(1 for r in succ if r.total_time_s <= deadline_s)
    times = [r.total_time_s for r in succ]

    def milestone(times_ok: list[float]) -> dict:
        return {
            "rate_within_deadline": sum(1 for t in times_ok if t <= deadline_s) / n,
            "mean_time_s": float(np.mean(times_ok)) if times_ok else None,
            "p90_time_s": p90(times_ok) if times_ok else None,
        }

    b_times = [r.building_time_s for r in records
               if r.building_correct and r.building_time_s is not None]
    r_times = [r.room_time_s for r in records
               if r.room_correct and r.room_time_s is not None]
    return MetricsSummary(
        n_trials=n, deadline_s=deadline_s,
        success_rate_within_deadline=within / n,
        mean_time_s=float(np.mean(times)) if times else None,
        p90_time_s=p90(times) if times else None,
        n_success=len(succ),
        milestones={"building": milestone(b_times), "room": milestone(r_times)})


# --- shrinking-boundary approach study ---------------------------------------

def approach_route(scenario: Scenario, legs: int = 6,
                   r_start: float = 150.0, r_end: float = 12.0) -> list:
    """Fixed spiral-in route around the caller: leg endpoints close from
    r_start to r_end while swinging in bearing, so the reporting track stays
    two-dimensional and the estimate never degenerates."""
    tx, ty = scenario.target.pose.xy()
    ex = scenario.extent
    pts = []
    for k in range(legs):
        r = r_start + (r_end - r_start) * k / (legs - 1)
        th = 2.4 * k  # ~137 deg per leg keeps consecutive bearings far apart
        x = min(max(tx + r * math.cos(th), ex[0] + 1.0), ex[2] - 1.0)
        y = min(max(ty + r * math.sin(th), ex[1] + 1.0), ex[3] - 1.0)
        pts.append((x, y))
    return pts


def approach_replay(scenario: Scenario, seed: int, legs: int = 6) -> list[float]:
    """Drive the fixed approach route once under one noise realization and
    return the 3-sigma boundary ellipse area at each leg-end checkpoint."""
    ss = np.random.SeedSequence(seed)
    world_child, meas_child = ss.spawn(2)
    shadowing = ShadowingField.from_scenario(
        scenario, int(world_child.generate_state(1, np.uint64)[0]))
    rng = np.random.default_rng(meas_child)
    spec = scenario.rescuers[0]
    sme = SmeState(id=spec.id, pose=spec.start, speed_mps=spec.speed_mps,
                   measuring=True)
    target = scenario.target.pose
    cfg = scenario.channel
    reports = []
    areas: list[float] = []
    for wp in approach_route(scenario, legs=legs):
        sme = set_route(sme, [wp])
        while sme.route is not None:
            sme, out = step(sme, cfg.period_s, target, cfg, scenario.rf,
                            scenario, rng, shadowing=shadowing)
            reports.extend(out)
        est = estimate_position(reports, scenario.extent, scenario.rf)
        boundary = derive_boundary(est, scenario.extent)
        areas.append(math.pi * boundary.semi_axes[0] * boundary.semi_axes[1])
    return areas
