"""Command-line entry point.

Subcommands: run (one session, optionally exposing the live service socket),
batch (seeded Monte Carlo with CSV/summary output), validate (scenario lint),
export-contour (dump the final interpolated grid), and report (render figures
next to a batch directory's delimited output).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .harness import (PLACEMENTS, BatchSpec, records_csv, resolve_scenario,
                      run_batch)
from .orchestrator import SessionRunner, run_knock_baseline
from .service import DEFAULT_TOKENS, LcsService, persist_session


def _add_scenario_arg(p: argparse.ArgumentParser) -> None:
    p.add_argument("--scenario", default="testbed",
                   help="built-in name (testbed, office, minimal, freespace) "
                        "or path to a scenario JSON file")


def _parse_tokens(pairs: list[str]) -> dict[str, str]:
    tokens = dict(DEFAULT_TOKENS)
    for pair in pairs:
        role, sep, value = pair.partition("=")
        if not sep or role not in tokens:
            raise SystemExit(f"bad --token {pair!r}, expected role=value with "
                             f"role in {sorted(tokens)}")
        tokens[role] = value
    return tokens


def _print_outcome(out) -> None:
    print(f"result: {'success' if out.success else 'failure'} "
          f"({out.phase_final}) after {out.total_time_s:.1f} s")
    if out.building_time_s is not None:
        ok = {True: "correct", False: "wrong", None: ""}[out.building_correct]
        print(f"  building commit at {out.building_time_s:.1f} s {ok}".rstrip())
    if out.room_time_s is not None:
        print(f"  room commit at {out.room_time_s:.1f} s")
    for rid, d in sorted(out.distances_m.items()):
        print(f"  {rid}: {d:.0f} m traveled")
    print(f"  reports used: {out.n_reports}, retries: "
          f"{out.retries_building}+{out.retries_room}")


def cmd_run(args) -> int:
    scenario = resolve_scenario(args.scenario)
    if args.policy == "knock_baseline":
        out = run_knock_baseline(scenario, args.seed)
        _print_outcome(out)
        return 0 if out.success else 1
    runner = SessionRunner(scenario, policy=args.policy, seed=args.seed,
                           until=args.until, timeout_s=args.timeout)
    if args.interactive:
        pace = 0.0
        if args.time_scale > 0.0:
            pace = scenario.channel.period_s / args.time_scale
        service = LcsService(runner, host=args.host, port=args.port,
                             tokens=_parse_tokens(args.token),
                             out_dir=args.out, pace_s=pace)
        host, port = service.start()
        print(f"service listening on {host}:{port} "
              f"(roles: {', '.join(sorted(DEFAULT_TOKENS))})")
        out = service.serve(autostart=not args.wait_console)
    else:
        published = []
        if args.out is not None:
            runner.publish = published.append
        out = runner.run()
        if args.out is not None:
            where = persist_session(out, published, args.out)
            print(f"session record in {where}")
    _print_outcome(out)
    return 0 if out.success else 1


def cmd_batch(args) -> int:
    spec = BatchSpec(scenario=args.scenario, policy=args.policy,
                     n_trials=args.trials, seed_base=args.seed,
                     deadline_s=args.deadline, placement=args.placement,
                     workers=args.workers, until=args.until)
    summary, records = run_batch(spec, out_dir=args.out)
    if args.out is None:
        sys.stdout.write(records_csv(records).decode())
    print(f"success rate within {summary.deadline_s:.0f} s: "
          f"{summary.success_rate_within_deadline:.3f} "
          f"({summary.n_success}/{summary.n_trials})", file=sys.stderr)
    if summary.mean_time_s is not None:
        print(f"mean {summary.mean_time_s:.1f} s, p90 {summary.p90_time_s:.1f} s",
              file=sys.stderr)
    print(f"fingerprint {summary.fingerprint}", file=sys.stderr)
    if args.figures:
        if args.out is None:
            print("--figures needs --out", file=sys.stderr)
            return 2
        from .report import render_batch_dir
        for path in render_batch_dir(args.out):
            print(f"wrote {path}", file=sys.stderr)
    return 0


def cmd_validate(args) -> int:
    try:
        scenario = resolve_scenario(args.scenario)
    except Exception as e:
        print(f"INVALID: {e}", file=sys.stderr)
        return 1
    n_rooms = sum(len(f.rooms) for b in scenario.buildings for f in b.floors)
    t = scenario.target.pose
    where = "outdoors" if t.building_index is None else \
        f"building {t.building_index} floor {t.floor_index}"
    print(f"OK {scenario.name}: extent {scenario.extent}, "
          f"{len(scenario.buildings)} buildings, {n_rooms} rooms, "
          f"{len(scenario.rescuers)} rescuers, target {where}")
    return 0


def cmd_export_contour(args) -> int:
    from .report import contour_csv, render_contour
    scenario = resolve_scenario(args.scenario)
    runner = SessionRunner(scenario, policy="helps", seed=args.seed,
                           until=args.until)
    runner.run()
    cmap = None
    if args.floor is not None:
        bi = runner.committed_building
        if bi is not None:
            cmap = runner.floor_maps.get((bi, args.floor))
        if cmap is None:
            print(f"no floor {args.floor} map (committed building: {bi})",
                  file=sys.stderr)
            return 1
    else:
        cmap = runner.outdoor_map
        if cmap is None:
            print("session produced no outdoor contour", file=sys.stderr)
            return 1
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_bytes(contour_csv(cmap))
    print(f"wrote {out} ({cmap.values.shape[1]}x{cmap.values.shape[0]} cells, "
          f"peak {cmap.peak_dbm:.1f} dBm)")
    if args.png:
        print(f"wrote {render_contour(out)}")
    return 0


def cmd_report(args) -> int:
    from .report import render_batch_dir
    try:
        for path in render_batch_dir(args.dir):
            print(f"wrote {path}")
    except FileNotFoundError as e:
        print(str(e), file=sys.stderr)
        return 1
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sigseek",
                                 description="uplink-signal caller search simulator")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run a single search session")
    _add_scenario_arg(p)
    p.add_argument("--policy", default="helps", choices=["helps", "knock_baseline"])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--until", default="found", choices=["found", "building_commit"])
    p.add_argument("--timeout", type=float, default=None,
                   help="abort the session after this many simulated seconds")
    p.add_argument("--out", default=None,
                   help="directory for the per-session record")
    p.add_argument("--interactive", action="store_true",
                   help="expose the live service socket for consoles")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=0)
    p.add_argument("--token", action="append", default=[], metavar="ROLE=VALUE",
                   help="override a handshake token")
    p.add_argument("--time-scale", type=float, default=1.0,
                   help="simulated seconds per wall second (0 = free run)")
    p.add_argument("--wait-console", action="store_true",
                   help="hold the session until a console connects and asks")
    p.set_defaults(fn=cmd_run)

    p = sub.add_parser("batch", help="run a seeded Monte Carlo batch")
    _add_scenario_arg(p)
    p.add_argument("--policy", default="helps", choices=["helps", "knock_baseline"])
    p.add_argument("--trials", type=int, default=200)
    p.add_argument("--seed", type=int, default=0, help="base seed; trial i uses base+i")
    p.add_argument("--deadline", type=float, default=180.0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--placement", default="fixed", choices=list(PLACEMENTS))
    p.add_argument("--until", default="found", choices=["found", "building_commit"])
    p.add_argument("--out", default=None, help="directory for trials.csv and summary.json")
    p.add_argument("--figures", action="store_true",
                   help="render figures alongside the CSV (needs --out)")
    p.set_defaults(fn=cmd_batch)

    p = sub.add_parser("validate", help="lint a scenario document")
    _add_scenario_arg(p)
    p.set_defaults(fn=cmd_validate)

    p = sub.add_parser("export-contour", help="dump the final contour grid")
    _add_scenario_arg(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--until", default="found", choices=["found", "building_commit"])
    p.add_argument("--floor", type=int, default=None,
                   help="dump this floor of the committed building instead of "
                        "the outdoor grid")
    p.add_argument("--out", default="contour.csv")
    p.add_argument("--png", action="store_true", help="also render a heat map")
    p.set_defaults(fn=cmd_export_contour)

    p = sub.add_parser("report", help="render figures for a batch directory")
    p.add_argument("dir")
    p.set_defaults(fn=cmd_report)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    raise SystemExit(main())
