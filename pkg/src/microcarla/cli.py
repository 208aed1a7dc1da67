"""Command-line entry points: serve, bench, record, replay, report.

Every subcommand is scriptable (no prompts); logs go to stderr, data to the
paths given by flags. The MICROCARLA_TOWNS environment variable may name a
directory searched for town files before the bundled ones.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import bench as benchmod
from .dynamics import MetaCommand
from .learning import read_demo, record_pilot_demo, replay_demo
from .pilot import PilotConfig
from .town import TownError, TownMap, load_bundled, load_town
from .weather import WEATHER_NAMES

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_BAD_INPUT = 2


def log(msg: str) -> None:
    print(msg, file=sys.stderr)


def resolve_town(name: str) -> TownMap:
    """Resolve a town argument: a file path, a name in $MICROCARLA_TOWNS,
    or a bundled town ('a' / 'b')."""
    path = Path(name)
    if path.suffix == ".json" or path.exists():
        return load_town(path)
    towns_dir = os.environ.get("MICROCARLA_TOWNS")
    if towns_dir:
        for candidate in (Path(towns_dir) / f"{name}.json",
                          Path(towns_dir) / f"town_{name}.json"):
            if candidate.exists():
                return load_town(candidate)
    return load_bundled(name)


def _town_key(town_id: str) -> str:
    return town_id.removeprefix("town_")


# -- serve --------------------------------------------------------------------

def cmd_serve(args) -> int:
    from .server import ServerError, SimServer
    try:
        town = resolve_town(args.town)
    except TownError as exc:
        log(f"error: {exc}")
        return EXIT_BAD_INPUT
    pace_hz = 10.0 if args.pace == "10hz" else None
    ui_dir = args.ui
    if ui_dir is None and args.ws:
        default_ui = Path(__file__).resolve().parents[2] / "frontend"
        if (default_ui / "index.html").is_file():
            ui_dir = str(default_ui)
    try:
        server = SimServer(town, port=args.port, host=args.host,
                           pace_hz=pace_hz, demo_dir=args.demo_dir,
                           ui_dir=ui_dir if args.ws else None,
                           demo_seed=args.seed)
    except ServerError as exc:
        log(f"error: {exc}")
        return EXIT_BAD_INPUT
    if not args.ws:
        server.ui_dir = None
    total = sum(r.length for r in town.roads) / 1000.0
    log(f"town {town.id}: {len(town.roads)} roads ({total:.2f} km), "
        f"{len(town.spawn_player)} player spawns, "
        f"{len(town.lights)} lights")
    log(f"listening on {args.host}:{server.port} "
        f"(port {server.port + 1} reserved)"
        + (", websocket at /ws" if args.ws else "")
        + (f", paced at {pace_hz:.0f} Hz" if pace_hz else ""))
    server.serve_forever()
    return EXIT_OK


# -- bench --------------------------------------------------------------------

def cmd_bench(args) -> int:
    tasks = list(benchmod.TASK_KINDS) if args.all else args.task
    if not tasks:
        log("error: pass --task at least once, or --all")
        return EXIT_BAD_INPUT
    conditions = [c for c in benchmod.CONDITIONS
                  if (args.town is None or c[1] == args.town)
                  and (args.weathers is None or c[2] == args.weathers)]
    if not conditions:
        log("error: no benchmark conditions match the filters")
        return EXIT_BAD_INPUT
    pilot_config = PilotConfig.from_json(args.pilot_config) \
        if args.pilot_config else None

    def progress(cond, task, i, result):
        status = "ok" if result.success else "fail"
        log(f"[{cond}/{task}] episode {i}: {status} "
            f"t={result.completion_time_s:.1f}s d={result.distance_km:.2f}km "
            f"infractions={len(result.infractions)}")

    try:
        results = benchmod.run_grid(
            args.agent, tasks, conditions=conditions, seed=args.seed,
            episodes=args.episodes, jobs=args.jobs, pilot_config=pilot_config,
            progress=progress if args.verbose else None)
    except benchmod.BenchError as exc:
        log(f"error: {exc}")
        return EXIT_BAD_INPUT
    report = benchmod.aggregate(results)
    benchmod.write_reports(args.out, report, results)
    log(f"wrote reports to {args.out}")
    print(report.to_text(), end="")
    return EXIT_OK


# -- record / replay -----------------------------------------------------------

def cmd_record(args) -> int:
    if args.expert != "pilot":
        log("error: only --expert pilot is supported from the CLI; human "
            "demonstrations are recorded through the serve websocket UI")
        return EXIT_BAD_INPUT
    try:
        town = resolve_town(args.town)
    except TownError as exc:
        log(f"error: {exc}")
        return EXIT_BAD_INPUT
    if args.weather not in WEATHER_NAMES:
        log(f"error: unknown weather {args.weather!r}")
        return EXIT_BAD_INPUT
    meta = MetaCommand(num_vehicles=args.vehicles,
                       num_pedestrians=args.pedestrians,
                       weather=args.weather, seed_vehicles=args.seed,
                       seed_pedestrians=args.seed + 1,
                       player_spawn_index=args.spawn)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    try:
        ticks = record_pilot_demo(town, meta, out, seconds=args.minutes * 60.0,
                                  goal_seed=args.seed,
                                  perturb=not args.no_perturb,
                                  demo_seed=args.seed)
    except OSError as exc:
        log(f"error: {exc}")
        return EXIT_FAILURE
    log(f"recorded {ticks} samples to {out}")
    return EXIT_OK


def cmd_replay(args) -> int:
    try:
        header, _ = read_demo(args.demo)
    except (OSError, ValueError) as exc:
        log(f"error: {exc}")
        return EXIT_BAD_INPUT
    town_name = args.town or _town_key(header["town"])
    try:
        town = resolve_town(town_name)
    except TownError as exc:
        log(f"error: {exc}")
        return EXIT_BAD_INPUT
    ok, tick = replay_demo(args.demo, town)
    if ok:
        log("replay matched the recorded measurement stream")
        return EXIT_OK
    log(f"replay diverged at tick {tick}")
    return EXIT_FAILURE


# -- report -------------------------------------------------------------------

def cmd_report(args) -> int:
    path = Path(args.results) / "episodes.jsonl"
    if not path.exists():
        log(f"error: {path} not found")
        return EXIT_BAD_INPUT
    results: dict[tuple[str, str], list[benchmod.EpisodeResult]] = {}
    with path.open("r", encoding="utf-8") as fh:
        for line in fh:
            row = json.loads(line)
            config = benchmod.EpisodeConfig(**row["config"])
            result = benchmod.EpisodeResult(
                config=config, success=row["success"],
                completion_time_s=row["completion_time_s"],
                distance_km=row["distance_km"],
                infractions=[benchmod.InfractionEvent(**e)
                             for e in row["infractions"]],
                agent_fault=row["agent_fault"],
                reward_total=row["reward_total"])
            results.setdefault((config.task, row["condition"]), []).append(result)
    report = benchmod.aggregate(results)
    benchmod.write_reports(args.results, report, results)
    print(report.to_text(), end="")
    return EXIT_OK


# -- parser -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="microcarla",
        description="Deterministic top-down urban driving simulator, "
                    "benchmark, and demonstration recorder.")
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("serve", help="run the lockstep simulation server")
    p.add_argument("--town", default="a")
    p.add_argument("--port", type=int, default=2000)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--ws", action="store_true",
                   help="also accept websocket sessions on /ws and serve "
                        "the browser UI")
    p.add_argument("--pace", choices=["off", "10hz"], default="off")
    p.add_argument("--demo-dir", default="demos")
    p.add_argument("--ui", default=None, help="directory of UI static assets")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_serve)

    p = sub.add_parser("bench", help="run the goal-directed navigation benchmark")
    p.add_argument("--agent", default="pilot",
                   help="'pilot' or tcp:HOST:PORT for an external agent")
    p.add_argument("--task", action="append", choices=benchmod.TASK_KINDS,
                   default=None)
    p.add_argument("--all", action="store_true",
                   help="full 4-task x 4-condition grid")
    p.add_argument("--town", choices=["a", "b"], default=None,
                   help="restrict conditions to one town")
    p.add_argument("--weathers", choices=["training", "test"], default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--episodes", type=int, default=benchmod.SUITE_EPISODES)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", default="bench_results")
    p.add_argument("--pilot-config", default=None,
                   help="JSON file overriding controller gains and thresholds")
    p.add_argument("--verbose", action="store_true")
    p.set_defaults(fn=cmd_bench)

    p = sub.add_parser("record", help="record an expert demonstration file")
    p.add_argument("--town", default="a")
    p.add_argument("--expert", default="pilot")
    p.add_argument("--minutes", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--weather", default="Clear Midday")
    p.add_argument("--vehicles", type=int, default=0)
    p.add_argument("--pedestrians", type=int, default=0)
    p.add_argument("--spawn", type=int, default=0)
    p.add_argument("--no-perturb", action="store_true")
    p.add_argument("--out", default="demo.jsonl")
    p.set_defaults(fn=cmd_record)

    p = sub.add_parser("replay",
                       help="re-drive a demo and verify the measurement stream")
    p.add_argument("demo")
    p.add_argument("--town", default=None)
    p.set_defaults(fn=cmd_replay)

    p = sub.add_parser("report", help="regenerate reports from episodes.jsonl")
    p.add_argument("--results", default="bench_results")
    p.set_defaults(fn=cmd_report)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
