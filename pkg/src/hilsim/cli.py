"""Command line entry points.

    hilsim serve  --map M --mode lockstep|realtime --port N --ws-port N
    hilsim run    --scenario FILE_OR_BUILTIN --out LOG
    hilsim replay --log LOG [--speed X]
    hilsim export --log LOG --sensors FILE --out DIR
    hilsim score  --responses CSV

Exit codes: 0 success, 2 config error, 3 runtime fault, 4 scenario
assertion failed.  ``HILSIM_PORT`` overrides the default TCP port.
"""

from __future__ import annotations

import argparse
import os
import sys
import time

from .presence import ResponsesError, score_presence
from .protocol import TCP_DEFAULT_PORT, WS_DEFAULT_PORT
from .recording import (
    RecordError,
    export_frames,
    parse_sensor_specs,
    read_log,
    replay,
    write_log,
)
from .roads import SceneError, parse_opendrive_subset, parse_scene
from .scenario import (
    BUILTIN_MAPS,
    ScenarioError,
    load_scenario,
    run_scenario,
)
from .server import Server
from .world import World

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3
EXIT_ASSERTION = 4


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="hilsim",
        description="Headless human-in-the-loop driving simulator",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_serve = sub.add_parser("serve", help="serve the world to clients")
    p_serve.add_argument("--map", default="crosswalk",
                         help="builtin map name, scene JSON or .xodr file")
    p_serve.add_argument("--mode", choices=("lockstep", "realtime"),
                         default="realtime")
    p_serve.add_argument("--port", type=int,
                         default=int(os.environ.get("HILSIM_PORT",
                                                    TCP_DEFAULT_PORT)))
    p_serve.add_argument("--ws-port", type=int, default=WS_DEFAULT_PORT)
    p_serve.add_argument("--static", default=None,
                         help="directory of web UI assets to serve")
    p_serve.add_argument("--scenario", default=None,
                         help="pre-populate the world from a scenario")

    p_run = sub.add_parser("run", help="run a scenario headless and record")
    p_run.add_argument("--scenario", required=True)
    p_run.add_argument("--out", required=True, help="output log path")

    p_replay = sub.add_parser("replay", help="replay a recorded log")
    p_replay.add_argument("--log", required=True)
    p_replay.add_argument("--speed", type=float, default=0.0,
                          help="realtime multiplier; 0 = as fast as possible")

    p_export = sub.add_parser("export", help="export sensor frames from a log")
    p_export.add_argument("--log", required=True)
    p_export.add_argument("--sensors", required=True,
                          help="sensor config JSON file")
    p_export.add_argument("--out", required=True, help="output directory")

    p_score = sub.add_parser("score", help="score a presence questionnaire")
    p_score.add_argument("--responses", required=True, help="responses CSV")

    args = parser.parse_args(argv)
    handler = {
        "serve": _cmd_serve,
        "run": _cmd_run,
        "replay": _cmd_replay,
        "export": _cmd_export,
        "score": _cmd_score,
    }[args.command]
    try:
        return handler(args)
    except (ScenarioError, SceneError, RecordError, ResponsesError,
            FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except KeyboardInterrupt:
        return EXIT_OK


def _load_map_arg(name: str):
    if name in BUILTIN_MAPS:
        return BUILTIN_MAPS[name]()
    with open(name, "r", encoding="utf-8") as fh:
        text = fh.read()
    if name.endswith(".xodr"):
        return parse_opendrive_subset(text)
    return parse_scene(text)


def _cmd_serve(args) -> int:
    if args.scenario:
        config = load_scenario(args.scenario)
        world = World(road_map=config.road_map, dt=config.dt, seed=config.seed,
                      traffic_params=config.traffic_params)
        for actor in config.actors:
            world.spawn_actor(actor.blueprint, actor.transform, **actor.options)
    else:
        world = World(road_map=_load_map_arg(args.map))
    server = Server(world, mode=args.mode, port=args.port,
                    ws_port=args.ws_port, static_dir=args.static)
    server.start()
    print(f"serving: tcp port {server.port}, ws port {server.ws_port} "
          f"({args.mode} mode)")
    try:
        while True:
            time.sleep(1.0)
    except KeyboardInterrupt:
        pass
    finally:
        server.stop()
    return EXIT_OK


def _cmd_run(args) -> int:
    config = load_scenario(args.scenario)
    try:
        log, summary = run_scenario(config)
    except ScenarioError:
        raise
    except Exception as exc:
        print(f"runtime fault: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    write_log(log, args.out)
    for line in summary.lines():
        print(line)
    print(f"log written: {args.out} ({len(log)} frames)")
    return _check_expectations(config.expect, summary)


def _check_expectations(expect: dict, summary) -> int:
    failures = []
    if expect.get("complete_stop") and summary.complete_stops == 0:
        failures.append("expected a complete stop, none happened")
    if expect.get("zero_collisions") and summary.collisions > 0:
        failures.append(f"expected zero collisions, got {summary.collisions}")
    if expect.get("collision") and summary.collisions == 0:
        failures.append("expected a collision, none happened")
    for failure in failures:
        print(f"assertion failed: {failure}", file=sys.stderr)
    return EXIT_ASSERTION if failures else EXIT_OK


def _cmd_replay(args) -> int:
    log = read_log(args.log)
    period = log.dt / args.speed if args.speed > 0 else 0.0
    for snapshot in replay(log):
        events = "; ".join(
            f"{e.kind}{list(e.actors)}" for e in snapshot.events
        )
        line = f"frame {snapshot.frame:6d} t={snapshot.sim_time:8.2f}s"
        if events:
            line += f"  events: {events}"
        print(line)
        if period:
            time.sleep(period)
    print(f"replayed {len(log)} frames")
    return EXIT_OK


def _cmd_export(args) -> int:
    log = read_log(args.log)
    with open(args.sensors, "r", encoding="utf-8") as fh:
        specs = parse_sensor_specs(fh.read())
    manifest = export_frames(log, specs, args.out)
    print(f"wrote {sum(len(m['files']) for m in manifest)} files to {args.out}")
    return EXIT_OK


def _cmd_score(args) -> int:
    with open(args.responses, "r", encoding="utf-8") as fh:
        report = score_presence(fh.read())
    print(report.render())
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
