"""Command-line interface: run scenarios, serve telemetry, replay and export logs."""

from __future__ import annotations

import argparse
import json
import sys
import time

from .config import apply_overrides, load_config
from .errors import ConfigError, JetstackError
from .telemetry import export_csv, read_flight_log


def _add_set_flag(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="override a config key, e.g. --set run.seed=7 or --set reference.kind=square",
    )


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="jetstack", description="Simulated jet-VTOL flight stack")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a scenario headless and print the exit report")
    run.add_argument("config", help="scenario YAML file")
    run.add_argument("--log", default="flight.log", help="flight log output path")
    _add_set_flag(run)

    serve = sub.add_parser("serve", help="run a scenario with the telemetry/command service")
    serve.add_argument("config", help="scenario YAML file")
    serve.add_argument("--bind", default="127.0.0.1:9411", help="host:port to listen on")
    serve.add_argument("--log", default=None, help="flight log output path")
    serve.add_argument("--realtime-factor", type=float, default=None, help="sim seconds per wall second")
    _add_set_flag(serve)

    replay = sub.add_parser("replay", help="replay a flight log")
    replay.add_argument("log", help="flight log file")
    replay.add_argument("--bind", default=None, help="serve the recorded frames on host:port instead of stdout")
    replay.add_argument("--rate", type=float, default=0.0, help="frames per second when serving (0 = as fast as possible)")

    export = sub.add_parser("export", help="export a flight log to CSV")
    export.add_argument("log", help="flight log file")
    export.add_argument("--csv", required=True, help="CSV output path")
    return parser


def cmd_run(args) -> int:
    from .runtime import run_scenario

    report = run_scenario(args.config, log_path=args.log, overrides=args.overrides)
    print(json.dumps(report.to_dict(), indent=2))
    return 0


def cmd_serve(args) -> int:
    from .runtime import serve_scenario

    cfg = load_config(args.config)
    if args.overrides:
        cfg = apply_overrides(cfg, args.overrides)
    print(f"serving telemetry on {args.bind}", file=sys.stderr)
    report = serve_scenario(cfg, bind=args.bind, log_path=args.log, realtime_factor=args.realtime_factor)
    print(json.dumps(report.to_dict(), indent=2))
    return 0


def cmd_replay(args) -> int:
    header, frames = read_flight_log(args.log)
    if args.bind is None:
        print(json.dumps({"header": header, "frames": len(frames)}, indent=2))
        for frame in frames:
            print(frame.to_json())
        return 0
    import socket

    host, _, port = args.bind.partition(":")
    server = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    server.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
    server.bind((host, int(port)))
    server.listen(1)
    print(f"replaying {len(frames)} frames on {args.bind}; waiting for a subscriber", file=sys.stderr)
    conn, _ = server.accept()
    try:
        for frame in frames:
            conn.sendall(frame.to_json().encode("utf-8") + b"\n")
            if args.rate > 0.0:
                time.sleep(1.0 / args.rate)
    finally:
        conn.close()
        server.close()
    return 0


def cmd_export(args) -> int:
    _, frames = read_flight_log(args.log)
    export_csv(frames, args.csv)
    print(f"wrote {len(frames)} rows to {args.csv}")
    return 0


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    handlers = {"run": cmd_run, "serve": cmd_serve, "replay": cmd_replay, "export": cmd_export}
    try:
        return handlers[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except JetstackError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
