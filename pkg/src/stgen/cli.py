"""Unified command-line interface.

    stgen server   <host> <sensor_port> <client_port> <sim_time_s>
    stgen launcher <core_host> <core_sensor_port> <sim_time_s> <spec>...
    stgen client   -l<log_dir> -s<core_host> -r<sensor_id> -p<client_port> [-t<sec>]
    stgen stats    --input <capture.ndjson> [--table|--json] [--bucket <seconds>]
    stgen serve    [--addr host:port] [--frontend dir]

Fleet specs use the grammar `type:count[:rate]`, e.g. `temp:30:1 gps:10`.
The REST service started by `serve` accepts the same parameters as the
subcommands and validates them with the same code.
"""

from __future__ import annotations

import argparse
import asyncio
import json
import logging
import sys

from . import __version__
from .analytics import (
    bucket_distribution,
    gps_points,
    load_capture,
    per_stream_delay_stats,
    read_ndjson,
    render_delay_table,
    windowed_stats,
)
from .runs import (
    ParamError,
    parse_client_params,
    parse_core_params,
    parse_fleet_params,
    run_client_component,
    run_core_component,
    run_fleet_component,
)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stgen", description="Lightweight IoT sensor-traffic testbed")
    parser.add_argument("--version", action="version", version=f"stgen {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("server", help="run the core (sink) node")
    p.add_argument("host")
    p.add_argument("sensor_port", type=int)
    p.add_argument("client_port", type=int)
    p.add_argument("sim_time", type=float)
    p.add_argument("--archive-dir", default="stgen_core_logs")
    p.add_argument("--flush-interval", type=float, default=5.0)
    p.add_argument("--ttl", type=float, default=60.0)
    p.add_argument("--capture-tcp", metavar="HOST:PORT",
                   help="also stream capture records to a TCP line sink")
    _impairment_flags(p)

    p = sub.add_parser("launcher", help="launch a sensor fleet")
    p.add_argument("core_host")
    p.add_argument("core_sensor_port", type=int)
    p.add_argument("sim_time", type=float)
    p.add_argument("specs", nargs="+", metavar="type:count[:rate]")
    p.add_argument("--jitter", action="store_true",
                   help="add +/-10%% send-time jitter")
    p.add_argument("--camera-bytes", type=int, default=4096)
    p.add_argument("--interval", action="append", default=[],
                   metavar="TYPE=SECONDS", help="override a base interval")
    _impairment_flags(p)

    p = sub.add_parser("client", help="subscribe to one sensor stream")
    p.add_argument("-l", dest="log_dir", required=True, metavar="LOG_DIR")
    p.add_argument("-s", dest="core_host", required=True, metavar="CORE_HOST")
    p.add_argument("-r", dest="sensor_id", required=True, metavar="SENSOR_ID")
    p.add_argument("-p", dest="client_port", required=True, type=int,
                   metavar="CLIENT_PORT")
    p.add_argument("-t", dest="sim_time", type=float, default=None,
                   metavar="SECONDS", help="receive window; default: run until "
                   "the stream is silent for 30s")

    p = sub.add_parser("stats", help="analyze a capture or archive file")
    p.add_argument("--input", required=True, metavar="CAPTURE.NDJSON")
    mode = p.add_mutually_exclusive_group()
    mode.add_argument("--table", action="store_true", help="per-stream delay table")
    mode.add_argument("--json", action="store_true", dest="as_json",
                      help="per-stream delay stats as JSON lines")
    p.add_argument("--bucket", type=float, metavar="SECONDS",
                   help="per-type packet distribution over time buckets")
    p.add_argument("--windows", type=float, metavar="SECONDS",
                   help="tumbling-window delay stats series")
    p.add_argument("--geo", action="store_true",
                   help="aggregate archived GPS fixes into lat/lon counts")

    p = sub.add_parser("serve", help="run the REST control plane")
    p.add_argument("--addr", metavar="HOST:PORT",
                   help="listen address (default: env STGEN_HTTP_ADDR or "
                   "127.0.0.1:8080)")
    p.add_argument("--frontend", metavar="DIR",
                   help="also serve a built web UI from this directory")
    return parser


def _impairment_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--bw", default="unbounded",
                   help="link bandwidth in bits/second, or 'unbounded'")
    p.add_argument("--loss", type=float, default=0.0, help="loss probability 0..1")
    p.add_argument("--latency", type=float, default=0.0, dest="latency_ms",
                   metavar="MS", help="base one-way latency in milliseconds")
    p.add_argument("--seed", type=int, default=0)


def _impairment_dict(args) -> dict:
    return {"bw": args.bw, "loss": args.loss, "latency_ms": args.latency_ms,
            "seed": args.seed}


def cmd_server(args) -> int:
    params = parse_core_params({
        "host": args.host, "sensor_port": args.sensor_port,
        "client_port": args.client_port, "sim_time": args.sim_time,
        "archive_dir": args.archive_dir, "flush_interval": args.flush_interval,
        "ttl": args.ttl, "capture_tcp": args.capture_tcp,
        **_impairment_dict(args),
    })
    report = asyncio.run(run_core_component(params, log=print))
    print(json.dumps(report, indent=2))
    return 0


def cmd_launcher(args) -> int:
    intervals = {}
    for item in args.interval:
        if "=" not in item:
            raise ParamError(f"--interval expects TYPE=SECONDS, got {item!r}")
        key, _, value = item.partition("=")
        intervals[key] = value
    params = parse_fleet_params({
        "core_host": args.core_host, "core_port": args.core_sensor_port,
        "sim_time": args.sim_time, "specs": args.specs, "jitter": args.jitter,
        "camera_bytes": args.camera_bytes, "intervals": intervals,
        **_impairment_dict(args),
    })
    report = asyncio.run(run_fleet_component(params, log=print))
    print(json.dumps(report, indent=2))
    return 0


def cmd_client(args) -> int:
    params = parse_client_params({
        "log_dir": args.log_dir, "core_host": args.core_host,
        "client_port": args.client_port, "sensor_id": args.sensor_id,
        "sim_time": args.sim_time,
    })
    report = asyncio.run(run_client_component(params, log=print))
    print(json.dumps(report, indent=2))
    return 0


def cmd_stats(args) -> int:
    if args.geo:
        for point in gps_points(read_ndjson(args.input)):
            print(json.dumps(point, separators=(",", ":")))
        return 0
    records = load_capture(args.input)
    if args.bucket:
        for bucket in bucket_distribution(records, args.bucket):
            print(json.dumps(bucket.to_json_obj(), separators=(",", ":")))
        return 0
    if args.windows:
        for start, stats in windowed_stats(records, args.windows):
            print(json.dumps({"window_start": start, **stats.to_json_obj()},
                             separators=(",", ":")))
        return 0
    stats = per_stream_delay_stats(records)
    if not stats:
        print("no frame-time deltas in input", file=sys.stderr)
        return 1
    if args.as_json:
        for sensor_id, s in stats.items():
            print(json.dumps({"sensor_id": sensor_id, **s.to_json_obj()},
                             separators=(",", ":")))
    else:
        rows = [(sensor_id, "-", s) for sensor_id, s in stats.items()]
        print(render_delay_table(rows))
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .webapi import create_app, http_addr_from_env

    if args.addr:
        host, _, port = args.addr.rpartition(":")
        host, port = host or "127.0.0.1", int(port)
    else:
        host, port = http_addr_from_env()
    app = create_app(frontend_dir=args.frontend)
    print(f"control plane on http://{host}:{port} "
          f"(docs at /swagger-ui/index.html)")
    uvicorn.run(app, host=host, port=port, log_level="warning")
    return 0


COMMANDS = {
    "server": cmd_server,
    "launcher": cmd_launcher,
    "client": cmd_client,
    "stats": cmd_stats,
    "serve": cmd_serve,
}


def cli_dispatch(argv: list[str]) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        return COMMANDS[args.command](args)
    except ParamError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except KeyboardInterrupt:
        return 130


def main() -> None:
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    sys.exit(cli_dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
