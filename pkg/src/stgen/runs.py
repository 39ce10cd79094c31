"""Managed runs shared by the CLI and the REST control plane.

Both front ends validate parameters with the same functions and drive
the same component coroutines, so a REST-started run behaves exactly
like its CLI-started twin. Each run owns a ring buffer of log lines
that the API can stream incrementally.
"""

from __future__ import annotations

import asyncio
import dataclasses
import secrets
import time
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable

from .client import ClientConfig, subscribe_and_receive
from .core import DEFAULT_FLUSH_INTERVAL, DEFAULT_TTL, CoreNode
from .impairment import ImpairmentConfig
from .sensors import (
    DEFAULT_CAMERA_BYTES,
    Fleet,
    FleetResourceError,
    SensorSpec,
    SensorType,
    SpecError,
    parse_sensor_spec,
)

# Range rules shared with client-side form validation.
VALIDATION_RULES = {
    "port": {"min": 1, "max": 65535},
    "count": {"min": 1},
    "rate_percent": {"min": 1, "max": 100},
    "sim_time": {"exclusive_min": 0},
    "loss_prob": {"min": 0.0, "max": 1.0},
    "latency_ms": {"min": 0.0},
    "camera_bytes": {"min": 1, "max": 59000},
}


class ParamError(ValueError):
    """Invalid run parameters; message is shared verbatim by CLI and REST."""


def _require(d: dict, key: str):
    if key not in d or d[key] in (None, ""):
        raise ParamError(f"missing required parameter: {key}")
    return d[key]


def _as_int(value, name: str) -> int:
    try:
        out = int(value)
    except (TypeError, ValueError):
        raise ParamError(f"{name} must be an integer, got {value!r}") from None
    if isinstance(value, float) and value != out:
        raise ParamError(f"{name} must be an integer, got {value!r}")
    return out


def _as_float(value, name: str) -> float:
    try:
        return float(value)
    except (TypeError, ValueError):
        raise ParamError(f"{name} must be a number, got {value!r}") from None


def _port(value, name: str) -> int:
    port = _as_int(value, name)
    if not 1 <= port <= 65535:
        raise ParamError(f"{name} out of range 1-65535: {port}")
    return port


def _sim_time(value, name: str = "sim_time") -> float:
    sim_time = _as_float(value, name)
    if sim_time <= 0:
        raise ParamError(f"{name} must be positive, got {value!r}")
    return sim_time


def parse_impairment(d: dict) -> ImpairmentConfig | None:
    bw = d.get("bw")
    loss = d.get("loss")
    latency_ms = d.get("latency_ms")
    seed = d.get("seed", 0)
    if bw in (None, "", "unbounded") and not loss and not latency_ms:
        return None
    bandwidth = None
    if bw not in (None, "", "unbounded"):
        bandwidth = _as_float(bw, "bw")
        if bandwidth <= 0:
            raise ParamError(f"bw must be positive bits/second, got {bw!r}")
    loss_prob = _as_float(loss, "loss") if loss else 0.0
    if not 0.0 <= loss_prob <= 1.0:
        raise ParamError(f"loss out of range 0-1: {loss!r}")
    latency = _as_float(latency_ms, "latency_ms") / 1000.0 if latency_ms else 0.0
    if latency < 0:
        raise ParamError(f"latency_ms must be >= 0, got {latency_ms!r}")
    return ImpairmentConfig(bandwidth_bps=bandwidth, loss_prob=loss_prob,
                            base_latency=latency, seed=_as_int(seed, "seed"))


@dataclass
class CoreParams:
    host: str
    sensor_port: int
    client_port: int
    sim_time: float
    archive_dir: str = "stgen_core_logs"
    flush_interval: float = DEFAULT_FLUSH_INTERVAL
    ttl: float = DEFAULT_TTL
    capture_tcp: tuple[str, int] | None = None
    impairment: ImpairmentConfig | None = None


def parse_core_params(d: dict) -> CoreParams:
    host = str(_require(d, "host"))
    sensor_port = _port(_require(d, "sensor_port"), "sensor_port")
    client_port = _port(_require(d, "client_port"), "client_port")
    if sensor_port == client_port:
        raise ParamError("sensor_port and client_port must differ")
    capture_tcp = None
    if d.get("capture_tcp"):
        target = str(d["capture_tcp"])
        if ":" not in target:
            raise ParamError(f"capture_tcp must be host:port, got {target!r}")
        tcp_host, tcp_port = target.rsplit(":", 1)
        capture_tcp = (tcp_host, _port(tcp_port, "capture_tcp port"))
    return CoreParams(
        host=host, sensor_port=sensor_port, client_port=client_port,
        sim_time=_sim_time(_require(d, "sim_time")),
        archive_dir=str(d.get("archive_dir") or "stgen_core_logs"),
        flush_interval=_as_float(d.get("flush_interval", DEFAULT_FLUSH_INTERVAL),
                                 "flush_interval"),
        ttl=_as_float(d.get("ttl", DEFAULT_TTL), "ttl"),
        capture_tcp=capture_tcp,
        impairment=parse_impairment(d),
    )


@dataclass
class FleetParams:
    core_host: str
    core_port: int
    sim_time: float
    specs: list[SensorSpec]
    seed: int = 0
    jitter: bool = False
    camera_bytes: int = DEFAULT_CAMERA_BYTES
    intervals: dict[SensorType, float] = field(default_factory=dict)
    impairment: ImpairmentConfig | None = None


def parse_fleet_params(d: dict) -> FleetParams:
    tokens = _require(d, "specs")
    if isinstance(tokens, str):
        tokens = tokens.split()
    if not tokens:
        raise ParamError("missing required parameter: specs")
    try:
        specs = [parse_sensor_spec(str(t)) for t in tokens]
    except SpecError as e:
        raise ParamError(str(e)) from None
    camera_bytes = _as_int(d.get("camera_bytes", DEFAULT_CAMERA_BYTES), "camera_bytes")
    if not 1 <= camera_bytes <= 59000:
        raise ParamError(f"camera_bytes out of range 1-59000: {camera_bytes}")
    intervals: dict[SensorType, float] = {}
    for key, value in (d.get("intervals") or {}).items():
        try:
            sensor_type = SensorType(key)
        except ValueError:
            raise ParamError(f"unknown sensor type in intervals: {key!r}") from None
        interval = _as_float(value, f"interval[{key}]")
        if interval <= 0:
            raise ParamError(f"interval[{key}] must be positive")
        intervals[sensor_type] = interval
    return FleetParams(
        core_host=str(_require(d, "core_host")),
        core_port=_port(_require(d, "core_port"), "core_port"),
        sim_time=_sim_time(_require(d, "sim_time")),
        specs=specs,
        seed=_as_int(d.get("seed", 0), "seed"),
        jitter=bool(d.get("jitter", False)),
        camera_bytes=camera_bytes,
        intervals=intervals,
        impairment=parse_impairment(d),
    )


@dataclass
class ClientParams:
    log_dir: str
    core_host: str
    client_port: int
    sensor_id: str
    sim_time: float | None = None


def parse_client_params(d: dict) -> ClientParams:
    sim_time = d.get("sim_time")
    return ClientParams(
        log_dir=str(_require(d, "log_dir")),
        core_host=str(_require(d, "core_host")),
        client_port=_port(_require(d, "client_port"), "client_port"),
        sensor_id=str(_require(d, "sensor_id")),
        sim_time=None if sim_time in (None, "") else _sim_time(sim_time),
    )


PARSERS = {
    "core": parse_core_params,
    "fleet": parse_fleet_params,
    "client": parse_client_params,
}


# --- component runners (shared by CLI and REST) ---------------------------------


async def run_core_component(p: CoreParams, log, on_running=None,
                             stop: asyncio.Event | None = None) -> dict:
    core = CoreNode(p.host, p.sensor_port, p.client_port, p.sim_time,
                    archive_dir=p.archive_dir, flush_interval=p.flush_interval,
                    ttl=p.ttl, impairment=p.impairment,
                    capture_tcp=p.capture_tcp, log=log)
    task = asyncio.create_task(core.run())
    await core.started.wait()
    if on_running:
        on_running()
    watcher = None
    if stop is not None:
        async def _watch():
            await stop.wait()
            core.stop()
        watcher = asyncio.create_task(_watch())
    try:
        report = await task
    finally:
        if watcher:
            watcher.cancel()
    return dataclasses.asdict(report)


async def run_fleet_component(p: FleetParams, log, on_running=None,
                              stop: asyncio.Event | None = None) -> dict:
    fleet = Fleet(p.specs, (p.core_host, p.core_port), p.sim_time, seed=p.seed,
                  intervals=p.intervals, impairment=p.impairment,
                  jitter=p.jitter, camera_bytes=p.camera_bytes, log=log)
    fleet_report = await fleet.start()
    if on_running:
        on_running()
    watcher = None
    if stop is not None:
        async def _watch():
            await stop.wait()
            fleet.cancel()
        watcher = asyncio.create_task(_watch())
    try:
        reports = await fleet.join()
    except asyncio.CancelledError:
        reports = []
    finally:
        if watcher:
            watcher.cancel()
    return {
        "node_count": fleet_report.node_count,
        "startup_duration": fleet_report.startup_duration,
        "node_ids": fleet_report.node_ids,
        "packets_sent": sum(r.packets_sent for r in reports),
        "send_failures": sum(r.send_failures for r in reports),
    }


async def run_client_component(p: ClientParams, log, on_running=None,
                               stop: asyncio.Event | None = None) -> dict:
    if on_running:
        on_running()
    report = await subscribe_and_receive(ClientConfig(
        log_dir=p.log_dir, core_host=p.core_host,
        core_client_port=p.client_port, sensor_id=p.sensor_id,
        sim_time=p.sim_time), log=log, stop=stop)
    return dataclasses.asdict(report)


RUNNERS = {
    "core": (parse_core_params, run_core_component),
    "fleet": (parse_fleet_params, run_fleet_component),
    "client": (parse_client_params, run_client_component),
}


# --- run table --------------------------------------------------------------------


class RunState(str, Enum):
    STARTING = "starting"
    RUNNING = "running"
    FINISHED = "finished"
    FAILED = "failed"

    @property
    def terminal(self) -> bool:
        return self in (RunState.FINISHED, RunState.FAILED)


class LogBuffer:
    """Bounded per-run log ring; readers that fall behind see a gap count."""

    def __init__(self, maxlen: int = 2000):
        self.maxlen = maxlen
        self._lines: deque[str] = deque(maxlen=maxlen)
        self._total = 0

    def append(self, line: str) -> None:
        stamp = time.strftime("%H:%M:%S", time.localtime())
        ms = int(time.time() * 1000) % 1000
        self._lines.append(f"{stamp}.{ms:03d} {line}")
        self._total += 1

    @property
    def first_index(self) -> int:
        return self._total - len(self._lines)

    def since(self, cursor: int) -> tuple[int, list[str], int]:
        """Lines at or after `cursor`; returns (dropped_count, lines, next_cursor)."""
        gap = max(0, self.first_index - cursor)
        start = max(cursor, self.first_index)
        lines = list(self._lines)[start - self.first_index:]
        return gap, lines, self._total


@dataclass
class Run:
    run_id: str
    role: str
    params: dict
    state: RunState = RunState.STARTING
    started_at: float = field(default_factory=time.time)
    finished_at: float | None = None
    error: str | None = None
    result: dict | None = None
    log: LogBuffer = field(default_factory=LogBuffer)
    stop_event: asyncio.Event = field(default_factory=asyncio.Event)
    task: asyncio.Task | None = None
    started_signal: asyncio.Event = field(default_factory=asyncio.Event)

    def summary(self) -> dict:
        return {
            "run_id": self.run_id,
            "role": self.role,
            "state": self.state.value,
            "started_at": self.started_at,
            "finished_at": self.finished_at,
            "error": self.error,
        }

    def detail(self) -> dict:
        out = self.summary()
        out["params"] = self.params
        out["result"] = self.result
        return out


class ResourceExhausted(RuntimeError):
    """Run could not start because a system resource ran out."""


class RunManager:
    """Shared run table; mutations happen on the event loop thread only."""

    def __init__(self):
        self.runs: dict[str, Run] = {}
        self.started_at = time.time()

    def get(self, run_id: str) -> Run | None:
        return self.runs.get(run_id)

    def list_runs(self) -> list[Run]:
        return sorted(self.runs.values(), key=lambda r: r.started_at)

    async def start(self, role: str, params: dict) -> Run:
        """Validate and launch; returns once the run leaves STARTING."""
        if role not in RUNNERS:
            raise ParamError(f"unknown role {role!r}; expected core, fleet, or client")
        parser, runner = RUNNERS[role]
        parsed = parser(params)  # raises ParamError with the CLI message
        run = Run(secrets.token_hex(4), role, params)
        self.runs[run.run_id] = run
        run.task = asyncio.create_task(self._execute(run, runner, parsed))
        await run.started_signal.wait()
        if run.state == RunState.FAILED and run.error and "resource" in run.error.lower():
            raise ResourceExhausted(run.error)
        return run

    async def _execute(self, run: Run, runner, parsed) -> None:
        def on_running():
            run.state = RunState.RUNNING
            run.started_signal.set()

        sim_time = getattr(parsed, "sim_time", None)
        guard = sim_time + 10.0 if sim_time else None
        try:
            coro = runner(parsed, run.log.append, on_running, run.stop_event)
            run.result = await asyncio.wait_for(coro, timeout=guard)
            run.state = RunState.FINISHED
        except FleetResourceError as e:
            run.error = f"resource exhaustion: {e} (started {len(e.started)} nodes)"
            run.state = RunState.FAILED
        except asyncio.TimeoutError:
            run.error = f"run exceeded sim_time + 10s guard ({guard:.0f}s)"
            run.state = RunState.FAILED
        except Exception as e:
            run.error = str(e)
            run.state = RunState.FAILED
        finally:
            run.finished_at = time.time()
            run.log.append(f"run {run.run_id} {run.state.value}"
                           + (f": {run.error}" if run.error else ""))
            run.started_signal.set()

    async def stop(self, run_id: str) -> Run | None:
        run = self.runs.get(run_id)
        if run is None:
            return None
        run.stop_event.set()
        return run

    def status(self) -> dict:
        counts: dict[str, int] = {}
        for run in self.runs.values():
            counts[run.state.value] = counts.get(run.state.value, 0) + 1
        return {
            "uptime_s": time.time() - self.started_at,
            "runs": counts,
            "total_runs": len(self.runs),
        }
