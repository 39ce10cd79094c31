"""Emulated sensor fleets.

A fleet specification is a list of `type:count[:rate]` tokens. Each
sensor becomes one independent asyncio task that publishes a reading
over UDP every adjusted interval until the simulation time elapses.
The rate percent P in [1, 100] stretches the per-type base interval I
to I' = I * 100 / P without changing the task's total runtime, which
always equals the simulation time.

Sensors are deliberately cheap: one small UDP socket, one generator
object, and one timer per node, so fleets of thousands fit in a single
process.
"""

from __future__ import annotations

import asyncio
import hashlib
import logging
import random
import socket
import time
from dataclasses import dataclass, field
from enum import Enum

from .impairment import ImpairedSender, ImpairmentConfig
from .packets import data_packet, encode_packet

logger = logging.getLogger("stgen.sensors")


class SensorType(str, Enum):
    TEMP = "temp"
    HUMIDITY = "humidity"
    GPS = "gps"
    CAMERA = "camera"
    SWITCH = "switch"


# Per-type base transmission interval I, seconds. Overridable per run.
DEFAULT_INTERVALS: dict[SensorType, float] = {
    SensorType.TEMP: 1.0,
    SensorType.HUMIDITY: 1.0,
    SensorType.GPS: 0.5,
    SensorType.SWITCH: 5.0,
    SensorType.CAMERA: 2.0,
}

DEFAULT_CAMERA_BYTES = 4096


class SpecError(ValueError):
    """A fleet specification token could not be parsed."""


@dataclass(frozen=True)
class SensorSpec:
    sensor_type: SensorType
    count: int
    rate_percent: int = 100


def parse_sensor_spec(token: str) -> SensorSpec:
    """Parse one `type:count[:rate]` token; rate defaults to 100."""
    parts = token.split(":")
    if len(parts) not in (2, 3):
        raise SpecError(f"bad sensor spec {token!r}: expected type:count[:rate]")
    try:
        sensor_type = SensorType(parts[0])
    except ValueError:
        raise SpecError(f"bad sensor spec {token!r}: unknown sensor type {parts[0]!r}") from None
    try:
        count = int(parts[1])
    except ValueError:
        raise SpecError(f"bad sensor spec {token!r}: count is not an integer") from None
    if count < 1:
        raise SpecError(f"bad sensor spec {token!r}: count must be >= 1")
    rate = 100
    if len(parts) == 3:
        try:
            rate = int(parts[2])
        except ValueError:
            raise SpecError(f"bad sensor spec {token!r}: rate is not an integer") from None
        if not 1 <= rate <= 100:
            raise SpecError(f"bad sensor spec {token!r}: rate_percent out of range")
    return SensorSpec(sensor_type, count, rate)


def parse_specs(tokens: list[str]) -> list[SensorSpec]:
    specs = [parse_sensor_spec(t) for t in tokens]
    if not specs:
        raise SpecError("at least one sensor spec is required")
    return specs


def adjusted_interval(interval: float, rate_percent: int) -> float:
    """Stretch a base interval by the rate percent: I' = I * 100 / P."""
    if interval <= 0:
        raise ValueError(f"interval must be positive, got {interval}")
    if not 1 <= rate_percent <= 100:
        raise ValueError(f"rate_percent out of range: {rate_percent}")
    return interval * 100.0 / rate_percent


# --- reading generators -------------------------------------------------------


class ReadingGenerator:
    """Deterministic per-sensor value source; same seed, same sequence."""

    def __init__(self, seed: int):
        self.rng = random.Random(seed)

    def next_payload(self) -> dict:
        raise NotImplementedError


class TempGenerator(ReadingGenerator):
    """Bounded random walk in [-10, 45] degrees C, step at most 0.5."""

    LOW, HIGH, STEP = -10.0, 45.0, 0.5

    def __init__(self, seed: int, start: float | None = None):
        super().__init__(seed)
        self.value = self.rng.uniform(10.0, 30.0) if start is None else start

    def next_payload(self) -> dict:
        self.value += self.rng.uniform(-self.STEP, self.STEP)
        self.value = min(self.HIGH, max(self.LOW, self.value))
        return {"temperature_c": round(self.value, 3)}


class HumidityGenerator(ReadingGenerator):
    """Bounded random walk in [0, 100] percent relative humidity."""

    LOW, HIGH, STEP = 0.0, 100.0, 2.0

    def __init__(self, seed: int, start: float | None = None):
        super().__init__(seed)
        self.value = self.rng.uniform(30.0, 70.0) if start is None else start

    def next_payload(self) -> dict:
        self.value += self.rng.uniform(-self.STEP, self.STEP)
        self.value = min(self.HIGH, max(self.LOW, self.value))
        return {"humidity_pct": round(self.value, 3)}


class GpsGenerator(ReadingGenerator):
    """Latitude/longitude walk, step at most 0.0005 degrees per axis."""

    STEP = 0.0005

    def __init__(self, seed: int, start: tuple[float, float] | None = None):
        super().__init__(seed)
        if start is None:
            start = (self.rng.uniform(-60.0, 60.0), self.rng.uniform(-180.0, 180.0))
        self.lat, self.lon = start

    def next_payload(self) -> dict:
        self.lat = min(90.0, max(-90.0, self.lat + self.rng.uniform(-self.STEP, self.STEP)))
        self.lon = min(180.0, max(-180.0, self.lon + self.rng.uniform(-self.STEP, self.STEP)))
        return {"lat": round(self.lat, 6), "lon": round(self.lon, 6)}


class CameraGenerator(ReadingGenerator):
    """Opaque frame bytes; only size and rate matter to the testbed."""

    def __init__(self, seed: int, frame_bytes: int = DEFAULT_CAMERA_BYTES,
                 width: int = 640, height: int = 480):
        super().__init__(seed)
        self.frame_bytes = frame_bytes
        self.width = width
        self.height = height

    def next_payload(self) -> dict:
        return {
            "data": self.rng.randbytes(self.frame_bytes),
            "width": self.width,
            "height": self.height,
        }


class SwitchGenerator(ReadingGenerator):
    """On/off state toggling with a fixed probability per reading."""

    def __init__(self, seed: int, toggle_prob: float = 0.1, start: bool = False):
        super().__init__(seed)
        self.toggle_prob = toggle_prob
        self.on = start

    def next_payload(self) -> dict:
        if self.rng.random() < self.toggle_prob:
            self.on = not self.on
        return {"on": self.on}


_GENERATORS = {
    SensorType.TEMP: TempGenerator,
    SensorType.HUMIDITY: HumidityGenerator,
    SensorType.GPS: GpsGenerator,
    SensorType.CAMERA: CameraGenerator,
    SensorType.SWITCH: SwitchGenerator,
}


def make_generator(sensor_type: SensorType, seed: int, *,
                   camera_bytes: int = DEFAULT_CAMERA_BYTES) -> ReadingGenerator:
    if sensor_type == SensorType.CAMERA:
        return CameraGenerator(seed, frame_bytes=camera_bytes)
    return _GENERATORS[sensor_type](seed)


def derive_seed(base_seed: int, name: str) -> int:
    """Stable per-sensor seed from the fleet seed and the sensor id."""
    digest = hashlib.blake2b(f"{base_seed}:{name}".encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little")


# --- sensor node loop ----------------------------------------------------------


@dataclass
class SensorReport:
    sensor_id: str
    packets_sent: int
    send_failures: int
    duration: float


class SensorNode:
    """One emulated sensor: a timed publish loop over its own UDP socket."""

    def __init__(self, sensor_id: str, sensor_type: SensorType,
                 core_addr: tuple[str, int], interval: float, sim_time: float,
                 seed: int, *, impairment: ImpairmentConfig | None = None,
                 jitter: bool = False, camera_bytes: int = DEFAULT_CAMERA_BYTES):
        self.sensor_id = sensor_id
        self.sensor_type = sensor_type
        self.core_addr = core_addr
        self.interval = interval
        self.sim_time = sim_time
        self.generator = make_generator(sensor_type, seed, camera_bytes=camera_bytes)
        self.jitter_rng = random.Random(seed ^ 0x5EED) if jitter else None
        self.impairment = impairment
        self.packets_sent = 0
        self.send_failures = 0
        try:
            self.sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        except OSError as e:
            raise FleetResourceError(f"socket for {sensor_id}: {e}") from e
        self.sock.setblocking(False)

    async def run(self, ready: asyncio.Event | None = None) -> SensorReport:
        loop = asyncio.get_running_loop()
        sender = None
        if self.impairment is not None and not self.impairment.is_noop():
            sender = ImpairedSender(self.impairment, self._send_raw, key=self.sensor_id)
        start = loop.time()
        if ready is not None:
            ready.set()
        k = 0
        try:
            while True:
                t = k * self.interval
                if self.jitter_rng is not None and k > 0:
                    t += self.jitter_rng.uniform(-0.1, 0.1) * self.interval
                if t >= self.sim_time:
                    break
                delay = start + t - loop.time()
                if delay > 0:
                    await asyncio.sleep(delay)
                self._publish(sender)
                k += 1
            tail = start + self.sim_time - loop.time()
            if tail > 0:
                await asyncio.sleep(tail)
        finally:
            self.sock.close()
        return SensorReport(self.sensor_id, self.packets_sent,
                            self.send_failures, loop.time() - start)

    def _publish(self, sender: ImpairedSender | None) -> None:
        payload = self.generator.next_payload()
        pkt = data_packet(self.sensor_id, self.sensor_type.value,
                          self.packets_sent + 1, int(time.time() * 1000), payload)
        data = encode_packet(pkt)
        self.packets_sent += 1
        if sender is not None:
            sender.send(data)
        else:
            self._send_raw(data)

    def _send_raw(self, data: bytes) -> None:
        try:
            self.sock.sendto(data, self.core_addr)
        except OSError:
            self.send_failures += 1


# --- fleet launcher --------------------------------------------------------------


class FleetResourceError(RuntimeError):
    """Could not start every node; carries the ids that did start."""

    def __init__(self, message: str, started: list[str] | None = None):
        super().__init__(message)
        self.started = started or []


@dataclass
class FleetReport:
    node_count: int
    startup_duration: float
    node_ids: list[str] = field(default_factory=list)


def assign_ids(specs: list[SensorSpec]) -> list[tuple[str, SensorSpec]]:
    """Assign `type_1..type_n` ids, concatenating duplicate type tokens."""
    counters: dict[SensorType, int] = {}
    out = []
    for spec in specs:
        for _ in range(spec.count):
            counters[spec.sensor_type] = counters.get(spec.sensor_type, 0) + 1
            out.append((f"{spec.sensor_type.value}_{counters[spec.sensor_type]}", spec))
    return out


class Fleet:
    """Spawns one independent timed loop per sensor and aggregates reports."""

    def __init__(self, specs: list[SensorSpec], core_addr: tuple[str, int],
                 sim_time: float, *, seed: int = 0,
                 intervals: dict[SensorType, float] | None = None,
                 impairment: ImpairmentConfig | None = None,
                 jitter: bool = False, camera_bytes: int = DEFAULT_CAMERA_BYTES,
                 log=None):
        if sum(s.count for s in specs) < 1:
            raise SpecError("fleet needs at least one sensor")
        self.specs = specs
        self.core_addr = core_addr
        self.sim_time = sim_time
        self.seed = seed
        self.intervals = dict(DEFAULT_INTERVALS)
        if intervals:
            self.intervals.update(intervals)
        self.impairment = impairment
        self.jitter = jitter
        self.camera_bytes = camera_bytes
        self.log = log or logger.info
        self._tasks: list[asyncio.Task] = []
        self._reports: asyncio.Queue[SensorReport] = asyncio.Queue()
        self.report: FleetReport | None = None

    async def start(self) -> FleetReport:
        """Create every node and wait until all loops are ready to send."""
        loop = asyncio.get_running_loop()
        t0 = loop.time()
        nodes: list[SensorNode] = []
        started_ids: list[str] = []
        try:
            for sensor_id, spec in assign_ids(self.specs):
                node = SensorNode(
                    sensor_id, spec.sensor_type, self.core_addr,
                    interval=adjusted_interval(self.intervals[spec.sensor_type],
                                               spec.rate_percent),
                    sim_time=self.sim_time,
                    seed=derive_seed(self.seed, sensor_id),
                    impairment=self.impairment, jitter=self.jitter,
                    camera_bytes=self.camera_bytes,
                )
                nodes.append(node)
                started_ids.append(sensor_id)
        except (OSError, FleetResourceError) as e:
            for node in nodes:
                node.sock.close()
            raise FleetResourceError(str(e), started=started_ids) from e

        events = [asyncio.Event() for _ in nodes]
        for node, event in zip(nodes, events):
            self._tasks.append(asyncio.create_task(self._run_node(node, event)))
        await asyncio.gather(*(e.wait() for e in events))
        self.report = FleetReport(len(nodes), loop.time() - t0, started_ids)
        self.log(f"fleet ready: {len(nodes)} sensors in "
                 f"{self.report.startup_duration:.3f}s, sim_time={self.sim_time}s")
        return self.report

    async def _run_node(self, node: SensorNode, ready: asyncio.Event) -> None:
        report = await node.run(ready)
        await self._reports.put(report)

    async def join(self) -> list[SensorReport]:
        """Wait for every sensor loop to finish; returns their reports."""
        await asyncio.gather(*self._tasks)
        reports = []
        while not self._reports.empty():
            reports.append(self._reports.get_nowait())
        total = sum(r.packets_sent for r in reports)
        self.log(f"fleet done: {total} packets from {len(reports)} sensors")
        return reports

    def cancel(self) -> None:
        for task in self._tasks:
            task.cancel()


async def run_fleet(specs: list[SensorSpec], core_addr: tuple[str, int],
                    sim_time: float, **kwargs) -> tuple[FleetReport, list[SensorReport]]:
    """Start a fleet, run it to completion, and return both report levels."""
    fleet = Fleet(specs, core_addr, sim_time, **kwargs)
    fleet_report = await fleet.start()
    reports = await fleet.join()
    return fleet_report, reports
