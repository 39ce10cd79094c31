"""The core (sink) node.

Receives sensor datagrams on one UDP port and client requests on
another. Every successfully decoded sensor packet is:

  * recorded in the node registry (liveness, packet counts),
  * appended to the local NDJSON archive (one line per packet),
  * buffered for the pluggable document sink (periodic flush),
  * relayed byte-identical to every client subscribed to that sensor,
  * emitted as one capture record for the analytics pipeline.

Malformed datagrams increment a counter and are dropped; the receive
loops never die on bad input. Both receive loops run on one event loop,
so registry and writer mutations are naturally serialized per
operation.
"""

from __future__ import annotations

import asyncio
import json
import logging
import socket
import time
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable, Protocol

from .codec import DecodeError, canonical_json
from .impairment import ImpairedSender, ImpairmentConfig
from .packets import MsgKind, ack_packet, decode_packet, encode_packet

logger = logging.getLogger("stgen.core")

DEFAULT_TTL = 60.0
DEFAULT_FLUSH_INTERVAL = 5.0
FLUSH_THRESHOLD = 10_000
SINK_BUFFER_CAP = 100_000
MAX_SINK_BACKOFF = 30.0


class NodeKind(str, Enum):
    SENSOR = "sensor"
    CLIENT = "client"


@dataclass
class NodeEntry:
    node_id: str
    kind: NodeKind
    addr: tuple[str, int]
    first_seen: float
    last_seen: float
    packets: int = 0
    subscriptions: set[str] = field(default_factory=set)


class Registry:
    """Liveness and subscription state for every node the core has heard from."""

    def __init__(self):
        self.entries: dict[str, NodeEntry] = {}
        self._subscribers: dict[str, set[str]] = {}  # sensor_id -> client node ids

    def upsert_sensor(self, sensor_id: str, addr, now: float) -> NodeEntry:
        entry = self.entries.get(sensor_id)
        if entry is None:
            entry = NodeEntry(sensor_id, NodeKind.SENSOR, addr, now, now)
            self.entries[sensor_id] = entry
        entry.addr = addr
        entry.last_seen = now
        entry.packets += 1
        return entry

    def upsert_client(self, addr, now: float) -> NodeEntry:
        node_id = f"client_{addr[0]}:{addr[1]}"
        entry = self.entries.get(node_id)
        if entry is None:
            entry = NodeEntry(node_id, NodeKind.CLIENT, addr, now, now)
            self.entries[node_id] = entry
        entry.last_seen = now
        entry.packets += 1
        return entry

    def subscribe(self, client: NodeEntry, sensor_id: str) -> None:
        client.subscriptions.add(sensor_id)
        self._subscribers.setdefault(sensor_id, set()).add(client.node_id)

    def subscriber_addrs(self, sensor_id: str) -> list[tuple[str, int]]:
        ids = self._subscribers.get(sensor_id)
        if not ids:
            return []
        return [self.entries[i].addr for i in ids if i in self.entries]

    def expire_stale(self, now: float, ttl: float = DEFAULT_TTL) -> list[str]:
        """Drop entries idle past the ttl; a sensor stays while any live
        client still subscribes to it."""
        keep_sensors: set[str] = set()
        for entry in self.entries.values():
            if entry.kind == NodeKind.CLIENT and now - entry.last_seen <= ttl:
                keep_sensors.update(entry.subscriptions)
        removed = [
            node_id for node_id, e in self.entries.items()
            if now - e.last_seen > ttl and node_id not in keep_sensors
        ]
        for node_id in removed:
            entry = self.entries.pop(node_id)
            if entry.kind == NodeKind.CLIENT:
                for sensor_id in entry.subscriptions:
                    self._subscribers.get(sensor_id, set()).discard(node_id)
        return removed


class DocumentSink(Protocol):
    """Destination for the second copy of every reading (document store stand-in)."""

    def write_many(self, records: list[dict]) -> None: ...


class NdjsonFileSink:
    """File-backed default document sink: one JSON line per record."""

    def __init__(self, path):
        self.path = Path(path)

    def write_many(self, records: list[dict]) -> None:
        with open(self.path, "a", encoding="utf-8") as fh:
            for rec in records:
                fh.write(json.dumps(rec, separators=(",", ":")) + "\n")


@dataclass
class CoreReport:
    packets_archived: int
    malformed: int
    relayed: int
    sink_written: int
    sink_dropped: int
    per_sensor: dict[str, int]
    archive_path: str
    capture_path: str


class _Handler(asyncio.DatagramProtocol):
    def __init__(self, callback):
        self.callback = callback

    def datagram_received(self, data, addr):
        self.callback(data, addr, time.time())

    def error_received(self, exc):  # ICMP errors are expected under UDP
        pass


class CoreNode:
    """One core instance: two UDP receive loops plus housekeeping tasks."""

    def __init__(self, host: str, sensor_port: int, client_port: int,
                 sim_time: float, *, archive_dir="stgen_core_logs",
                 sink: DocumentSink | None = None,
                 flush_interval: float = DEFAULT_FLUSH_INTERVAL,
                 ttl: float = DEFAULT_TTL,
                 impairment: ImpairmentConfig | None = None,
                 capture_tcp: tuple[str, int] | None = None,
                 client_send: Callable[[bytes, tuple[str, int]], None] | None = None,
                 log: Callable[[str], None] | None = None):
        self.host = host
        self.sensor_port = sensor_port
        self.client_port = client_port
        self.sim_time = sim_time
        self.archive_dir = Path(archive_dir)
        self.flush_interval = flush_interval
        self.ttl = ttl
        self.impairment = impairment
        self.capture_tcp = capture_tcp
        self.log = log or logger.info

        run_tag = time.strftime("%Y%m%d-%H%M%S") + f"-{int(time.time() * 1000) % 1000:03d}"
        self.archive_path = self.archive_dir / f"archive-{run_tag}.ndjson"
        self.capture_path = self.archive_dir / f"capture-{run_tag}.ndjson"
        self.sink: DocumentSink = sink if sink is not None else NdjsonFileSink(
            self.archive_dir / f"sink-{run_tag}.ndjson")

        self.registry = Registry()
        self.malformed = 0
        self.relayed = 0
        self.packets_archived = 0
        self.per_sensor: dict[str, int] = {}
        self.sink_written = 0
        self.sink_dropped = 0
        self._sink_buffer: deque[dict] = deque()
        self._sink_backoff = 1.0
        self._sink_retry_at = 0.0
        self._flush_wake = asyncio.Event()
        self._prev_arrival: dict[str, float] = {}
        self._archive_fh = None
        self._capture_fh = None
        self._capture_tcp_writer = None
        self._capture_tcp_down = 0
        self._client_send = client_send
        self._client_links: dict[tuple[str, int], ImpairedSender] = {}
        self._stop = asyncio.Event()
        self.started = asyncio.Event()
        self.bound_sensor_port = sensor_port
        self.bound_client_port = client_port

    # --- datagram handlers (total on arbitrary bytes) -------------------------

    def handle_sensor_datagram(self, data: bytes, addr, now: float) -> None:
        try:
            pkt = decode_packet(data)
        except DecodeError:
            self.malformed += 1
            return
        if pkt.kind != MsgKind.DATA:
            self.malformed += 1  # only data packets belong on the sensor port
            return
        self.registry.upsert_sensor(pkt.sensor_id, addr, now)
        self._archive(pkt, addr, now)
        for client_addr in self.registry.subscriber_addrs(pkt.sensor_id):
            self._send_to_client(data, client_addr)
            self.relayed += 1
        self._capture(pkt, len(data), now)

    def handle_client_request(self, data: bytes, addr, now: float) -> None:
        try:
            pkt = decode_packet(data)
        except DecodeError:
            self.malformed += 1
            return
        if pkt.kind != MsgKind.SUBSCRIBE:
            self.malformed += 1
            return
        client = self.registry.upsert_client(addr, now)
        self.registry.subscribe(client, pkt.sensor_id)
        self._send_to_client(encode_packet(ack_packet(pkt.sensor_id)), addr)

    # --- archiving, capture, sink ----------------------------------------------

    def _archive(self, pkt, addr, now: float) -> None:
        record = {
            "received_at": int(now * 1000),
            "sensor_id": pkt.sensor_id,
            "sensor_type": pkt.sensor_type,
            "seq": pkt.seq,
            "sent_at": pkt.sent_at_ms,
            "payload": json.loads(canonical_json(pkt.payload or {})),
            "source_addr": f"{addr[0]}:{addr[1]}",
        }
        if self._archive_fh is not None:
            self._archive_fh.write(json.dumps(record, separators=(",", ":")) + "\n")
        self.packets_archived += 1
        self.per_sensor[pkt.sensor_id] = self.per_sensor.get(pkt.sensor_id, 0) + 1
        self._sink_enqueue(record)

    def _sink_enqueue(self, record: dict) -> None:
        if len(self._sink_buffer) >= SINK_BUFFER_CAP:
            self._sink_buffer.popleft()
            self.sink_dropped += 1
            if self.sink_dropped == 1 or self.sink_dropped % 10_000 == 0:
                self.log(f"sink buffer full, dropped oldest "
                         f"(total dropped {self.sink_dropped})")
        self._sink_buffer.append(record)
        if len(self._sink_buffer) >= FLUSH_THRESHOLD:
            self._flush_wake.set()

    def flush_sink(self, now: float | None = None) -> int:
        """Drain the buffer to the sink; at-least-once, backoff on failure."""
        if not self._sink_buffer:
            return 0
        now = time.monotonic() if now is None else now
        if now < self._sink_retry_at:
            return 0
        batch = list(self._sink_buffer)
        try:
            self.sink.write_many(batch)
        except Exception as e:
            self._sink_retry_at = now + self._sink_backoff
            self._sink_backoff = min(self._sink_backoff * 2, MAX_SINK_BACKOFF)
            self.log(f"document sink unavailable ({e}); retry in "
                     f"{self._sink_retry_at - now:.0f}s with {len(batch)} buffered")
            return 0
        for _ in batch:
            self._sink_buffer.popleft()
        self._sink_backoff = 1.0
        self._sink_retry_at = 0.0
        self.sink_written += len(batch)
        return len(batch)

    def _capture(self, pkt, nbytes: int, now: float) -> None:
        record = {
            "ts": int(now * 1000),
            "sensor_id": pkt.sensor_id,
            "sensor_type": pkt.sensor_type,
            "seq": pkt.seq,
            "bytes_on_wire": nbytes,
        }
        prev = self._prev_arrival.get(pkt.sensor_id)
        if prev is not None:
            record["frame_time_delta"] = max(0.0, now - prev)
        self._prev_arrival[pkt.sensor_id] = now
        line = json.dumps(record, separators=(",", ":")) + "\n"
        if self._capture_fh is not None:
            self._capture_fh.write(line)
        if self._capture_tcp_writer is not None:
            try:
                self._capture_tcp_writer.write(line.encode())
            except Exception:
                self._capture_tcp_writer = None
                self._capture_tcp_down += 1

    def _send_to_client(self, data: bytes, addr) -> None:
        if self._client_send is None:
            return
        if self.impairment is not None and not self.impairment.is_noop():
            sender = self._client_links.get(addr)
            if sender is None:
                sender = ImpairedSender(self.impairment, self._client_send,
                                        key=f"{addr[0]}:{addr[1]}")
                self._client_links[addr] = sender
            sender.send(data, addr)
        else:
            self._client_send(data, addr)

    # --- lifecycle -----------------------------------------------------------------

    def open_outputs(self) -> None:
        self.archive_dir.mkdir(parents=True, exist_ok=True)
        self._archive_fh = open(self.archive_path, "w", encoding="utf-8")
        self._capture_fh = open(self.capture_path, "w", encoding="utf-8")

    def close_outputs(self) -> None:
        for fh in (self._archive_fh, self._capture_fh):
            if fh is not None:
                fh.close()
        self._archive_fh = self._capture_fh = None

    def stop(self) -> None:
        self._stop.set()

    async def run(self) -> CoreReport:
        loop = asyncio.get_running_loop()
        self.open_outputs()
        sensor_transport, _ = await loop.create_datagram_endpoint(
            lambda: _Handler(self.handle_sensor_datagram),
            local_addr=(self.host, self.sensor_port))
        client_transport, _ = await loop.create_datagram_endpoint(
            lambda: _Handler(self.handle_client_request),
            local_addr=(self.host, self.client_port))
        for transport in (sensor_transport, client_transport):
            sock = transport.get_extra_info("socket")
            if sock is not None:
                sock.setsockopt(socket.SOL_SOCKET, socket.SO_RCVBUF, 4 * 1024 * 1024)
        self.bound_sensor_port = sensor_transport.get_extra_info("sockname")[1]
        self.bound_client_port = client_transport.get_extra_info("sockname")[1]
        if self._client_send is None:
            self._client_send = lambda data, addr: client_transport.sendto(data, addr)
        if self.capture_tcp is not None:
            await self._connect_capture_tcp()

        self.log(f"core up: sensors on {self.host}:{self.bound_sensor_port}, "
                 f"clients on {self.host}:{self.bound_client_port}, "
                 f"sim_time={self.sim_time}s")
        self.started.set()
        housekeeping = asyncio.create_task(self._housekeeping())
        try:
            try:
                await asyncio.wait_for(self._stop.wait(), timeout=self.sim_time)
            except asyncio.TimeoutError:
                pass
        finally:
            housekeeping.cancel()
            sensor_transport.close()
            client_transport.close()
            # let any impaired relays already scheduled fire before closing books
            await asyncio.sleep(0)
            self.flush_sink()
            if self._capture_tcp_writer is not None:
                self._capture_tcp_writer.close()
            self.close_outputs()
        report = CoreReport(
            packets_archived=self.packets_archived, malformed=self.malformed,
            relayed=self.relayed, sink_written=self.sink_written,
            sink_dropped=self.sink_dropped, per_sensor=dict(self.per_sensor),
            archive_path=str(self.archive_path), capture_path=str(self.capture_path),
        )
        self.log(f"core done: archived {report.packets_archived}, "
                 f"relayed {report.relayed}, malformed {report.malformed}")
        return report

    async def _connect_capture_tcp(self) -> None:
        try:
            _, self._capture_tcp_writer = await asyncio.open_connection(
                *self.capture_tcp)
        except OSError as e:
            self._capture_tcp_writer = None
            self._capture_tcp_down += 1
            self.log(f"capture TCP sink unreachable: {e}")

    async def _housekeeping(self) -> None:
        last_flush = time.monotonic()
        last_expire = time.monotonic()
        while True:
            try:
                await asyncio.wait_for(self._flush_wake.wait(), timeout=1.0)
            except asyncio.TimeoutError:
                pass
            self._flush_wake.clear()
            now = time.monotonic()
            if (now - last_flush >= self.flush_interval
                    or len(self._sink_buffer) >= FLUSH_THRESHOLD):
                self.flush_sink(now)
                last_flush = now
            if now - last_expire >= min(self.ttl / 4, 15.0):
                removed = self.registry.expire_stale(time.time(), self.ttl)
                if removed:
                    self.log(f"expired {len(removed)} stale nodes")
                last_expire = now
            if self._archive_fh is not None:
                self._archive_fh.flush()
            if self._capture_fh is not None:
                self._capture_fh.flush()
            if self.capture_tcp is not None and self._capture_tcp_writer is None:
                await self._connect_capture_tcp()
