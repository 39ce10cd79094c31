"""Client application: subscribe to one sensor stream and archive it.

Sends a subscribe request to the core's client port, resending every
two seconds until the first ack or data packet arrives (subscribe
datagrams are as lossy as anything else on UDP), then receives for the
configured window. Every data packet is appended as one NDJSON line
under the log directory, and delay statistics are computed on exit:

  * transit delay: receive time minus the packet's sent-at stamp
    (meaningful when client and sensors share a clock, e.g. loopback),
  * inter-arrival: gaps between consecutive packets of the stream.

Without an explicit sim_time the client runs until the stream has been
silent for `idle_timeout` seconds.
"""

from __future__ import annotations

import asyncio
import json
import logging
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

from .analytics import DelayStats, compute_delay_stats
from .codec import DecodeError, canonical_json
from .packets import MsgKind, decode_packet, encode_packet, subscribe_packet

logger = logging.getLogger("stgen.client")

SUBSCRIBE_RETRY = 2.0
DEFAULT_IDLE_TIMEOUT = 30.0


class ClientError(RuntimeError):
    """Client could not start (unwritable log directory, bad config)."""


@dataclass
class ClientConfig:
    log_dir: str
    core_host: str
    core_client_port: int
    sensor_id: str
    sim_time: float | None = None  # receive window; None means idle-timeout mode
    idle_timeout: float = DEFAULT_IDLE_TIMEOUT


@dataclass
class ClientReport:
    sensor_id: str
    packets_received: int
    transit_delay: DelayStats | None
    inter_arrival: DelayStats | None
    first_data_latency: float | None  # subscribe send to first data packet
    log_path: str
    duration: float


class _Receiver(asyncio.DatagramProtocol):
    def __init__(self, on_datagram):
        self.on_datagram = on_datagram

    def datagram_received(self, data, addr):
        self.on_datagram(data)

    def error_received(self, exc):
        pass


async def subscribe_and_receive(cfg: ClientConfig, *,
                                log: Callable[[str], None] | None = None,
                                stop: asyncio.Event | None = None) -> ClientReport:
    log = log or logger.info
    log_dir = Path(cfg.log_dir)
    try:
        log_dir.mkdir(parents=True, exist_ok=True)
        log_path = log_dir / f"{cfg.sensor_id}.ndjson"
        fh = open(log_path, "w", encoding="utf-8")
    except OSError as e:
        raise ClientError(f"log directory {cfg.log_dir!r} not writable: {e}") from e

    loop = asyncio.get_running_loop()
    core_addr = (cfg.core_host, cfg.core_client_port)
    state = {
        "active_at": None,       # loop time of first ack/data
        "last_rx": loop.time(),
        "prev_arrival": None,
        "received": 0,
        "first_data_latency": None,
    }
    transit: list[float] = []
    gaps: list[float] = []
    activity = asyncio.Event()
    start = loop.time()

    def on_datagram(data: bytes) -> None:
        now_mono = loop.time()
        now_epoch = time.time()
        try:
            pkt = decode_packet(data)
        except DecodeError:
            return
        if state["active_at"] is None:
            state["active_at"] = now_mono
        state["last_rx"] = now_mono
        if pkt.kind != MsgKind.DATA or pkt.sensor_id != cfg.sensor_id:
            activity.set()
            return
        if state["first_data_latency"] is None:
            state["first_data_latency"] = now_mono - start
        fh.write(json.dumps({
            "received_at": int(now_epoch * 1000),
            "sensor_id": pkt.sensor_id,
            "sensor_type": pkt.sensor_type,
            "seq": pkt.seq,
            "sent_at": pkt.sent_at_ms,
            "payload": json.loads(canonical_json(pkt.payload or {})),
        }, separators=(",", ":")) + "\n")
        state["received"] += 1
        transit.append(max(0.0, now_epoch - pkt.sent_at_ms / 1000.0))
        if state["prev_arrival"] is not None:
            gaps.append(now_mono - state["prev_arrival"])
        state["prev_arrival"] = now_mono
        activity.set()

    transport, _ = await loop.create_datagram_endpoint(
        lambda: _Receiver(on_datagram), local_addr=("0.0.0.0", 0))
    subscribe_bytes = encode_packet(subscribe_packet(cfg.sensor_id))
    log(f"subscribing to {cfg.sensor_id} via {cfg.core_host}:{cfg.core_client_port}")

    next_subscribe = start
    try:
        while True:
            now = loop.time()
            if stop is not None and stop.is_set():
                break
            if state["active_at"] is None and now >= next_subscribe:
                transport.sendto(subscribe_bytes, core_addr)
                next_subscribe = now + SUBSCRIBE_RETRY
            if cfg.sim_time is not None:
                anchor = state["active_at"] if state["active_at"] is not None else start
                deadline = anchor + cfg.sim_time
            else:
                deadline = state["last_rx"] + cfg.idle_timeout
            if now >= deadline:
                break
            wake = min(deadline, next_subscribe) if state["active_at"] is None else deadline
            try:
                await asyncio.wait_for(activity.wait(), timeout=max(0.01, wake - now))
            except asyncio.TimeoutError:
                pass
            activity.clear()
    finally:
        transport.close()
        fh.close()

    duration = loop.time() - start
    report = ClientReport(
        sensor_id=cfg.sensor_id,
        packets_received=state["received"],
        transit_delay=compute_delay_stats(transit) if transit else None,
        inter_arrival=compute_delay_stats(gaps) if gaps else None,
        first_data_latency=state["first_data_latency"],
        log_path=str(log_path),
        duration=duration,
    )
    if report.packets_received == 0:
        log(f"warning: no packets received for {cfg.sensor_id}")
    else:
        log(f"client done: {report.packets_received} packets from {cfg.sensor_id}")
    return report
