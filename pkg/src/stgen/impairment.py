"""Deterministic in-process network impairment on the send path.

Replaces OS traffic control so delay experiments are reproducible
without privileges. Each (source, destination) pair owns one Link that
models a single store-and-forward queue:

    drop with probability loss_prob (seeded RNG), else
    start      = max(now, link_free)
    link_free  = start + packet_bits / bandwidth
    deliver_at = link_free + base_latency

Bandwidth is always bits per second. With identical seed and packet
sequence the drop/deliver schedule is identical; deliveries on one link
are FIFO.
"""

from __future__ import annotations

import asyncio
import hashlib
import random
from dataclasses import dataclass


def _link_seed(base_seed: int, key: str) -> int:
    digest = hashlib.blake2b(f"link:{base_seed}:{key}".encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little")


@dataclass(frozen=True)
class ImpairmentConfig:
    bandwidth_bps: float | None = None  # None means unbounded
    loss_prob: float = 0.0
    base_latency: float = 0.0  # seconds
    seed: int = 0

    def __post_init__(self):
        if self.bandwidth_bps is not None and self.bandwidth_bps <= 0:
            raise ValueError("bandwidth must be positive when bounded")
        if not 0.0 <= self.loss_prob <= 1.0:
            raise ValueError("loss_prob must be in [0, 1]")
        if self.base_latency < 0:
            raise ValueError("base_latency must be >= 0")

    def is_noop(self) -> bool:
        return self.bandwidth_bps is None and self.loss_prob == 0.0 and self.base_latency == 0.0


class Link:
    """Virtual link state for one (source, destination) pair."""

    def __init__(self, cfg: ImpairmentConfig, key: str = ""):
        self.cfg = cfg
        self.rng = random.Random(_link_seed(cfg.seed, key))
        self.free_at = 0.0
        self.dropped = 0
        self.delivered = 0

    def apply(self, packet_size: int, now: float) -> float | None:
        """Decide one packet's fate: None to drop, else the delivery timestamp."""
        if self.cfg.loss_prob > 0.0 and self.rng.random() < self.cfg.loss_prob:
            self.dropped += 1
            return None
        if self.cfg.bandwidth_bps is not None:
            serialization = packet_size * 8.0 / self.cfg.bandwidth_bps
        else:
            serialization = 0.0
        start = max(now, self.free_at)
        self.free_at = start + serialization
        self.delivered += 1
        return self.free_at + self.cfg.base_latency


class ImpairedSender:
    """Schedules datagram sends through a Link on the running event loop."""

    def __init__(self, cfg: ImpairmentConfig, send, key: str = ""):
        self.link = Link(cfg, key)
        self._send = send

    def send(self, data: bytes, *args) -> None:
        loop = asyncio.get_running_loop()
        deliver_at = self.link.apply(len(data), loop.time())
        if deliver_at is None:
            return
        delay = deliver_at - loop.time()
        if delay <= 0:
            self._send(data, *args)
        else:
            loop.call_at(deliver_at, self._send, data, *args)
