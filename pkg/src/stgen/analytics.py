"""Delay statistics, packet distributions, and NDJSON export.

Consumes per-packet capture records (one JSON object per line with
fields ts, sensor_id, sensor_type, seq, bytes_on_wire, frame_time_delta)
or archive files, entirely offline from the UDP path. Estimator choices
are pinned for determinism: population variance and nearest-rank p95.
"""

from __future__ import annotations

import json
import math
import statistics
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

CAPTURE_FIELDS = ("ts", "sensor_id", "sensor_type", "seq", "bytes_on_wire",
                  "frame_time_delta")


@dataclass(frozen=True)
class CaptureRecord:
    ts: int  # epoch milliseconds
    sensor_id: str
    sensor_type: str
    seq: int
    bytes_on_wire: int
    frame_time_delta: float | None = None  # seconds; absent for a stream's first packet

    def to_json_obj(self) -> dict:
        obj = {
            "ts": self.ts,
            "sensor_id": self.sensor_id,
            "sensor_type": self.sensor_type,
            "seq": self.seq,
            "bytes_on_wire": self.bytes_on_wire,
        }
        if self.frame_time_delta is not None:
            obj["frame_time_delta"] = self.frame_time_delta
        return obj

    @classmethod
    def from_json_obj(cls, obj: dict) -> "CaptureRecord":
        return cls(
            ts=int(obj["ts"]),
            sensor_id=obj["sensor_id"],
            sensor_type=obj["sensor_type"],
            seq=int(obj["seq"]),
            bytes_on_wire=int(obj["bytes_on_wire"]),
            frame_time_delta=obj.get("frame_time_delta"),
        )


@dataclass(frozen=True)
class DelayStats:
    count: int
    mean: float
    min: float
    max: float
    variance: float
    stddev: float
    p95: float

    def to_json_obj(self) -> dict:
        return {k: getattr(self, k) for k in
                ("count", "mean", "min", "max", "variance", "stddev", "p95")}


def compute_delay_stats(deltas: Sequence[float]) -> DelayStats:
    """Population stats over a delta series; p95 by nearest rank."""
    if not deltas:
        raise ValueError("compute_delay_stats needs a non-empty series")
    n = len(deltas)
    mean = statistics.fmean(deltas)
    variance = statistics.pvariance(deltas, mu=mean) if n > 1 else 0.0
    ordered = sorted(deltas)
    # fmean can land one ulp outside [min, max] on constant series
    mean = min(ordered[-1], max(ordered[0], mean))
    p95 = ordered[max(0, math.ceil(0.95 * n) - 1)]
    return DelayStats(
        count=n, mean=mean, min=ordered[0], max=ordered[-1],
        variance=variance, stddev=math.sqrt(variance), p95=p95,
    )


@dataclass
class DistributionBucket:
    bucket_start: int  # epoch ms, aligned to the width
    width_ms: int
    packet_counts: dict[str, int] = field(default_factory=dict)
    byte_totals: dict[str, int] = field(default_factory=dict)

    def to_json_obj(self) -> dict:
        return {
            "bucket_start": self.bucket_start,
            "width_ms": self.width_ms,
            "packet_counts": self.packet_counts,
            "byte_totals": self.byte_totals,
        }


def bucket_distribution(records: Iterable[CaptureRecord],
                        width: float) -> list[DistributionBucket]:
    """Group records into width-aligned time buckets with per-type tallies."""
    if width <= 0:
        raise ValueError("bucket width must be positive")
    width_ms = int(width * 1000)
    buckets: dict[int, DistributionBucket] = {}
    for rec in records:
        start = (rec.ts // width_ms) * width_ms
        bucket = buckets.get(start)
        if bucket is None:
            bucket = buckets[start] = DistributionBucket(start, width_ms)
        bucket.packet_counts[rec.sensor_type] = \
            bucket.packet_counts.get(rec.sensor_type, 0) + 1
        bucket.byte_totals[rec.sensor_type] = \
            bucket.byte_totals.get(rec.sensor_type, 0) + rec.bytes_on_wire
    return [buckets[k] for k in sorted(buckets)]


def per_stream_delay_stats(records: Iterable[CaptureRecord]) -> dict[str, DelayStats]:
    """Frame-time-delta stats per sensor stream, skipping first packets."""
    deltas: dict[str, list[float]] = {}
    for rec in records:
        if rec.frame_time_delta is not None:
            deltas.setdefault(rec.sensor_id, []).append(rec.frame_time_delta)
    return {sid: compute_delay_stats(d) for sid, d in sorted(deltas.items()) if d}


def windowed_stats(records: Iterable[CaptureRecord],
                   window: float = 10.0) -> list[tuple[int, DelayStats]]:
    """Tumbling-window delta stats over time, for dashboard-style series."""
    width_ms = int(window * 1000)
    windows: dict[int, list[float]] = {}
    for rec in records:
        if rec.frame_time_delta is not None:
            windows.setdefault((rec.ts // width_ms) * width_ms, []).append(
                rec.frame_time_delta)
    return [(start, compute_delay_stats(d)) for start, d in sorted(windows.items())]


class ExportError(IOError):
    """NDJSON export failed partway; carries how many lines were written."""

    def __init__(self, message: str, lines_written: int):
        super().__init__(message)
        self.lines_written = lines_written


def export_ndjson(items: Iterable, destination) -> int:
    """Write one JSON object per line; returns bytes written."""
    written = 0
    lines = 0
    try:
        with open(destination, "w", encoding="utf-8") as fh:
            for item in items:
                obj = item.to_json_obj() if hasattr(item, "to_json_obj") else item
                line = json.dumps(obj, separators=(",", ":")) + "\n"
                fh.write(line)
                written += len(line.encode("utf-8"))
                lines += 1
    except OSError as e:
        raise ExportError(f"export to {destination} failed: {e}", lines) from e
    return written


def read_ndjson(source) -> list[dict]:
    out = []
    with open(source, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(json.loads(line))
    return out


def load_capture(source) -> list[CaptureRecord]:
    return [CaptureRecord.from_json_obj(obj) for obj in read_ndjson(source)]


def gps_points(archive_records: Iterable[dict], precision: int = 4) -> list[dict]:
    """Aggregate archived GPS fixes into rounded lat/lon activity counts."""
    counts: dict[tuple[float, float], int] = {}
    for rec in archive_records:
        payload = rec.get("payload") or {}
        if "lat" in payload and "lon" in payload:
            key = (round(payload["lat"], precision), round(payload["lon"], precision))
            counts[key] = counts.get(key, 0) + 1
    return [{"lat": lat, "lon": lon, "count": n}
            for (lat, lon), n in sorted(counts.items())]


def render_delay_table(rows: list[tuple[str, str, DelayStats]]) -> str:
    """Render per-client delay stats in the fixed column layout.

    Rows are (client_label, condition_label) pairs with their stats;
    columns: Client | (Bandwidth, Loss) | Mean | Max | Min | Variance.
    """
    if not rows:
        raise ValueError("render_delay_table needs at least one row")
    header = ("Client", "(Bandwidth, Loss)", "Mean Delay (s)", "Max Delay (s)",
              "Min Delay (s)", "Variance Delay (s)")
    body = [
        (client, condition, f"{s.mean:.6f}", f"{s.max:.6f}", f"{s.min:.6f}",
         f"{s.variance:.10f}")
        for client, condition, s in rows
    ]
    widths = [max(len(header[i]), *(len(r[i]) for r in body)) for i in range(6)]
    fmt = "  ".join(f"{{:<{w}}}" for w in widths)
    lines = [fmt.format(*header), fmt.format(*("-" * w for w in widths))]
    lines += [fmt.format(*row) for row in body]
    return "\n".join(lines)
