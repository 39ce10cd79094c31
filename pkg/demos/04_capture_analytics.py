#!/usr/bin/env python3
"""From capture file to statistics and distributions.

Generates a short mixed-fleet run, then analyzes the capture file the
core emitted: per-stream delay statistics, per-type packet
distribution over time buckets, windowed stats for dashboard-style
series, and GPS activity aggregation from the archive.
"""

import asyncio
import json

from stgen.analytics import (
    bucket_distribution,
    gps_points,
    load_capture,
    per_stream_delay_stats,
    read_ndjson,
    render_delay_table,
    windowed_stats,
)
from stgen.core import CoreNode
from stgen.sensors import SensorSpec, SensorType, run_fleet

SIM_TIME = 10.0


async def generate_capture():
    core = CoreNode("127.0.0.1", 0, 0, sim_time=SIM_TIME + 5,
                    archive_dir="demo_analytics_logs", log=lambda s: None)
    core_task = asyncio.create_task(core.run())
    await core.started.wait()
    await run_fleet([SensorSpec(t, 2) for t in SensorType],
                    ("127.0.0.1", core.bound_sensor_port), sim_time=SIM_TIME,
                    seed=11, log=lambda s: None)
    await asyncio.sleep(0.3)
    core.stop()
    report = await core_task
    return report


report = asyncio.run(generate_capture())
records = load_capture(report.capture_path)
print(f"capture file: {report.capture_path} ({len(records)} records)\n")

# Inter-arrival (frame time delta) statistics per sensor stream.
stats = per_stream_delay_stats(records)
rows = [(sensor_id, "-", s) for sensor_id, s in list(stats.items())[:6]]
print(render_delay_table(rows))
print()

# Who sends how much: per-type counts and byte totals in 2 s buckets.
print("packet distribution in 2s buckets:")
for bucket in bucket_distribution(records, width=2.0):
    print(f"  t={bucket.bucket_start}: counts={bucket.packet_counts} "
          f"bytes={bucket.byte_totals}")
print()

# Tumbling-window series, the shape a live dashboard would plot.
print("5s-window delay stats (count / mean / p95):")
for start, s in windowed_stats(records, window=5.0):
    print(f"  window {start}: n={s.count} mean={s.mean:.3f}s p95={s.p95:.3f}s")
print()

# GPS activity export: rounded lat/lon fixes with packet counts.
archive = read_ndjson(report.archive_path)
points = gps_points(archive)
print(f"gps activity: {len(points)} distinct rounded positions; sample:")
for point in points[:5]:
    print(f"  {json.dumps(point)}")
