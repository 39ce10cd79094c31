#!/usr/bin/env python3
"""Reproducing the delay-statistics table under network impairment.

Runs five loopback experiments, one per link condition, with the
in-process impairment layer on the core-to-client path: a temperature
sensor publishing at 20 Hz for 20 seconds, a subscribed client
measuring per-packet transit delay. Prints the resulting table.

With the 10 kbit/s conditions the link saturates (one 82-byte packet
takes longer to serialize than the publish interval), so the queue
grows and delays climb into seconds with large variance, while the
100 kbit/s rows stay near the pure serialization delay.
"""

import asyncio

from stgen.analytics import render_delay_table
from stgen.client import ClientConfig, subscribe_and_receive
from stgen.core import CoreNode
from stgen.impairment import ImpairmentConfig
from stgen.sensors import SensorSpec, SensorType, run_fleet

CONDITIONS = [
    ("(Unbounded, 0%)", None, 0.00),
    ("(100 kbit/s, 5%)", 100_000.0, 0.05),
    ("(100 kbit/s, 10%)", 100_000.0, 0.10),
    ("(10 kbit/s, 5%)", 10_000.0, 0.05),
    ("(10 kbit/s, 10%)", 10_000.0, 0.10),
]

SIM_TIME = 20.0


async def run_condition(label, bandwidth, loss):
    impairment = None
    if bandwidth is not None or loss:
        impairment = ImpairmentConfig(bandwidth_bps=bandwidth, loss_prob=loss,
                                      seed=42)
    core = CoreNode("127.0.0.1", 0, 0, sim_time=SIM_TIME + 15,
                    archive_dir="demo_impairment_logs",
                    impairment=impairment, log=lambda s: None)
    core_task = asyncio.create_task(core.run())
    await core.started.wait()
    client_task = asyncio.create_task(subscribe_and_receive(ClientConfig(
        log_dir="demo_impairment_logs/client", core_host="127.0.0.1",
        core_client_port=core.bound_client_port, sensor_id="temp_1",
        sim_time=SIM_TIME + 4), log=lambda s: None))
    await asyncio.sleep(0.3)
    await run_fleet([SensorSpec(SensorType.TEMP, 1)],
                    ("127.0.0.1", core.bound_sensor_port), sim_time=SIM_TIME,
                    seed=7, intervals={SensorType.TEMP: 0.05},
                    log=lambda s: None)
    report = await client_task
    core.stop()
    await core_task
    return report.transit_delay


async def main():
    rows = []
    for i, (label, bandwidth, loss) in enumerate(CONDITIONS):
        print(f"running condition {label} ...")
        stats = await run_condition(label, bandwidth, loss)
        rows.append((str(i + 1), label, stats))
    print()
    print(render_delay_table(rows))


if __name__ == "__main__":
    asyncio.run(main())
