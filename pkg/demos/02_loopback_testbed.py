#!/usr/bin/env python3
"""A complete testbed run on loopback, in one process.

Starts a core node, a small mixed sensor fleet, and a client subscribed
to one temperature stream, then prints what each side observed. This is
the programmatic equivalent of running `stgen server`, `stgen launcher`
and `stgen client` in three terminals.
"""

import asyncio

from stgen.client import ClientConfig, subscribe_and_receive
from stgen.core import CoreNode
from stgen.sensors import SensorSpec, SensorType, run_fleet

SIM_TIME = 6.0


async def main():
    core = CoreNode("127.0.0.1", 0, 0, sim_time=SIM_TIME + 10,
                    archive_dir="demo_core_logs", log=print)
    core_task = asyncio.create_task(core.run())
    await core.started.wait()

    client_task = asyncio.create_task(subscribe_and_receive(
        ClientConfig(log_dir="demo_client_logs", core_host="127.0.0.1",
                     core_client_port=core.bound_client_port,
                     sensor_id="temp_1", sim_time=SIM_TIME + 2),
        log=print))
    await asyncio.sleep(0.3)

    fleet_report, sensor_reports = await run_fleet(
        [SensorSpec(SensorType.TEMP, 3), SensorSpec(SensorType.GPS, 2)],
        ("127.0.0.1", core.bound_sensor_port), sim_time=SIM_TIME,
        seed=1, log=print)

    client_report = await client_task
    core.stop()
    core_report = await core_task

    print()
    print(f"fleet    : {fleet_report.node_count} sensors ready in "
          f"{fleet_report.startup_duration * 1000:.1f} ms, "
          f"{sum(r.packets_sent for r in sensor_reports)} packets sent")
    print(f"core     : archived {core_report.packets_archived} packets "
          f"({core_report.per_sensor}), relayed {core_report.relayed}")
    print(f"client   : received {client_report.packets_received} packets "
          f"from {client_report.sensor_id}")
    if client_report.transit_delay:
        print(f"           mean transit delay "
              f"{client_report.transit_delay.mean * 1000:.3f} ms")
    print(f"archive  : {core_report.archive_path}")
    print(f"capture  : {core_report.capture_path}")
    print(f"client log: {client_report.log_path}")


if __name__ == "__main__":
    asyncio.run(main())
