#!/usr/bin/env python3
"""Driving the testbed through the REST control plane.

Starts the HTTP service in-process, launches a core and a fleet through
POST /api/runs exactly as the web UI would, follows the fleet's log
stream, and fetches the final run results.
"""

import asyncio
import json
import socket

import httpx
import uvicorn

from stgen.runs import RunManager
from stgen.webapi import create_app


def free_udp_port() -> int:
    with socket.socket(socket.AF_INET, socket.SOCK_DGRAM) as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


async def main():
    manager = RunManager()
    config = uvicorn.Config(create_app(manager), host="127.0.0.1", port=0,
                            log_level="error")
    server = uvicorn.Server(config)
    server_task = asyncio.create_task(server.serve())
    while not server.started:
        await asyncio.sleep(0.02)
    port = server.servers[0].sockets[0].getsockname()[1]
    base = f"http://127.0.0.1:{port}"
    print(f"control plane at {base} (interactive docs at "
          f"{base}/swagger-ui/index.html)\n")

    sensor_port, client_port = free_udp_port(), free_udp_port()
    timeout = httpx.Timeout(10.0, read=60.0)  # log streams sit quiet mid-run
    async with httpx.AsyncClient(base_url=base, timeout=timeout) as client:
        core = (await client.post("/api/runs", json={
            "role": "core",
            "params": {"host": "127.0.0.1", "sensor_port": sensor_port,
                       "client_port": client_port, "sim_time": 12,
                       "archive_dir": "demo_rest_logs"}})).json()
        print("started core :", core)

        fleet = (await client.post("/api/runs", json={
            "role": "fleet",
            "params": {"core_host": "127.0.0.1", "core_port": sensor_port,
                       "sim_time": 5, "specs": ["temp:3:50", "gps:2"],
                       "seed": 9}})).json()
        print("started fleet:", fleet)
        print("\nfleet log stream:")
        async with client.stream(
                "GET", f"/api/runs/{fleet['run_id']}/logs") as stream:
            async for line in stream.aiter_lines():
                if line.startswith("data: "):
                    print("  |", line[6:])
                if line == "event: end":
                    break

        detail = (await client.get(f"/api/runs/{fleet['run_id']}")).json()
        print("\nfleet result:", json.dumps(detail["result"], indent=2))

        await client.delete(f"/api/runs/{core['run_id']}")
        status = (await client.get("/api/status")).json()
        print("\nservice status:", status)

    server.should_exit = True
    await server_task


if __name__ == "__main__":
    asyncio.run(main())
