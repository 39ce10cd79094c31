"""REST control plane.

Exposes the same run parameters as the CLI over HTTP JSON: starting
core, fleet, and client runs in-process, streaming their logs, and
serving a machine-readable API description. Parameter validation is
byte-for-byte the CLI's, so a 400 body carries exactly the message the
terminal would print.

    POST   /api/runs               start a run {role, params}
    GET    /api/runs               list runs
    GET    /api/runs/{id}          run detail and result
    DELETE /api/runs/{id}          request stop
    GET    /api/runs/{id}/logs     live log stream (server-sent events)
    GET    /api/status             service health and run counts
    GET    /api/validation-rules   shared form-validation ranges
    GET    /api/openapi.json       OpenAPI 3.x description
    GET    /swagger-ui/index.html  interactive API viewer
"""

from __future__ import annotations

import asyncio
import os
from pathlib import Path

from fastapi import Body, FastAPI, Request
from fastapi.responses import JSONResponse, StreamingResponse
from fastapi.staticfiles import StaticFiles

from . import __version__
from .runs import ParamError, ResourceExhausted, RunManager, VALIDATION_RULES

DEFAULT_HTTP_ADDR = "127.0.0.1:8080"
LOG_POLL_INTERVAL = 0.1


def http_addr_from_env() -> tuple[str, int]:
    addr = os.environ.get("STGEN_HTTP_ADDR", DEFAULT_HTTP_ADDR)
    host, _, port = addr.rpartition(":")
    return host or "127.0.0.1", int(port)


def create_app(manager: RunManager | None = None,
               frontend_dir: str | None = None) -> FastAPI:
    manager = manager if manager is not None else RunManager()
    app = FastAPI(
        title="STGen control plane",
        version=__version__,
        description="Start and monitor testbed runs (core, sensor fleets, clients).",
        openapi_url="/api/openapi.json",
        docs_url="/swagger-ui/index.html",
        redoc_url=None,
    )
    app.state.manager = manager

    @app.post("/api/runs", status_code=201)
    async def start_run(body: dict = Body(
            ...,
            examples=[{"role": "fleet", "params": {
                "core_host": "localhost", "core_port": 5004,
                "sim_time": 60, "specs": ["temp:30:1", "gps:10"]}}])):
        """Start a run. Body: {"role": "core"|"fleet"|"client", "params": {...}}."""
        role = body.get("role")
        params = body.get("params")
        if not isinstance(params, dict):
            return JSONResponse(status_code=400,
                                content={"detail": "missing required parameter: params"})
        try:
            run = await manager.start(str(role), params)
        except ParamError as e:
            return JSONResponse(status_code=400, content={"detail": str(e)})
        except ResourceExhausted as e:
            return JSONResponse(status_code=503, content={"detail": str(e)})
        return run.summary()

    @app.get("/api/runs")
    async def list_runs():
        return [run.summary() for run in manager.list_runs()]

    @app.get("/api/runs/{id}")
    async def run_detail(id: str):
        run = manager.get(id)
        if run is None:
            return JSONResponse(status_code=404, content={"detail": "run not found"})
        return run.detail()

    @app.delete("/api/runs/{id}")
    async def stop_run(id: str):
        run = await manager.stop(id)
        if run is None:
            return JSONResponse(status_code=404, content={"detail": "run not found"})
        return run.summary()

    @app.get("/api/runs/{id}/logs")
    async def stream_logs(id: str, request: Request):
        """Incremental log stream; replays the backlog, then follows live."""
        run = manager.get(id)
        if run is None:
            return JSONResponse(status_code=404, content={"detail": "run not found"})

        async def event_stream():
            cursor = 0
            while True:
                gap, lines, cursor = run.log.since(cursor)
                if gap:
                    yield f"event: gap\ndata: {gap}\n\n"
                for line in lines:
                    yield f"data: {line}\n\n"
                if run.state.terminal:
                    _, rest, _ = run.log.since(cursor)
                    if not rest:
                        yield "event: end\ndata: closed\n\n"
                        return
                if await request.is_disconnected():
                    return
                await asyncio.sleep(LOG_POLL_INTERVAL)

        return StreamingResponse(event_stream(), media_type="text/event-stream")

    @app.get("/api/status")
    async def status():
        return {"service": "stgen", "version": __version__, **manager.status()}

    @app.get("/api/validation-rules")
    async def validation_rules():
        return VALIDATION_RULES

    if frontend_dir and Path(frontend_dir).is_dir():
        app.mount("/", StaticFiles(directory=frontend_dir, html=True), name="ui")

    return app
