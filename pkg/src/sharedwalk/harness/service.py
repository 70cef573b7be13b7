"""Live telemetry/command endpoint the browser cockpit attaches to.

``SimSession`` is the transport-free core: it owns one closed-loop
simulation driven by an external human command source, steps it in
lockstep, and speaks dicts (hello / state / error frames).  ``build_app``
wraps a session in a FastAPI websocket endpoint that steps the loop in
real time and serves the static cockpit assets.

Message schema (version 1)
--------------------------
hello (server -> client, once per connection):
    type="hello", version, role, limits {tau_max, v_max, rate_hz, dt},
    mission {p0, pf, path: [[x, y], ...]}, grid {origin_x, origin_y,
    extent_x, extent_y, cell_size}, cells: [{cell, label, direction}],
    columns: telemetry column names.
state (server -> client, one per simulation step):
    type="state", version, seq (monotone), clamped (last accepted command
    was clamped), done, plus every telemetry column (NaN sent as null).
command (client -> server, driver role only):
    type="command", v in [0, v_max], tau in [-tau_max, tau_max] (applied
    to both wheels), optional override=true to cancel an active
    disengagement.
error (server -> client): type="error", error, detail.
"""

from __future__ import annotations

import asyncio
import math
from contextlib import asynccontextmanager
from dataclasses import replace
from pathlib import Path

from fastapi import FastAPI, WebSocket, WebSocketDisconnect

from ..control import DisengageState
from ..neural import CLASS_NAMES
from .experiment import TELEMETRY_COLUMNS, RunSetup, Simulation
from .policies import ExternalPolicy

__all__ = ["SCHEMA_VERSION", "TAU_MAX", "SimSession", "build_app"]

SCHEMA_VERSION = 1
TAU_MAX = 30.0  # N*m per wheel accepted from a cockpit driver
PATH_DECIMATION = 5  # every 5th reference sample in the hello frame


def _clean(v):
    if isinstance(v, float) and math.isnan(v):
        return None
    return v


class SimSession:
    """Lockstep simulation session fed by external commands.

    The supplied setup's policy is replaced with an :class:`ExternalPolicy`;
    with no driver attached the human input stays (0, 0, 0) and the robot
    holds the reference on its own.
    """

    def __init__(self, setup: RunSetup, tau_max: float = TAU_MAX):
        self._external = ExternalPolicy()
        self.setup = replace(setup, policy=self._external)
        self.sim = Simulation(self.setup)
        self.tau_max = tau_max
        self._seq = 0
        self._clamped = False

    def hello(self, role: str = "viewer") -> dict:
        m = self.setup.mission
        cfg = self.setup.control
        path = m.samples[::PATH_DECIMATION, 1:3].tolist()
        return {
            "type": "hello",
            "version": SCHEMA_VERSION,
            "role": role,
            "limits": {
                "tau_max": self.tau_max,
                "v_max": cfg.v_max,
                "rate_hz": cfg.rate_hz,
                "dt": cfg.dt,
            },
            "mission": {"p0": list(m.p0), "pf": list(m.pf), "path": path},
            "grid": {
                "origin_x": m.bg.origin_x,
                "origin_y": m.bg.origin_y,
                "extent_x": m.bg.extent_x,
                "extent_y": m.bg.extent_y,
                "cell_size": m.bg.cell_size,
            },
            "cells": [
                {"cell": list(cell), "label": CLASS_NAMES[cls], "direction": direction}
                for cell, (cls, direction) in sorted(m.references.items())
            ],
            "columns": list(TELEMETRY_COLUMNS),
        }

    def submit_command(self, msg) -> dict | None:
        """Apply a driver command; returns an error frame if malformed."""
        if not isinstance(msg, dict) or msg.get("type") != "command":
            return _error("bad-frame", "expected a command frame")
        try:
            v = float(msg.get("v", 0.0))
            tau = float(msg.get("tau", 0.0))
        except (TypeError, ValueError):
            return _error("bad-frame", "v and tau must be numbers")
        if not (math.isfinite(v) and math.isfinite(tau)):
            return _error("bad-frame", "v and tau must be finite")
        v_c = min(max(v, 0.0), self.setup.control.v_max)
        tau_c = min(max(tau, -self.tau_max), self.tau_max)
        self._clamped = (v_c != v) or (tau_c != tau)
        self._external.push(v_c, tau_c, tau_c)
        if msg.get("override") and self.sim.ds.active:
            self.sim.ds = DisengageState()
            self.sim.events.append(
                {"time": self.sim.time, "event": "override-re-engage"}
            )
        return None

    def release(self) -> None:
        """Driver gone: fall back to zero human input."""
        self._external.push(0.0, 0.0, 0.0)

    def step(self) -> dict:
        row = self.sim.step()
        frame = {
            "type": "state",
            "version": SCHEMA_VERSION,
            "seq": self._seq,
            "clamped": self._clamped,
            "done": self.sim.done,
        }
        frame.update({k: _clean(v) for k, v in row.items()})
        self._seq += 1
        return frame


def _error(code: str, detail: str) -> dict:
    return {"type": "error", "version": SCHEMA_VERSION, "error": code, "detail": detail}


class _Hub:
    """Connected clients of one session; single writer (the pump task)."""

    def __init__(self, session: SimSession):
        self.session = session
        self.queues: dict[int, asyncio.Queue] = {}
        self.driver_id: int | None = None

    def broadcast(self, frame: dict) -> None:
        for q in self.queues.values():
            while q.full():  # latest-frame-wins coalescing
                try:
                    q.get_nowait()
                except asyncio.QueueEmpty:
                    break
            q.put_nowait(frame)


def build_app(session: SimSession, assets_dir=None, realtime: bool = True):
    """FastAPI app exposing ``/ws`` plus optional static cockpit assets.

    With ``realtime`` the pump task sleeps one control period between
    steps; without it the loop steps as fast as clients drain it (tests).
    """
    hub = _Hub(session)
    dt = session.setup.control.dt

    async def pump():
        while not session.sim.done:
            frame = session.step()
            hub.broadcast(frame)
            if realtime:
                await asyncio.sleep(dt)
            else:
                await asyncio.sleep(0)

    @asynccontextmanager
    async def lifespan(app):
        task = asyncio.create_task(pump())
        yield
        task.cancel()

    app = FastAPI(lifespan=lifespan)
    app.state.hub = hub

    @app.websocket("/ws")
    async def ws_endpoint(ws: WebSocket):
        role = ws.query_params.get("role", "viewer")
        await ws.accept()
        if role == "driver" and hub.driver_id is not None:
            await ws.send_json(_error("driver-conflict", "a driver is connected"))
            await ws.close()
            return
        cid = id(ws)
        q: asyncio.Queue = asyncio.Queue(maxsize=8)
        hub.queues[cid] = q
        if role == "driver":
            hub.driver_id = cid
        await ws.send_json(session.hello(role))

        async def sender():
            while True:
                await ws.send_json(await q.get())

        send_task = asyncio.create_task(sender())
        try:
            while True:
                try:
                    msg = await ws.receive_json()
                except ValueError:
                    await ws.send_json(_error("bad-frame", "invalid JSON"))
                    continue
                if role != "driver":
                    await ws.send_json(_error("view-only", "connect as driver"))
                    continue
                err = session.submit_command(msg)
                if err is not None:
                    await ws.send_json(err)
        except WebSocketDisconnect:
            pass
        finally:
            send_task.cancel()
            hub.queues.pop(cid, None)
            if hub.driver_id == cid:
                hub.driver_id = None
                session.release()

    if assets_dir is not None and Path(assets_dir).is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=str(assets_dir), html=True))
    return app
