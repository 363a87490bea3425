"""Guidance service: WebSocket session control plus datastore HTTP endpoints.

Message protocol (JSON text frames over one bidirectional socket):

  client -> server
    {"type": "create", "mode": "realtime"|"open_loop", "checkpoint": name,
     "seed": int, "goal": key?}            -> {"type": "created", ...}
    {"type": "instruction", "session": id, "text": str}
    {"type": "plan", "session": id, "texts": [str, ...]}
    {"type": "reset", "session": id, "seed": int}
    {"type": "subscribe", "session": id}

  server -> client
    {"type": "snapshot", "session", "tick", "state": [26 floats],
     "instruction", "status", "done"}      (broadcast every tick, 10 Hz)
    {"type": "created", "session", "mode"} (create acknowledgement)
    {"type": "ack", "session", "tick"}     (instruction/plan accepted)
    {"type": "heartbeat", "t": seconds}    (every second)
    {"type": "error", "message"}

HTTP endpoints serve episodes, frame ranges, relabel submission, and PNG
renders of stored frames and live sessions; the browser UI consumes
exactly these surfaces.
"""

from __future__ import annotations

import asyncio
import contextlib
import io
import json
import logging
import time
from pathlib import Path

import numpy as np
from fastapi import FastAPI, Response, WebSocket, WebSocketDisconnect
from fastapi.responses import FileResponse, JSONResponse
from fastapi.staticfiles import StaticFiles

from . import datastore, guidance, sim, tasks
from .expert import ExpertPolicy
from .policy import PolicyCheckpoint

log = logging.getLogger(__name__)

HEARTBEAT_SECONDS = 1.0


def _render_png(state: sim.BoardState) -> bytes:
    from PIL import Image

    buf = io.BytesIO()
    Image.fromarray(sim.render(state)).save(buf, format="PNG")
    return buf.getvalue()


class SessionHost:
    """Owns sessions and their 10 Hz tick loops; one asyncio loop, many
    sessions, instruction application at tick boundaries only."""

    def __init__(self, checkpoint_dir: Path | None,
                 config: sim.SimConfig = sim.DEFAULT_CONFIG):
        self.config = config
        self.checkpoint_dir = Path(checkpoint_dir) if checkpoint_dir else None
        self.sessions: dict[str, guidance.Session] = {}
        self.subscribers: dict[str, set] = {}
        self.tasks: dict[str, asyncio.Task] = {}
        self._checkpoints: dict[str, PolicyCheckpoint] = {}

    def _policy_for(self, name: str):
        if name == "expert":
            return None, ExpertPolicy(self.config), "expert"
        ckpt = self._checkpoints.get(name)
        if ckpt is None:
            path = Path(name)
            if not path.exists() and self.checkpoint_dir is not None:
                path = self.checkpoint_dir / name
                if not path.exists() and not name.endswith(".npz"):
                    path = self.checkpoint_dir / f"{name}.npz"
            if not path.exists():
                raise FileNotFoundError(f"no checkpoint named {name!r}")
            ckpt = self._checkpoints[name] = PolicyCheckpoint.load(path)
        return ckpt, None, ckpt.hash()

    def create(self, mode: str, checkpoint_name: str, seed: int,
               goal_key: str | None = None) -> guidance.Session:
        ckpt, policy, _ = self._policy_for(checkpoint_name)
        goal = None
        if goal_key:
            goal = guidance._goal_from_key(goal_key)
        session = guidance.create_session(ckpt, seed, mode, policy=policy, goal=goal,
                                          config=self.config)
        self.sessions[session.id] = session
        self.subscribers[session.id] = set()
        self.tasks[session.id] = asyncio.get_running_loop().create_task(
            self._run(session.id))
        return session

    def reset(self, session_id: str, seed: int) -> guidance.Session:
        old = self.sessions[session_id]
        fresh = guidance.create_session(None, seed, old.mode, policy=old.policy,
                                        goal=old.goal, config=self.config)
        fresh.id = session_id
        fresh.checkpoint_hash = old.checkpoint_hash
        old.status = "done"
        self.sessions[session_id] = fresh
        return fresh

    async def _run(self, session_id: str) -> None:
        loop = asyncio.get_running_loop()
        period = 1.0 / self.config.control_hz
        next_time = loop.time()
        while session_id in self.sessions:
            session = self.sessions[session_id]
            snap = guidance.tick(session)
            await self._broadcast(session_id, snap.to_message())
            next_time += period
            await asyncio.sleep(max(0.0, next_time - loop.time()))

    async def _broadcast(self, session_id: str, message: dict) -> None:
        dead = []
        for ws in self.subscribers.get(session_id, ()):
            try:
                await ws.send_text(json.dumps(message))
            except Exception:
                dead.append(ws)
        for ws in dead:
            self.subscribers[session_id].discard(ws)

    def close(self) -> None:
        for task in self.tasks.values():
            task.cancel()
        self.sessions.clear()


def build_app(data_dir=None, checkpoint_dir=None, ui_dir=None,
              config: sim.SimConfig = sim.DEFAULT_CONFIG) -> FastAPI:
    host = SessionHost(checkpoint_dir, config)

    @contextlib.asynccontextmanager
    async def lifespan(_app):
        yield
        host.close()

    app = FastAPI(title="langboard guidance service", lifespan=lifespan)
    store = datastore.EpisodeStore(data_dir) if data_dir else None
    app.state.host = host
    app.state.store = store

    def _episode_or_404(episode_id: str):
        if store is None:
            return None, JSONResponse({"error": "no datastore configured"}, status_code=503)
        try:
            return store.load(episode_id), None
        except FileNotFoundError:
            return None, JSONResponse({"error": f"no episode {episode_id!r}"}, status_code=404)
        except datastore.IntegrityError as e:
            return None, JSONResponse({"error": str(e)}, status_code=500)

    # -- datastore ----------------------------------------------------------

    @app.get("/episodes")
    def list_episodes():
        if store is None:
            return JSONResponse({"error": "no datastore configured"}, status_code=503)
        out = []
        for episode_id in store.ids():
            ep = store.load(episode_id)
            out.append({"id": ep.id, "frames": ep.n_frames, "control_hz": ep.control_hz,
                        "source": ep.source, "prompts": ep.prompts,
                        "demos": len(store.relabels(episode_id))})
        return {"episodes": out}

    @app.get("/episodes/{episode_id}")
    def episode_info(episode_id: str):
        ep, err = _episode_or_404(episode_id)
        if err:
            return err
        return {"id": ep.id, "frames": ep.n_frames, "control_hz": ep.control_hz,
                "source": ep.source, "prompts": ep.prompts}

    @app.get("/episodes/{episode_id}/frames")
    def episode_frames(episode_id: str, start: int = 0, end: int | None = None):
        ep, err = _episode_or_404(episode_id)
        if err:
            return err
        end = ep.n_frames if end is None else min(end, ep.n_frames)
        start = max(0, start)
        return {"frames": [
            {"tick": int(ep.ticks[t]), "state": ep.states[t].tolist(),
             "action": ep.actions[t].tolist()}
            for t in range(start, end)
        ]}

    @app.get("/episodes/{episode_id}/relabels")
    def episode_relabels(episode_id: str):
        if store is None:
            return JSONResponse({"error": "no datastore configured"}, status_code=503)
        return {"demos": [
            {"start": d.start_frame, "end": d.end_frame, "instruction": d.instruction,
             "horizon_tag": d.horizon_tag}
            for d in store.relabels(episode_id)
        ]}

    @app.post("/episodes/{episode_id}/relabels")
    async def post_relabel(episode_id: str, body: dict):
        ep, err = _episode_or_404(episode_id)
        if err:
            return err
        try:
            demo = store.add_relabel(ep, int(body["start"]), int(body["end"]),
                                     str(body["instruction"]),
                                     body.get("horizon_tag"))
        except (KeyError, ValueError) as e:
            return JSONResponse({"error": str(e)}, status_code=422)
        return {"demo": {"start": demo.start_frame, "end": demo.end_frame,
                         "instruction": demo.instruction,
                         "horizon_tag": demo.horizon_tag}}

    @app.get("/episodes/{episode_id}/frames/{frame}/image.png")
    def frame_image(episode_id: str, frame: int):
        ep, err = _episode_or_404(episode_id)
        if err:
            return err
        if not (0 <= frame < ep.n_frames):
            return JSONResponse({"error": "frame out of range"}, status_code=404)
        return Response(content=_render_png(ep.state_at(frame)), media_type="image/png")

    # -- sessions -----------------------------------------------------------

    @app.get("/sessions")
    def list_sessions():
        return {"sessions": [
            {"id": s.id, "mode": s.mode, "tick": s.tick_count, "status": s.status,
             "instruction": s.current_instruction}
            for s in host.sessions.values()
        ]}

    @app.get("/sessions/{session_id}/frame.png")
    def session_image(session_id: str):
        session = host.sessions.get(session_id)
        if session is None:
            return JSONResponse({"error": "no such session"}, status_code=404)
        return Response(content=_render_png(session.state), media_type="image/png")

    @app.get("/vocabulary")
    def vocabulary():
        """Template examples so UI users know what the policy was trained on."""
        rng = np.random.default_rng(0)
        conds = tasks.enumerate_conditions()
        picks = [tasks.sample_instruction(conds[int(i)], rng)
                 for i in rng.choice(len(conds), size=12, replace=False)]
        return {"examples": picks, "vocab_hash": tasks.VOCAB_HASH}

    # -- websocket ----------------------------------------------------------

    async def _heartbeat(ws: WebSocket):
        while True:
            await asyncio.sleep(HEARTBEAT_SECONDS)
            await ws.send_text(json.dumps({"type": "heartbeat", "t": time.time()}))

    @app.websocket("/ws")
    async def websocket_endpoint(ws: WebSocket):
        await ws.accept()
        beat = asyncio.get_running_loop().create_task(_heartbeat(ws))
        joined: set[str] = set()
        try:
            while True:
                raw = await ws.receive_text()
                try:
                    msg = json.loads(raw)
                except json.JSONDecodeError:
                    await ws.send_text(json.dumps({"type": "error",
                                                   "message": "not JSON"}))
                    continue
                try:
                    reply = await _handle(msg, ws, joined)
                except (guidance.UsageError, guidance.ValidationError,
                        tasks.UsageError, FileNotFoundError, KeyError) as e:
                    reply = {"type": "error", "message": str(e),
                             "request": msg.get("type")}
                if reply is not None:
                    await ws.send_text(json.dumps(reply))
        except WebSocketDisconnect:
            pass
        finally:
            beat.cancel()
            for session_id in joined:
                host.subscribers.get(session_id, set()).discard(ws)

    async def _handle(msg: dict, ws: WebSocket, joined: set[str]) -> dict | None:
        kind = msg.get("type")
        if kind == "create":
            session = host.create(msg.get("mode", "realtime"),
                                  msg.get("checkpoint", "expert"),
                                  int(msg.get("seed", 0)), msg.get("goal"))
            host.subscribers[session.id].add(ws)
            joined.add(session.id)
            return {"type": "created", "session": session.id, "mode": session.mode}
        if kind == "subscribe":
            session_id = msg["session"]
            if session_id not in host.sessions:
                return {"type": "error", "message": f"no session {session_id!r}"}
            host.subscribers[session_id].add(ws)
            joined.add(session_id)
            return {"type": "subscribed", "session": session_id}
        if kind == "instruction":
            session = host.sessions[msg["session"]]
            guidance.set_instruction(session, msg["text"])
            return {"type": "ack", "session": session.id, "tick": session.tick_count}
        if kind == "plan":
            session = host.sessions[msg["session"]]
            guidance.enqueue_plan(session, list(msg["texts"]))
            return {"type": "ack", "session": session.id, "tick": session.tick_count}
        if kind == "reset":
            session = host.reset(msg["session"], int(msg.get("seed", 0)))
            return {"type": "reset", "session": session.id, "tick": session.tick_count}
        return {"type": "error", "message": f"unknown message type {kind!r}"}

    # -- static UI ----------------------------------------------------------

    if ui_dir and Path(ui_dir).exists():
        ui_path = Path(ui_dir)

        @app.get("/")
        def index():
            return FileResponse(ui_path / "index.html")

        app.mount("/ui", StaticFiles(directory=str(ui_path)), name="ui")

    return app


def serve(host_addr: str = "127.0.0.1", port: int = 8787, data_dir=None,
          checkpoint_dir=None, ui_dir=None,
          config: sim.SimConfig = sim.DEFAULT_CONFIG) -> None:
    """Run the guidance service until interrupted."""
    import uvicorn

    app = build_app(data_dir=data_dir, checkpoint_dir=checkpoint_dir, ui_dir=ui_dir,
                    config=config)
    uvicorn.run(app, host=host_addr, port=port, log_level="warning")
