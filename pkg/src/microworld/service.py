"""HTTP/WebSocket surface of the annotation session engine (all under /v1).

Per-session commands are serialized by an asyncio lock; a watcher on the
WebSocket stream receives {observation, delta, step} after every executed
command.  All world semantics live in the session core; this layer only
translates errors and broadcasts.
"""

from __future__ import annotations

import asyncio
import json

from fastapi import FastAPI, Query, WebSocket, WebSocketDisconnect
from fastapi.responses import JSONResponse, PlainTextResponse

from . import language
from .session import (
    InvalidConfig,
    SessionConfig,
    SessionNotFound,
    SessionStore,
    program_line,
    state_digest,
)
from .world import PreconditionViolation


def _error_payload(kind: str, message: str, hints=None) -> dict:
    payload = {"error": {"type": kind, "message": message}}
    if hints is not None:
        payload["hints"] = hints
    return payload


def create_app(data_dir: str | None = None) -> FastAPI:
    app = FastAPI(title="microworld annotation service", version="1")
    store = SessionStore(data_dir)
    locks: dict = {}
    watchers: dict = {}
    app.state.store = store

    def lock_for(session_id: str) -> asyncio.Lock:
        lock = locks.get(session_id)
        if lock is None:
            lock = locks[session_id] = asyncio.Lock()
        return lock

    async def broadcast(session_id: str, message: dict) -> None:
        for queue in watchers.get(session_id, ()):
            await queue.put(message)

    @app.exception_handler(SessionNotFound)
    async def _not_found(request, exc):
        return JSONResponse(
            _error_payload("session_not_found", str(exc)), status_code=404
        )

    @app.exception_handler(InvalidConfig)
    async def _bad_config(request, exc):
        return JSONResponse(_error_payload("invalid_config", str(exc)), status_code=400)

    @app.post("/v1/sessions")
    async def create_session(body: dict):
        config = SessionConfig.from_dict(body)
        session = store.create(config)
        return {
            "id": session.id,
            "observation": session.summary(),
            "segments": list(config.segments),
            "acting_agent": config.acting_agent,
        }

    @app.get("/v1/sessions/{session_id}/state")
    async def get_state(session_id: str):
        session = store.get(session_id)
        covered = sorted(
            {s.segment for s in session.steps if s.segment is not None}
        )
        return {
            "id": session.id,
            "state": session.state.to_dict(),
            "digest": state_digest(session.state),
            "summary": session.summary(),
            "goal_reached": session.goal_reached(),
            "steps": len(session.steps),
            "segments": list(session.config.segments),
            "covered_segments": covered,
        }

    @app.get("/v1/sessions/{session_id}/legal")
    async def get_legal(session_id: str):
        session = store.get(session_id)
        actions = session.config.world.legal_actions(session.state)
        return {
            "commands": session.legal_commands(limit=50),
            "actions": [program_line(a) for a in actions],
        }

    @app.post("/v1/sessions/{session_id}/command")
    async def post_command(session_id: str, body: dict):
        text = body.get("text", "")
        segment = body.get("segment")
        async with lock_for(session_id):
            session = store.get(session_id)
            try:
                result = store.execute(session_id, text, segment)
            except language.LanguageError as e:
                return JSONResponse(
                    _error_payload(
                        "parse_error", str(e), hints=session.legal_commands()
                    ),
                    status_code=400,
                )
            except PreconditionViolation as e:
                return JSONResponse(
                    _error_payload(
                        "precondition_violation",
                        e.reason,
                        hints=session.legal_commands(),
                    ),
                    status_code=400,
                )
            await broadcast(
                session_id,
                {
                    "observation": result["observation"],
                    "delta": result["delta"],
                    "step": result["step"],
                    "goal_reached": result["goal_reached"],
                },
            )
            return result

    @app.get("/v1/sessions/{session_id}/trace")
    async def get_trace(session_id: str, format: str = Query("trace-jsonl")):
        session = store.get(session_id)
        if format == "trace-jsonl":
            body = "".join(line + "\n" for line in session.export("trace-jsonl"))
            return PlainTextResponse(body, media_type="application/jsonl")
        if format == "action-graph":
            return session.export("action-graph")
        if format == "program":
            return PlainTextResponse(session.export("program"), media_type="text/plain")
        return JSONResponse(
            _error_payload("bad_format", f"unknown trace format {format!r}"),
            status_code=400,
        )

    @app.websocket("/v1/sessions/{session_id}/stream")
    async def stream(websocket: WebSocket, session_id: str):
        await websocket.accept()
        try:
            store.get(session_id)
        except SessionNotFound:
            await websocket.close(code=4404)
            return
        queue: asyncio.Queue = asyncio.Queue()
        watchers.setdefault(session_id, set()).add(queue)
        try:
            while True:
                message = await queue.get()
                await websocket.send_text(json.dumps(message))
        except WebSocketDisconnect:
            pass
        finally:
            watchers[session_id].discard(queue)

    return app
