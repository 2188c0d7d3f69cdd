"""WebSocket + HTTP surface over the runtime.

One process, one store, one runtime; a single asyncio lock serializes all
mutations, so handlers can stay synchronous. The WebSocket speaks the wire
protocol; HTTP exposes read-only documents. Both honor an optional shared
secret (header for HTTP, query parameter for WebSocket, since browsers
cannot set WebSocket headers).
"""

from __future__ import annotations

import asyncio
import logging
from dataclasses import dataclass
from typing import Any

from fastapi import FastAPI, HTTPException, Request, WebSocket, WebSocketDisconnect

from .engine import EngineError
from .runtime import CoachRuntime
from .wire import MessageType, WireError, WireMessage, parse_message, serialize_message

log = logging.getLogger(__name__)


@dataclass
class ServiceConfig:
    token: str | None = None
    auto_tick: bool = True
    tick_interval_s: float = 5.0  # how often the server samples the clock


def handle_frame(runtime: CoachRuntime, raw: str | bytes) -> tuple[WireMessage | None, list[WireMessage]]:
    """Parse and dispatch one inbound frame; never raises.

    Returns (parsed message or None, outbound messages). Protocol and engine
    failures come back as error messages so the connection survives them.
    """
    try:
        msg = parse_message(raw)
    except WireError as e:
        return None, [_error_message("", 0, e.code, e.detail)]
    try:
        out = dispatch(runtime, msg)
    except EngineError as e:
        return msg, [_session_error(runtime, msg, e.code, str(e))]
    except WireError as e:
        return msg, [_session_error(runtime, msg, e.code, e.detail)]
    except (KeyError, TypeError, ValueError) as e:
        return msg, [_session_error(runtime, msg, "malformed", f"{type(e).__name__}: {e}")]
    return msg, out


def _session_error(
    runtime: CoachRuntime, msg: WireMessage, code: str, detail: str
) -> WireMessage:
    """Error frame for a rejected operation. Rejected ops never reach the
    event log, so errors stay out of the resumable outbox and use seq 0;
    echo_seq ties them to the request they answer."""
    return _error_message(msg.session_id, 0, code, detail, echo_seq=msg.seq)


def dispatch(runtime: CoachRuntime, msg: WireMessage) -> list[WireMessage]:
    body = msg.body
    if msg.type is MessageType.SESSION_START:
        mode = body.get("mode", "game")
        return runtime.start_session(
            msg.session_id,
            scenario_id=body.get("scenario_id"),
            child_id=body.get("child_id", "default"),
            mode=mode,
            at=float(body.get("at", 0.0)),
        )
    if msg.type is MessageType.UTTERANCE_PUSH:
        return runtime.push_utterance(msg.session_id, body)
    if msg.type is MessageType.STAGE_ADVANCE:
        return runtime.advance_stage(msg.session_id, body.get("at"))
    if msg.type is MessageType.AGENT_INVOKE:
        return runtime.invoke_agent(msg.session_id, body.get("at"))
    if msg.type is MessageType.IMAGE_REQUEST:
        return runtime.request_image(msg.session_id, body.get("at"))
    if msg.type is MessageType.INTERVIEW_ANSWER:
        return runtime.answer_interview(
            msg.session_id, body["question_id"], body["text"], at=float(body.get("at", 0.0))
        )
    if msg.type is MessageType.SESSION_END:
        return runtime.end_session(msg.session_id, body.get("at"))
    raise WireError("unknown-type", f"{msg.type.value} is not a client message")


def _error_message(
    session_id: str, seq: int, code: str, message: str, *, echo_seq: int | None = None
) -> WireMessage:
    body: dict[str, Any] = {"code": code, "message": message}
    if echo_seq is not None:
        body["echo_seq"] = echo_seq
    return WireMessage(type=MessageType.ERROR, session_id=session_id or "-", seq=seq, body=body)


def create_app(runtime: CoachRuntime, config: ServiceConfig | None = None) -> FastAPI:
    config = config or ServiceConfig()
    app = FastAPI(title="embercoach", docs_url=None, redoc_url=None)
    app.state.runtime = runtime
    app.state.lock = asyncio.Lock()

    def check_http_auth(request: Request) -> None:
        if config.token is None:
            return
        supplied = request.headers.get("x-auth-token") or request.query_params.get("token")
        if supplied != config.token:
            raise HTTPException(status_code=401, detail="bad or missing token")

    @app.get("/api/health")
    async def health() -> dict[str, str]:
        return {"status": "ok"}

    @app.get("/api/scenarios")
    async def scenarios(request: Request) -> dict[str, Any]:
        check_http_auth(request)
        return {"scenarios": [s.to_dict() for s in runtime.registry.catalog.values()]}

    @app.get("/api/children/{child_id}/profile")
    async def child_profile(child_id: str, request: Request) -> dict[str, Any]:
        check_http_auth(request)
        path = runtime.store.profile_path(child_id)
        if not path.exists():
            raise HTTPException(status_code=404, detail=f"no profile for {child_id!r}")
        doc = runtime.store.read_json(path)
        doc.pop("applied_keys", None)  # internal bookkeeping
        return doc

    @app.get("/api/sessions/{session_id}/report")
    async def session_report(session_id: str, request: Request) -> dict[str, Any]:
        check_http_auth(request)
        path = runtime.store.report_path(session_id)
        if not path.exists():
            raise HTTPException(status_code=404, detail=f"no report for {session_id!r}")
        return runtime.store.read_json(path)

    @app.websocket("/ws")
    async def ws_endpoint(websocket: WebSocket) -> None:
        # Accept before closing so the 4401 travels as a real close frame;
        # closing an unaccepted socket turns into an HTTP 403 handshake
        # rejection and the client never learns why.
        await websocket.accept()
        if config.token is not None and websocket.query_params.get("token") != config.token:
            await websocket.close(code=4401)
            return

        # Reconnect resume: resend everything past the client's last ack.
        resume_sid = websocket.query_params.get("session_id")
        if resume_sid:
            last_seq = int(websocket.query_params.get("last_seq", 0))
            state = runtime.states.get(resume_sid)
            if state is not None:
                for msg in state.outbox:
                    if msg.seq > last_seq:
                        await websocket.send_text(serialize_message(msg))

        tick_tasks: dict[str, asyncio.Task] = {}

        async def tick_loop(session_id: str) -> None:
            loop = asyncio.get_running_loop()
            started = loop.time()
            try:
                while True:
                    state = runtime.states.get(session_id)
                    if state is None or state.closed:
                        return
                    elapsed = loop.time() - started
                    at = max(elapsed, state.engine.clock.now if state.engine else 0.0)
                    async with app.state.lock:
                        try:
                            out = runtime.tick(session_id, at)
                        except EngineError:
                            return
                    for msg in out:
                        await websocket.send_text(serialize_message(msg))
                    await asyncio.sleep(config.tick_interval_s)
            except (WebSocketDisconnect, RuntimeError):
                return

        try:
            while True:
                raw = await websocket.receive_text()
                async with app.state.lock:
                    msg, out = handle_frame(runtime, raw)
                for m in out:
                    await websocket.send_text(serialize_message(m))
                if (
                    config.auto_tick
                    and msg is not None
                    and msg.type is MessageType.SESSION_START
                    and msg.body.get("mode", "game") == "game"
                    and msg.session_id in runtime.states
                    and msg.session_id not in tick_tasks
                ):
                    tick_tasks[msg.session_id] = asyncio.create_task(tick_loop(msg.session_id))
        except WebSocketDisconnect:
            pass
        finally:
            for task in tick_tasks.values():
                task.cancel()

    return app
