"""HTTP/JSON facade over the session manager, with a server-sent event
stream for asynchronously arriving previews, assessments, and highlight
updates.

The API layer holds no state of its own: every state-changing response is
the session manager's post-state serialization. Error mapping is
deterministic (table in docs/api.md): unknown resources are 404, body
validation failures are 422, lifecycle violations are 409, backend
failures are 502, and missing/malformed body fields are 400.
"""
from __future__ import annotations

import asyncio
import json
import logging
from collections import deque
from dataclasses import dataclass

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse, StreamingResponse

from .alternatives import AlternativePreview
from .analysis import (
    AssessmentService,
    HeuristicAnalyzer,
    RemoteAnalyzer,
    truncate_summary,
)
from .config import ServiceConfig
from .errors import (
    BackendError,
    BoundsError,
    InvalidAlternativeError,
    ProtocolError,
    SelectionFailedError,
    StateError,
    TokensteerError,
    TraceError,
    UnknownSessionError,
    UnknownStepError,
)
from .gateway import HttpCompletionClient
from .scripted import ScriptedBackend
from .session import Session, SessionManager

log = logging.getLogger("tokensteer.service")

EVENT_BUFFER_SIZE = 256
STREAM_END = "stream-end"

_STATUS_BY_ERROR: list[tuple[type, int]] = [
    (UnknownSessionError, 404),
    (UnknownStepError, 404),
    (InvalidAlternativeError, 422),
    (BoundsError, 422),
    (StateError, 409),
    (SelectionFailedError, 502),
    (BackendError, 502),
    (ProtocolError, 502),
    (TraceError, 502),
]


def _error_status(exc: TokensteerError) -> int:
    for etype, status in _STATUS_BY_ERROR:
        if isinstance(exc, etype):
            return status
    return 500


@dataclass(frozen=True)
class BufferedEvent:
    event_id: int
    kind: str
    payload: dict

    def sse(self) -> str:
        data = json.dumps(self.payload, ensure_ascii=False)
        return f"id: {self.event_id}\nevent: {self.kind}\ndata: {data}\n\n"


class EventBroker:
    """Per-session ring buffer plus wakeups for attached SSE streams."""

    def __init__(self, buffer_size: int = EVENT_BUFFER_SIZE):
        self._buffer_size = buffer_size
        self._buffers: dict[str, deque[BufferedEvent]] = {}
        self._counters: dict[str, int] = {}
        self._signals: dict[str, asyncio.Event] = {}
        self._closed: set[str] = set()

    def _signal(self, session_id: str) -> asyncio.Event:
        if session_id not in self._signals:
            self._signals[session_id] = asyncio.Event()
        return self._signals[session_id]

    def publish(self, session_id: str, kind: str, payload: dict) -> None:
        if kind == "session-finalized":
            self._append(session_id, STREAM_END, payload)
            self._closed.add(session_id)
        else:
            self._append(session_id, kind, payload)

    def _append(self, session_id: str, kind: str, payload: dict) -> None:
        buf = self._buffers.setdefault(session_id, deque(maxlen=self._buffer_size))
        self._counters[session_id] = self._counters.get(session_id, 0) + 1
        buf.append(BufferedEvent(self._counters[session_id], kind, payload))
        self._signal(session_id).set()

    def closed(self, session_id: str) -> bool:
        return session_id in self._closed

    def since(self, session_id: str, last_id: int) -> list[BufferedEvent]:
        return [e for e in self._buffers.get(session_id, ()) if e.event_id > last_id]

    async def stream(self, session_id: str, last_id: int, once: bool):
        cursor = last_id
        while True:
            pending = self.since(session_id, cursor)
            for event in pending:
                cursor = event.event_id
                yield event.sse()
                if event.kind == STREAM_END:
                    return
            if once:
                return
            signal = self._signal(session_id)
            signal.clear()
            if self.since(session_id, cursor):
                continue
            await signal.wait()


def serialize_annotation(ann) -> dict:
    return {
        "step_index": ann.step_index,
        "corrected_entropy": ann.corrected_entropy,
        "highlighted": ann.highlighted,
        "intensity": ann.intensity,
        "visible": ann.visible,
    }


def serialize_session(manager: SessionManager, session: Session) -> dict:
    current = session.current
    out: dict = {
        "session_id": session.session_id,
        "status": session.status,
        "document": session.context.document,
        "cursor_offset": len(session.context.prefix),
        "language_hint": session.context.language_hint,
        "history": {
            "cursor": session.cursor,
            "length": len(session.history),
            "can_back": session.can_back,
            "can_forward": session.can_forward,
        },
        "completion": None,
    }
    if current is not None:
        steps = []
        for step in current.completion.steps:
            i = step.step_index
            expansion = current.expansions.get(i)
            steps.append(
                {
                    "step_index": i,
                    "token": step.chosen.text,
                    "probability": step.chosen.prob,
                    "n_alternatives": len(step.alternatives),
                    "choice_point": i in current.choice_points,
                    "alternatives_status": (
                        "settled" if (expansion is None or expansion.settled) else "pending"
                    ),
                    "annotation": serialize_annotation(current.annotations[i]),
                }
            )
        out["completion"] = {
            "text": current.completion.text,
            "finish_reason": current.completion.finish_reason,
            "steps": steps,
        }
    return out


def serialize_entry(manager: SessionManager, entry: AlternativePreview) -> dict:
    assessment = None
    summary_comment = None
    if entry.assessment is not None:
        assessment = {
            "detailed_explanation": entry.assessment.detailed_explanation,
            "summary": entry.assessment.summary,
            "category": entry.assessment.category,
            "importance_score": entry.assessment.importance_score,
        }
        summary_comment = truncate_summary(
            entry.assessment.summary, manager.summary_columns
        )
    return {
        "alt_rank": entry.alt_rank,
        "token_text": entry.token_text,
        "probability": entry.probability,
        "preview": entry.preview,
        "preview_status": entry.preview_status,
        "assessment": assessment,
        "assessment_status": entry.assessment_status,
        "flagged_incorrect": entry.flagged_incorrect,
        "summary_comment": summary_comment,
    }


def build_runtime(cfg: ServiceConfig) -> SessionManager:
    """Assemble backends, analyzer, and session manager from a validated config."""
    if cfg.scripted_dir:
        client = ScriptedBackend.from_dir(cfg.scripted_dir)
    else:
        client = HttpCompletionClient(
            cfg.completion.base_url,
            api_key_env=cfg.completion.api_key_env or None,
            endpoint=cfg.completion.endpoint or "/completions",
            completion_timeout=cfg.completion_timeout,
            preview_timeout=cfg.preview_timeout,
            fanout_cap=cfg.fanout_cap,
            regeneration_temperature=cfg.regeneration_temperature,
        )
    if cfg.analyzer_mode == "remote":
        analyzer = RemoteAnalyzer(
            cfg.analysis.base_url,
            endpoint=cfg.analysis.endpoint or "/chat/completions",
            prompt_path=cfg.prompt_path or None,
        )
    else:
        analyzer = HeuristicAnalyzer()
    assessments = AssessmentService(analyzer, cap=cfg.assessment_cap)
    return SessionManager(
        client,
        assessments,
        params=cfg.generation_params(),
        highlight_cfg=cfg.highlight_config(),
        log_dir=cfg.log_dir or None,
        summary_columns=cfg.summary_columns,
    )


async def _body(request: Request) -> dict:
    try:
        body = await request.json()
    except (json.JSONDecodeError, ValueError):
        raise _Abort(400, "request body must be a JSON object") from None
    if not isinstance(body, dict):
        raise _Abort(400, "request body must be a JSON object")
    return body


class _Abort(Exception):
    def __init__(self, status: int, message: str):
        self.status = status
        self.message = message


def _field(body: dict, name: str, ftype, status: int = 400):
    if name not in body:
        raise _Abort(status, f"missing required field {name!r}")
    value = body[name]
    if ftype is int and isinstance(value, bool) or not isinstance(value, ftype):
        raise _Abort(status, f"field {name!r} must be {getattr(ftype, '__name__', ftype)}")
    return value


def create_app(manager: SessionManager, broker: EventBroker | None = None) -> FastAPI:
    app = FastAPI(title="tokensteer", docs_url=None, redoc_url=None)
    broker = broker or EventBroker()
    manager.on_push = broker.publish

    @app.exception_handler(_Abort)
    async def abort_handler(request: Request, exc: _Abort):
        return JSONResponse(status_code=exc.status, content={"error": exc.message})

    @app.exception_handler(TokensteerError)
    async def engine_error_handler(request: Request, exc: TokensteerError):
        status = _error_status(exc)
        log.warning("request failed (%s): %s", type(exc).__name__, exc)
        return JSONResponse(
            status_code=status,
            content={"error": str(exc), "kind": type(exc).__name__},
        )

    @app.post("/sessions", status_code=201)
    async def create_session(request: Request):
        body = await _body(request)
        document = _field(body, "document", str)
        cursor_offset = _field(body, "cursor_offset", int)
        language_hint = body.get("language_hint", "")
        if not isinstance(language_hint, str):
            raise _Abort(400, "field 'language_hint' must be str")
        session = manager.create_session(document, cursor_offset, language_hint)
        log.info("session %s created", session.session_id)
        return serialize_session(manager, session)

    @app.get("/sessions/{session_id}")
    async def get_session(session_id: str):
        return serialize_session(manager, manager.get(session_id))

    @app.post("/sessions/{session_id}/complete")
    async def complete(session_id: str, wait: int = 0):
        await manager.run_completion(session_id)
        if wait:
            await manager.wait_settled(session_id)
        return serialize_session(manager, manager.get(session_id))

    @app.get("/sessions/{session_id}/steps/{step_index}/alternatives")
    async def alternatives(session_id: str, step_index: int):
        try:
            entries = await manager.expand_alternatives(session_id, step_index)
        except UnknownStepError as exc:
            # Path segment points at a missing resource.
            raise _Abort(404, str(exc)) from exc
        return {
            "step_index": step_index,
            "entries": [serialize_entry(manager, e) for e in entries],
        }

    @app.post("/sessions/{session_id}/select")
    async def select(session_id: str, request: Request, wait: int = 0):
        body = await _body(request)
        step_index = _field(body, "step_index", int)
        alt_rank = _field(body, "alt_rank", int)
        await manager.select_alternative(session_id, step_index, alt_rank)
        if wait:
            await manager.wait_settled(session_id)
        return serialize_session(manager, manager.get(session_id))

    @app.post("/sessions/{session_id}/hide")
    async def hide(session_id: str, request: Request):
        body = await _body(request)
        step_index = _field(body, "step_index", int)
        await manager.hide_highlight(session_id, step_index)
        return serialize_session(manager, manager.get(session_id))

    @app.post("/sessions/{session_id}/navigate")
    async def navigate(session_id: str, request: Request):
        body = await _body(request)
        direction = _field(body, "direction", str)
        _, noop = await manager.navigate(session_id, direction)
        out = serialize_session(manager, manager.get(session_id))
        out["noop"] = noop
        return out

    @app.post("/sessions/{session_id}/finalize")
    async def finalize(session_id: str, request: Request):
        body = await _body(request)
        action = _field(body, "action", str)
        final_text = await manager.finalize(session_id, action)
        out = serialize_session(manager, manager.get(session_id))
        out["final_text"] = final_text
        return out

    @app.get("/sessions/{session_id}/events")
    async def events(session_id: str, request: Request, once: int = 0, last_event_id: int = -1):
        manager.get(session_id)  # 404 on unknown sessions
        if last_event_id < 0:
            header = request.headers.get("last-event-id")
            last_event_id = int(header) if header and header.isdigit() else 0
        return StreamingResponse(
            broker.stream(session_id, last_event_id, once=bool(once)),
            media_type="text/event-stream",
            headers={"Cache-Control": "no-store"},
        )

    return app


def create_app_from_config(cfg: ServiceConfig) -> FastAPI:
    return create_app(build_runtime(cfg))
