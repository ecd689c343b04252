"""Live wire service: pose-stream ingest, jury console channel, audit logs.

Endpoints (all JSON messages, one object per websocket message):
  /ingest  client streams pose-frame lines; each decision is appended to the
           per-match decision log (fsync) and broadcast before the next
           frame of that stream is processed.
  /jury    server pushes decision envelopes; client sends verdicts and gets
           an ack or a nack with a reason.
  /health  liveness plus session count and active model version.
"""

from __future__ import annotations

import asyncio
import json
import os
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from fastapi import FastAPI, WebSocket, WebSocketDisconnect

from .core import PipelineConfig
from .tracking import FilterParams
from .action import ClassifierModel, RULE_BASED_MODEL
from .feedback import (
    AUTO_FINAL_TIMEOUT_S,
    DecisionResolver,
    FeedbackLog,
    FeedbackSample,
    FinalRecord,
    JuryVerdict,
    VerdictError,
)
from .impact import DecisionPackage
from .pipeline import MatchPipeline


@dataclass
class ServiceSettings:
    log_dir: Path = Path("logs")
    config: PipelineConfig = field(default_factory=PipelineConfig)
    filter_params: FilterParams = field(default_factory=FilterParams)
    model: ClassifierModel = RULE_BASED_MODEL
    auto_final_timeout_s: float = AUTO_FINAL_TIMEOUT_S
    sweep_interval_s: float = 0.5
    ui_dir: Optional[Path] = None


class _JsonlAppender:
    """Append-only JSONL file, fsynced per line so a crash never leaves a
    partial record behind."""

    def __init__(self, path: Path):
        self.path = path
        self.count = 0

    def append(self, doc: dict) -> None:
        line = json.dumps(doc, separators=(",", ":"))
        with open(self.path, "a", encoding="utf-8") as f:
            f.write(line + "\n")
            f.flush()
            os.fsync(f.fileno())
        self.count += 1


class MatchSession:
    """Serialized processing context for one match."""

    def __init__(self, match_id: str, settings: ServiceSettings):
        self.match_id = match_id
        self.pipeline = MatchPipeline(
            match_id,
            config=settings.config,
            filter_params=settings.filter_params,
            model=settings.model,
        )
        self.resolver = DecisionResolver(timeout_s=settings.auto_final_timeout_s)
        self.lock = asyncio.Lock()
        self.decision_log = _JsonlAppender(settings.log_dir / f"decisions-{match_id}.jsonl")
        self.finals_log = _JsonlAppender(settings.log_dir / f"finals-{match_id}.jsonl")
        self.feedback_log = FeedbackLog(settings.log_dir / f"feedback-{match_id}.jsonl")
        self.ingest_connections = 0


class ServiceState:
    def __init__(self, settings: ServiceSettings):
        settings.log_dir.mkdir(parents=True, exist_ok=True)
        self.settings = settings
        self.sessions: dict[str, MatchSession] = {}
        self.consoles: dict[WebSocket, Optional[str]] = {}  # ws -> match scope
        self.stream_owners: dict[tuple[str, str], int] = {}  # (match, athlete) -> conn id
        self._conn_seq = 0

    def session_for(self, match_id: str) -> MatchSession:
        session = self.sessions.get(match_id)
        if session is None:
            session = MatchSession(match_id, self.settings)
            self.sessions[match_id] = session
        return session

    def next_conn_id(self) -> int:
        self._conn_seq += 1
        return self._conn_seq

    async def broadcast(self, doc: dict, match_id: str) -> None:
        dead = []
        payload = json.dumps(doc, separators=(",", ":"))
        for ws, scope in list(self.consoles.items()):
            if scope is not None and scope != match_id:
                continue
            try:
                await ws.send_text(payload)
            except Exception:
                dead.append(ws)
        for ws in dead:
            self.consoles.pop(ws, None)

    async def emit_decision(self, session: MatchSession, decision: DecisionPackage) -> None:
        # Log first, broadcast second: the audit trail is the source of truth.
        session.decision_log.append(decision.to_wire())
        session.resolver.add(decision, emitted_at=time.monotonic())
        envelope = {"type": "decision", "match": session.match_id, "decision": decision.to_wire()}
        artifacts = session.pipeline.artifacts_for(decision.event_id)
        if artifacts is not None:
            envelope["playback"] = session.pipeline.playback_payload(artifacts[0])
        await self.broadcast(envelope, session.match_id)

    async def emit_final(self, session: MatchSession, record: FinalRecord) -> None:
        session.finals_log.append(record.to_wire())
        await self.broadcast(
            {"type": "final", "match": session.match_id, "final": record.to_wire()},
            session.match_id,
        )

    def log_feedback(self, session: MatchSession, record: FinalRecord) -> None:
        """Turn a human verdict into a training sample (confirms included)."""
        artifacts = session.pipeline.artifacts_for(record.event_id)
        if artifacts is None:
            return
        window, probs = artifacts
        sample = FeedbackSample.build(
            window.features, probs, record.action_class, record.event_id,
            record.model_version,
        )
        session.feedback_log.append(sample)

    async def sweep_expired(self) -> None:
        now = time.monotonic()
        for session in list(self.sessions.values()):
            async with session.lock:
                expired = session.resolver.expire(now)
            for _, record in expired:
                await self.emit_final(session, record)


def create_app(settings: Optional[ServiceSettings] = None) -> FastAPI:
    settings = settings or ServiceSettings()
    state = ServiceState(settings)

    from contextlib import asynccontextmanager

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        async def sweeper():
            while True:
                await asyncio.sleep(settings.sweep_interval_s)
                await state.sweep_expired()

        task = asyncio.create_task(sweeper())
        try:
            yield
        finally:
            task.cancel()

    app = FastAPI(title="kickjudge", lifespan=lifespan)
    app.state.service = state

    @app.get("/health")
    async def health():
        return {
            "status": "ok",
            "sessions": len(state.sessions),
            "model_version": settings.model.version,
        }

    @app.websocket("/ingest")
    async def ingest(ws: WebSocket):
        await ws.accept()
        conn_id = state.next_conn_id()
        owned: set[tuple[str, str]] = set()
        joined: set[str] = set()
        try:
            while True:
                text = await ws.receive_text()
                for line in text.splitlines():
                    line = line.strip()
                    if not line:
                        continue
                    try:
                        probe = json.loads(line)
                        match_id = str(probe["match"])
                        athlete_id = str(probe["athlete"])
                    except (json.JSONDecodeError, KeyError, TypeError):
                        # Attribute unparseable lines to the first session this
                        # connection joined, if any; otherwise just drop them.
                        for m in joined:
                            state.sessions[m].pipeline.malformed_lines += 1
                            break
                        continue
                    key = (match_id, athlete_id)
                    owner = state.stream_owners.get(key)
                    if owner is None:
                        state.stream_owners[key] = conn_id
                        owned.add(key)
                        session = state.session_for(match_id)
                        if match_id not in joined:
                            session.ingest_connections += 1
                            joined.add(match_id)
                    elif owner != conn_id:
                        await ws.send_text(json.dumps(
                            {"type": "error", "reason": "stream_already_connected",
                             "match": match_id, "athlete": athlete_id}
                        ))
                        await ws.close(code=1008)
                        return
                    session = state.session_for(match_id)
                    async with session.lock:
                        decisions = session.pipeline.process_line(line)
                        for decision in decisions:
                            await self_emit(session, decision)
        except WebSocketDisconnect:
            pass
        finally:
            for key in owned:
                state.stream_owners.pop(key, None)
            for match_id in joined:
                session = state.sessions.get(match_id)
                if session is None:
                    continue
                session.ingest_connections -= 1
                if session.ingest_connections <= 0:
                    async with session.lock:
                        for decision in session.pipeline.flush():
                            await self_emit(session, decision)

    async def self_emit(session: MatchSession, decision: DecisionPackage) -> None:
        await state.emit_decision(session, decision)

    @app.websocket("/jury")
    async def jury(ws: WebSocket):
        await ws.accept()
        scope = ws.query_params.get("match")
        state.consoles[ws] = scope
        try:
            while True:
                text = await ws.receive_text()
                try:
                    doc = json.loads(text)
                except json.JSONDecodeError:
                    await ws.send_text(json.dumps(
                        {"type": "nack", "event": None, "reason": "bad_message"}
                    ))
                    continue
                event_id = doc.get("event")
                try:
                    verdict = JuryVerdict.from_wire(doc)
                except (VerdictError, ValueError) as exc:
                    reason = exc.reason if isinstance(exc, VerdictError) else "bad_message"
                    await ws.send_text(json.dumps(
                        {"type": "nack", "event": event_id, "reason": reason}
                    ))
                    continue
                session = _find_session(state, scope, verdict.event_id)
                if session is None:
                    await ws.send_text(json.dumps(
                        {"type": "nack", "event": event_id, "reason": "unknown_event"}
                    ))
                    continue
                try:
                    async with session.lock:
                        record = session.resolver.resolve(verdict, now=time.monotonic())
                        state.log_feedback(session, record)
                except VerdictError as exc:
                    await ws.send_text(json.dumps(
                        {"type": "nack", "event": event_id, "reason": exc.reason}
                    ))
                    continue
                await ws.send_text(json.dumps(
                    {"type": "ack", "event": event_id, "final": record.to_wire()}
                ))
                await state.emit_final(session, record)
        except WebSocketDisconnect:
            pass
        finally:
            state.consoles.pop(ws, None)

    ui_dir = settings.ui_dir
    if ui_dir is None:
        candidate = Path("frontend/dist")
        ui_dir = candidate if candidate.is_dir() else None
    if ui_dir is not None and Path(ui_dir).is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/ui", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app


def _find_session(state: ServiceState, scope: Optional[str], event_id: str):
    if scope is not None:
        return state.sessions.get(scope)
    for session in state.sessions.values():
        if event_id in session.resolver.pending_events():
            return session
        if session.resolver.get_final(event_id) is not None:
            return session
    return None


def serve(settings: ServiceSettings, host: str = "127.0.0.1", port: int = 8700) -> None:
    import uvicorn

    app = create_app(settings)
    uvicorn.run(app, host=host, port=port, log_level="warning")
