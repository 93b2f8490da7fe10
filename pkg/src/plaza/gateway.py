"""Network face of the server: token auth, REST configuration and
participation endpoints, and the per-instance real-time event stream.

The stream delivers every event seq from `from_seq` onward with no gaps or
duplicates; payloads are viewer-filtered (another user's popup payload and
deleted content bodies are redacted, the seq itself is always delivered).
Endpoint table and WireEvent schema are documented in docs/api.md.
"""

from __future__ import annotations

import asyncio
import io
from contextlib import asynccontextmanager
import json
import logging
import threading
import zipfile
from typing import Optional

from fastapi import Depends, FastAPI, Query, Request, Response, WebSocket, WebSocketDisconnect
from fastapi.responses import JSONResponse

from .auth import AuthService
from .bundle import instantiate_bundle
from .clock import Clock
from .errors import (
    AuthenticationError,
    AuthorizationError,
    BannedError,
    CapacityError,
    InvalidParentError,
    KindMismatchError,
    NotFoundError,
    PlazaError,
    ReactionNotAllowedError,
    SessionClosedError,
    ValidationFailure,
)
from .export import EVENT_COLUMNS, dump_json, export_instance_doc, write_bundle
from .models import (
    AccountRole,
    ContentItem,
    ContentKind,
    EventKind,
    InstanceState,
    SessionEvent,
    UserAccount,
)
from .orchestrator import Orchestrator
from .store import Store, event_to_dict

logger = logging.getLogger(__name__)

WIRE_VERSION = 1

_STATUS = {
    AuthenticationError: 401,
    AuthorizationError: 403,
    NotFoundError: 404,
    ValidationFailure: 422,
    BannedError: 403,
    SessionClosedError: 409,
    KindMismatchError: 422,
    InvalidParentError: 422,
    ReactionNotAllowedError: 422,
    CapacityError: 409,
}


def wire_event(event: SessionEvent, viewer: UserAccount, store: Store) -> dict:
    """Viewer-filtered JSON rendering of a session event."""
    payload = dict(event.payload)
    researcher = viewer.account_role == AccountRole.RESEARCHER
    if event.kind == EventKind.MODERATION_POPUP and not researcher:
        if payload.get("target_user_id") != viewer.id:
            payload = {}  # seq delivered, payload withheld from non-addressees
    if event.kind in (EventKind.CONTENT_CREATED, EventKind.SCRIPT_RELEASED) and not researcher:
        item = store.content_of(event.instance_id).get(payload.get("item_id", ""))
        if item is not None and item.deleted_at is not None:
            payload["body"] = ""
            payload["deleted"] = True
    return {
        "v": WIRE_VERSION,
        "seq": event.seq,
        "at": event.at,
        "kind": event.kind.value,
        "payload": payload,
    }


def item_view(item: ContentItem, researcher: bool) -> dict:
    view = {
        "id": item.id,
        "content_kind": item.content_kind.value,
        "parent_id": item.parent_id,
        "author_user_id": item.author_user_id,
        "body": item.body,
        "media": list(item.media),
        "flair": item.flair,
        "created_at": item.created_at,
        "flags": [{"rule_id": f.rule_id, "label": f.label_text, "at": f.at} for f in item.flags],
        "engagement": {
            "likes": item.engagement.likes,
            "upvotes": item.engagement.upvotes,
            "downvotes": item.engagement.downvotes,
            "shares": item.engagement.shares,
            "reactions": dict(item.engagement.reactions),
        },
    }
    if researcher:
        view["source_role"] = item.source_role.value
        view["deleted_at"] = item.deleted_at
    return view


def create_app(
    store: Store,
    orchestrator: Orchestrator,
    auth: AuthService,
    clock: Clock,
    tick_ms: int = 100,
    run_ticker: bool = True,
) -> FastAPI:
    stop_flag = threading.Event()

    def ticker() -> None:
        while not stop_flag.wait(tick_ms / 1000):
            try:
                orchestrator.tick(clock.now_ms())
            except Exception:
                logger.exception("tick failed")

    @asynccontextmanager
    async def lifespan(_app: FastAPI):
        if run_ticker:
            thread = threading.Thread(target=ticker, name="plaza-ticker", daemon=True)
            thread.start()
        yield
        stop_flag.set()
        store.close()

    app = FastAPI(title="plaza", docs_url=None, redoc_url=None, lifespan=lifespan)

    @app.exception_handler(PlazaError)
    def _domain_error(_request: Request, exc: PlazaError):
        status = 400
        for klass, code in _STATUS.items():
            if isinstance(exc, klass):
                status = code
                break
        body = {"error": type(exc).__name__, "detail": str(exc)}
        if isinstance(exc, ValidationFailure):
            body["violations"] = exc.violations
        return JSONResponse(status_code=status, content=body)

    def current_user(request: Request) -> UserAccount:
        header = request.headers.get("authorization", "")
        token = header.removeprefix("Bearer ").strip()
        if not token:
            token = request.query_params.get("token", "")
        return auth.resolve(token, clock.now_ms())

    def require_researcher(user: UserAccount = Depends(current_user)) -> UserAccount:
        if user.account_role != AccountRole.RESEARCHER:
            raise AuthorizationError("researcher role required")
        return user

    # --- auth ---------------------------------------------------------

    @app.post("/api/auth/login")
    async def login(body: dict):
        token = auth.authenticate(body.get("email", ""), body.get("password", ""), clock.now_ms())
        return {
            "token": token.token,
            "user_id": token.user_id,
            "role": token.role.value,
            "expires_at": token.expires_at,
        }

    # --- admin --------------------------------------------------------

    @app.post("/api/experiments", status_code=201)
    async def create_experiment(body: dict, user: UserAccount = Depends(require_researcher)):
        loaded = instantiate_bundle(store, body)
        store.flush()
        experiment = store.experiments[loaded.experiment_id]
        return {"experiment_id": experiment.id, "template_ids": experiment.template_ids}

    @app.get("/api/experiments")
    async def list_experiments(user: UserAccount = Depends(current_user)):
        out = []
        for e in store.experiments.values():
            summary = {"id": e.id, "name": e.name, "kind": e.kind.value}
            if user.account_role == AccountRole.RESEARCHER or e.details_visible:
                summary["session_duration_s"] = e.session_duration_s
            out.append(summary)
        return out

    @app.get("/api/instances")
    async def monitor(user: UserAccount = Depends(require_researcher)):
        out = []
        for inst in store.instances.values():
            events = store.events_of(inst.id)
            out.append(
                {
                    "instance_id": inst.id,
                    "experiment_id": inst.experiment_id,
                    "template_id": inst.template_id,
                    "state": inst.state.value,
                    "participants": len(inst.participant_ids),
                    "events": len(events),
                    "flags": sum(1 for e in events if e.kind == EventKind.MODERATION_FLAGGED),
                    "bans": sum(1 for e in events if e.kind == EventKind.USER_BANNED),
                }
            )
        return out

    # --- participation -------------------------------------------------

    @app.post("/api/experiments/{experiment_id}/join")
    async def join(experiment_id: str, user: UserAccount = Depends(current_user)):
        result = orchestrator.join_waiting_room(user, experiment_id, clock.now_ms())
        return {
            "status": result.status,
            "position": result.position,
            "instance_id": result.instance_id,
            "reason": result.reason,
        }

    def _engine(instance_id: str):
        engine = orchestrator.engines.get(instance_id)
        if engine is None:
            raise NotFoundError(f"instance {instance_id}")
        return engine

    @app.get("/api/instances/{instance_id}/content")
    async def content(instance_id: str, user: UserAccount = Depends(current_user)):
        items = store.query_visible(instance_id, user)
        researcher = user.account_role == AccountRole.RESEARCHER
        return [item_view(i, researcher) for i in items]

    @app.post("/api/instances/{instance_id}/content", status_code=201)
    async def submit(instance_id: str, body: dict, user: UserAccount = Depends(current_user)):
        engine = _engine(instance_id)
        item = engine.submit_content(
            user,
            ContentKind(body.get("kind", "post")),
            body.get("body", ""),
            clock.now_ms(),
            media=body.get("media") or [],
            parent_id=body.get("parent_id"),
            flair=body.get("flair"),
        )
        return item_view(item, researcher=False)

    @app.post("/api/instances/{instance_id}/reactions")
    async def react(instance_id: str, body: dict, user: UserAccount = Depends(current_user)):
        engine = _engine(instance_id)
        engagement = engine.react(user, body.get("item_id", ""), body.get("reaction", ""), clock.now_ms())
        return {
            "item_id": body.get("item_id"),
            "likes": engagement.likes,
            "upvotes": engagement.upvotes,
            "downvotes": engagement.downvotes,
            "shares": engagement.shares,
            "reactions": dict(engagement.reactions),
        }

    @app.post("/api/instances/{instance_id}/manual-trigger", status_code=202)
    async def manual_trigger(
        instance_id: str, body: dict, user: UserAccount = Depends(require_researcher)
    ):
        engine = _engine(instance_id)
        engine.manual_trigger(user, body.get("agent_id", ""), body.get("prompt_text", ""), clock.now_ms())
        return {"status": "queued"}

    @app.post("/api/instances/{instance_id}/stop")
    async def stop(instance_id: str, user: UserAccount = Depends(require_researcher)):
        orchestrator.force_stop(instance_id, clock.now_ms())
        return {"status": "stopped"}

    @app.get("/api/instances/{instance_id}/export")
    async def export(
        instance_id: str,
        format: str = Query("json"),
        user: UserAccount = Depends(require_researcher),
    ):
        if format == "json":
            doc = export_instance_doc(store, instance_id)
            return Response(content=dump_json(doc), media_type="application/json")
        import tempfile
        from pathlib import Path

        with tempfile.TemporaryDirectory() as tmp:
            root = write_bundle(store, instance_id, tmp, fmt="csv")
            buf = io.BytesIO()
            with zipfile.ZipFile(buf, "w") as zf:
                for file in sorted(Path(root).iterdir()):
                    zf.writestr(f"{root.name}/{file.name}", file.read_bytes())
        return Response(content=buf.getvalue(), media_type="application/zip")

    # --- event streams -------------------------------------------------

    async def _stream_auth(ws: WebSocket) -> Optional[UserAccount]:
        token = ws.query_params.get("token", "")
        try:
            return auth.resolve(token, clock.now_ms())
        except AuthenticationError:
            await ws.close(code=4401)
            return None

    @app.websocket("/api/instances/{instance_id}/stream")
    async def stream(ws: WebSocket, instance_id: str):
        await ws.accept()
        viewer = await _stream_auth(ws)
        if viewer is None:
            return
        instance = store.instances.get(instance_id)
        if instance is None:
            await ws.close(code=4404)
            return
        researcher = viewer.account_role == AccountRole.RESEARCHER
        member = viewer.id in instance.participant_ids
        if not (researcher or member or viewer.account_role == AccountRole.AGENT_IDENTITY):
            await ws.close(code=4403)
            return
        try:
            cursor = int(ws.query_params.get("from_seq", "0"))
        except ValueError:
            cursor = 0
        try:
            while True:
                log = store.events_of(instance_id)
                sent_end = False
                while cursor < len(log):
                    event = log[cursor]
                    await ws.send_text(json.dumps(wire_event(event, viewer, store), sort_keys=True))
                    cursor += 1
                    if event.kind == EventKind.SESSION_ENDED:
                        sent_end = True
                if sent_end:
                    await ws.close()
                    return
                await asyncio.sleep(0.02)
        except WebSocketDisconnect:
            return

    @app.websocket("/api/experiments/{experiment_id}/waiting")
    async def waiting(ws: WebSocket, experiment_id: str):
        await ws.accept()
        viewer = await _stream_auth(ws)
        if viewer is None:
            return
        try:
            while True:
                for inst in store.instances.values():
                    if inst.experiment_id == experiment_id and viewer.id in inst.participant_ids:
                        await ws.send_text(
                            json.dumps({"v": WIRE_VERSION, "kind": "started", "instance_id": inst.id})
                        )
                        await ws.close()
                        return
                await asyncio.sleep(0.05)
        except WebSocketDisconnect:
            return

    return app
