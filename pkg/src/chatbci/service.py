"""REST surface over a Workspace: sessions, autonomy, analyses, runs, figures.

Long-running work answers 202 and is polled; state-changing endpoints are
idempotent under retry when the client sends an Idempotency-Key header.
Sessions configured with the mock provider never touch the network.
"""

from __future__ import annotations

import threading
from pathlib import Path

from fastapi import FastAPI, Request, Response
from fastapi.exceptions import RequestValidationError
from fastapi.responses import FileResponse, JSONResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel, Field

from .errors import ChatBCIError, SpecError, StateError
from .llm import RESEARCH_PHASES, AutonomyPolicy
from .workspace import AppConfig, Workspace


class MessageBody(BaseModel):
    content: str = Field(min_length=1)
    phase: str = Field(default="experiment_design")


class AutonomyBody(BaseModel):
    policy: dict[str, int]


class AnalysisBody(BaseModel):
    kind: str
    params: dict = Field(default_factory=dict)


class RunBody(BaseModel):
    subject_id: str
    decoder_cfg: dict = Field(default_factory=dict)
    train_cfg: dict = Field(default_factory=dict)
    pipeline: dict | None = None


class RejectBody(BaseModel):
    reason: str = ""


def create_app(workspace: Workspace, ui_dir: str | Path | None = None) -> FastAPI:
    app = FastAPI(title="chatbci")
    app.state.workspace = workspace
    idem_cache: dict[str, tuple[int, bytes, str]] = {}
    idem_lock = threading.Lock()

    @app.exception_handler(RequestValidationError)
    async def validation_handler(request: Request, exc: RequestValidationError):
        errors = [
            {"field": ".".join(str(p) for p in e["loc"] if p != "body"), "message": e["msg"]}
            for e in exc.errors()
        ]
        return JSONResponse(status_code=400, content={"errors": errors})

    @app.exception_handler(StateError)
    async def state_handler(request: Request, exc: StateError):
        return JSONResponse(status_code=409, content={"error": str(exc)})

    @app.exception_handler(SpecError)
    async def spec_handler(request: Request, exc: SpecError):
        return JSONResponse(status_code=400, content={"errors": [{"field": "", "message": str(exc)}]})

    @app.exception_handler(ChatBCIError)
    async def domain_handler(request: Request, exc: ChatBCIError):
        return JSONResponse(status_code=500, content={"error": str(exc)})

    @app.middleware("http")
    async def idempotency(request: Request, call_next):
        key = request.headers.get("Idempotency-Key")
        if key is None or request.method not in ("POST", "PUT"):
            return await call_next(request)
        cache_key = f"{request.method} {request.url.path} {key}"
        with idem_lock:
            hit = idem_cache.get(cache_key)
        if hit is not None:
            status, body, media = hit
            return Response(content=body, status_code=status, media_type=media)
        response = await call_next(request)
        body = b"".join([chunk async for chunk in response.body_iterator])
        with idem_lock:
            idem_cache[cache_key] = (
                response.status_code,
                body,
                response.media_type or "application/json",
            )
        return Response(
            content=body,
            status_code=response.status_code,
            media_type=response.media_type,
            headers=dict(response.headers),
        )

    def get_session(session_id: str):
        session = workspace.sessions.get(session_id)
        if session is None:
            raise LookupError(session_id)
        return session

    @app.exception_handler(LookupError)
    async def lookup_handler(request: Request, exc: LookupError):
        return JSONResponse(status_code=404, content={"error": f"unknown id: {exc}"})

    # -- sessions --------------------------------------------------------

    @app.post("/api/sessions", status_code=201)
    def create_session():
        session = workspace.create_session()
        return {"session_id": session.session_id}

    @app.get("/api/sessions/{session_id}")
    def session_state(session_id: str):
        return get_session(session_id).state_snapshot()

    @app.post("/api/sessions/{session_id}/messages")
    def post_message(session_id: str, body: MessageBody):
        session = get_session(session_id)
        if body.phase not in RESEARCH_PHASES:
            raise SpecError(f"unknown phase {body.phase!r}")
        reply, actions = session.send(body.content, body.phase)
        reply_text = reply.content
        for action in actions:
            if action.state in ("executed", "flagged_for_review") and action.result_ref:
                ref = ", ".join(f"{k}={v}" for k, v in action.result_ref.items())
                reply_text += f"\n[{action.action_id} {action.kind} executed: {ref}]"
        return {
            "reply": reply_text,
            "pending_actions": [a.to_dict() for a in actions],
        }

    @app.get("/api/sessions/{session_id}/autonomy")
    def get_autonomy(session_id: str):
        return {"policy": get_session(session_id).policy.to_dict()}

    @app.put("/api/sessions/{session_id}/autonomy")
    def put_autonomy(session_id: str, body: AutonomyBody):
        session = get_session(session_id)
        merged = dict(session.policy.to_dict())
        merged.update(body.policy)
        session.set_policy(AutonomyPolicy(merged))
        return {"policy": session.policy.to_dict()}

    @app.post("/api/sessions/{session_id}/actions/{action_id}/approve")
    def approve_action(session_id: str, action_id: str):
        session = get_session(session_id)
        if action_id not in session.actions:
            raise LookupError(action_id)
        return session.approve(action_id).to_dict()

    @app.post("/api/sessions/{session_id}/actions/{action_id}/reject")
    def reject_action(session_id: str, action_id: str, body: RejectBody | None = None):
        session = get_session(session_id)
        if action_id not in session.actions:
            raise LookupError(action_id)
        reason = body.reason if body else ""
        return session.reject(action_id, reason).to_dict()

    # -- datasets ----------------------------------------------------------

    @app.get("/api/datasets")
    def datasets():
        return {"datasets": workspace.datasets()}

    # -- analyses ----------------------------------------------------------

    @app.post("/api/analyses", status_code=202)
    def post_analysis(body: AnalysisBody):
        if body.kind not in ("erp", "psd", "stats", "validate"):
            raise SpecError(f"unknown analysis kind {body.kind!r}")
        report_id = workspace.start_analysis(body.kind, body.params)
        return {"report_id": report_id}

    @app.get("/api/analyses/{report_id}")
    def get_analysis(report_id: str):
        entry = workspace.reports.get(report_id)
        if entry is None:
            raise LookupError(report_id)
        out = {k: entry.get(k) for k in ("report_id", "kind", "status", "error")}
        if entry.get("status") == "done":
            out["result"] = entry["result"]
        return out

    # -- runs ---------------------------------------------------------------

    @app.post("/api/runs", status_code=202)
    def post_run(body: RunBody):
        run_id = workspace.start_run(
            subject_id=body.subject_id,
            decoder_cfg=body.decoder_cfg,
            train_cfg=body.train_cfg,
            pipeline=body.pipeline,
        )
        return {"run_id": run_id}

    @app.get("/api/runs")
    def list_runs():
        return {"runs": [workspace.run_snapshot(rid) for rid in sorted(workspace.runs)]}

    @app.get("/api/runs/{run_id}")
    def get_run(run_id: str):
        try:
            return workspace.run_snapshot(run_id)
        except KeyError as exc:
            raise LookupError(run_id) from exc

    # -- figures --------------------------------------------------------------

    @app.get("/api/figures")
    def list_figures():
        rows = [
            {"figure_id": fid, "kind": meta["kind"]}
            for fid, meta in sorted(workspace.figures.items())
        ]
        return {"figures": rows}

    @app.get("/api/figures/{figure_id}")
    def get_figure(figure_id: str):
        meta = workspace.figures.get(figure_id)
        if meta is None:
            raise LookupError(figure_id)
        return FileResponse(meta["png_path"], media_type="image/png")

    @app.get("/api/figures/{figure_id}/data")
    def get_figure_data(figure_id: str):
        meta = workspace.figures.get(figure_id)
        if meta is None:
            raise LookupError(figure_id)
        return Response(
            content=Path(meta["data_path"]).read_bytes(), media_type="application/json"
        )

    if ui_dir is not None and Path(ui_dir).is_dir():
        app.mount("/", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app


def serve(config: AppConfig, host: str = "127.0.0.1", port: int = 8008, ui_dir=None) -> None:
    import uvicorn

    app = create_app(Workspace(config), ui_dir=ui_dir)
    uvicorn.run(app, host=host, port=port, log_level="info")
