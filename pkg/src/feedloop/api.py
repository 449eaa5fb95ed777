"""HTTP/JSON API over the service facade.

Errors map to {"error": <ExceptionName>, "detail": <message>} bodies; a static
bearer token (privacy.api_token) guards every route when configured.
"""

from __future__ import annotations

from pathlib import Path
from typing import Any, Optional

from fastapi import Depends, FastAPI, Header, Query, Request
from fastapi.responses import JSONResponse, PlainTextResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel, Field

from .errors import (
    AlreadyResolved,
    BadRatios,
    ClientFailure,
    ConfigError,
    ConflictOpen,
    DegenerateDataset,
    DuplicateConflict,
    EmptyProfile,
    EmptySplit,
    EmptyWindow,
    FeedloopError,
    GapDetected,
    ImplicitTrackingDisabled,
    InsufficientTrainExamples,
    InvalidQuery,
    InvalidTransition,
    MalformedExport,
    MalformedTemplate,
    SchemaViolation,
    SnapshotMismatch,
    SplitLeakage,
    StorageFailure,
    Unparseable,
    UnknownConflict,
    UnknownMessage,
    UnknownSnapshot,
    UnknownVersion,
    WindowTooSmall,
)
from .ingest import FeedQuery
from .labels import Split
from .lifecycle import ExperimentSpec
from .service import Service

_STATUS_BY_ERROR: dict[type, int] = {
    UnknownMessage: 404,
    UnknownConflict: 404,
    UnknownSnapshot: 404,
    UnknownVersion: 404,
    InvalidQuery: 400,
    MalformedExport: 400,
    MalformedTemplate: 400,
    BadRatios: 400,
    SchemaViolation: 400,
    WindowTooSmall: 400,
    EmptySplit: 400,
    EmptyWindow: 400,
    EmptyProfile: 400,
    ConfigError: 400,
    DuplicateConflict: 409,
    AlreadyResolved: 409,
    ConflictOpen: 409,
    SnapshotMismatch: 409,
    InvalidTransition: 409,
    DegenerateDataset: 409,
    InsufficientTrainExamples: 409,
    SplitLeakage: 409,
    ImplicitTrackingDisabled: 403,
    ClientFailure: 502,
    Unparseable: 502,
    StorageFailure: 503,
    GapDetected: 500,
}


class FeedbackBody(BaseModel):
    user_id: str
    channel_id: str
    message_id: int
    kind: str
    label: Optional[str] = None
    dwell_seconds: Optional[float] = None
    displayed_version: Optional[str] = None


class ImplicitBatchBody(BaseModel):
    events: list[dict[str, Any]] = Field(default_factory=list)


class ResolveBody(BaseModel):
    label: str
    resolver_id: str = "resolver"


class RatingTaskBody(BaseModel):
    model_config = {"populate_by_name": True}

    n: int
    time_from: Optional[int] = Field(default=None, alias="from")
    time_to: Optional[int] = Field(default=None, alias="to")
    seed: int = 0


class VersionActionBody(BaseModel):
    action: str  # train | evaluate | promote | deploy
    version_id: Optional[str] = None
    snapshot_id: Optional[str] = None
    split: Optional[str] = None
    seed: int = 0
    actor: str = "operator"
    rationale: str = ""


class RolloutBody(BaseModel):
    action: str = "start"  # start | stop
    variant_a: Optional[str] = None
    variant_b: Optional[str] = None
    fraction_b: float = 0.0
    key_basis: str = "MESSAGE"
    actor: str = "operator"
    rationale: str = ""


class PromptBody(BaseModel):
    template_text: str
    k_shot: int = 0
    selection_strategy: str = "RANDOM_SEEDED"
    selection_seed: int = 0
    mode: str = "GATED"
    actor: str = "operator"
    rationale: str = ""


class ExperimentBody(BaseModel):
    k_values: list[int]
    strategies: list[str]
    seed: int = 0
    snapshot_id: str
    template_text: str


def create_app(service: Service) -> FastAPI:
    app = FastAPI(title="feedloop", version="0.1.0")
    app.state.service = service

    def auth(authorization: Optional[str] = Header(default=None)) -> None:
        token = service.config.privacy.api_token
        if token is None:
            return
        if authorization != f"Bearer {token}":
            raise PermissionError("invalid bearer token")

    @app.exception_handler(FeedloopError)
    async def feedloop_error(request: Request, exc: FeedloopError) -> JSONResponse:
        status = _STATUS_BY_ERROR.get(type(exc), 500)
        return JSONResponse(
            status_code=status,
            content={"error": type(exc).__name__, "detail": str(exc)},
        )

    @app.exception_handler(PermissionError)
    async def permission_error(request: Request, exc: PermissionError) -> JSONResponse:
        return JSONResponse(status_code=401, content={"error": "Unauthorized", "detail": str(exc)})

    @app.get("/healthz")
    def healthz() -> dict[str, Any]:
        # reachable only after boot replay finished
        return {"status": "ready", "log_seq": service.log.next_seq}

    @app.get("/config")
    def public_config(_: None = Depends(auth)) -> dict[str, Any]:
        return service.public_config()

    @app.get("/feed")
    def feed(
        query: Optional[str] = None,
        channel: Optional[str] = Query(default=None),
        time_from: Optional[int] = Query(default=None, alias="from"),
        time_to: Optional[int] = Query(default=None, alias="to"),
        page: int = 0,
        page_size: int = 50,
        user_id: Optional[str] = None,
        _: None = Depends(auth),
    ) -> dict[str, Any]:
        feed_query = FeedQuery(
            text_query=query,
            channel_filter=frozenset(channel.split(",")) if channel else None,
            time_from=time_from,
            time_to=time_to,
            page=page,
            page_size=page_size,
        )
        return service.feed(feed_query, user_id=user_id)

    @app.post("/ingest")
    async def ingest(request: Request, channel: str, _: None = Depends(auth)) -> dict[str, Any]:
        raw = await request.body()
        return service.ingest_export(channel, raw)

    @app.post("/feedback")
    def feedback(body: FeedbackBody, _: None = Depends(auth)) -> dict[str, Any]:
        return service.record_feedback(
            user_id=body.user_id,
            channel_id=body.channel_id,
            message_id=body.message_id,
            kind=body.kind,
            label=body.label,
            dwell_seconds=body.dwell_seconds,
            displayed_version=body.displayed_version,
        )

    @app.post("/events/implicit")
    def implicit(body: ImplicitBatchBody, _: None = Depends(auth)) -> dict[str, Any]:
        return service.record_implicit_batch(body.events)

    @app.get("/conflicts")
    def conflicts(include_resolved: bool = False, _: None = Depends(auth)) -> list[dict[str, Any]]:
        return service.conflicts(include_resolved=include_resolved)

    @app.post("/conflicts/{conflict_id}/resolve")
    def resolve(conflict_id: int, body: ResolveBody, _: None = Depends(auth)) -> dict[str, Any]:
        return service.resolve_conflict(conflict_id, body.label, body.resolver_id)

    @app.get("/review-queue")
    def review_queue(_: None = Depends(auth)) -> list[dict[str, Any]]:
        return service.review_queue()

    @app.post("/rating-task")
    def rating_task(body: RatingTaskBody, _: None = Depends(auth)) -> list[dict[str, Any]]:
        return service.rating_task(
            n=body.n, time_from=body.time_from, time_to=body.time_to, seed=body.seed
        )

    @app.get("/metrics")
    def metrics(_: None = Depends(auth)) -> dict[str, Any]:
        return service.metrics()

    @app.get("/gold/export")
    def export_gold(
        snapshot_id: str, split: Optional[str] = None, _: None = Depends(auth)
    ) -> PlainTextResponse:
        lines = "\n".join(service.export_gold(snapshot_id, split))
        return PlainTextResponse(lines + ("\n" if lines else ""))

    @app.post("/gold/snapshot")
    def snapshot(_: None = Depends(auth)) -> dict[str, Any]:
        return service.snapshot_gold()

    @app.get("/admin/versions")
    def versions(_: None = Depends(auth)) -> list[dict[str, Any]]:
        return service.metrics()["versions"]

    @app.post("/admin/versions")
    def version_action(body: VersionActionBody, _: None = Depends(auth)) -> dict[str, Any]:
        if body.action == "train":
            return service.train(
                snapshot_id=body.snapshot_id,
                seed=body.seed,
                actor=body.actor,
                rationale=body.rationale or "operator-initiated training",
            )
        if body.action == "evaluate":
            if body.version_id is None:
                raise InvalidQuery("evaluate requires version_id")
            split = Split((body.split or "VALIDATION").upper())
            report = service.evaluate_version(body.version_id, body.snapshot_id, split)
            return report.to_dict()
        if body.action == "promote":
            if body.version_id is None:
                raise InvalidQuery("promote requires version_id")
            return service.promote(
                body.version_id, body.snapshot_id, actor=body.actor, rationale=body.rationale
            )
        if body.action == "deploy":
            if body.version_id is None:
                raise InvalidQuery("deploy requires version_id")
            return service.deploy(body.version_id, actor=body.actor, rationale=body.rationale)
        raise InvalidQuery(f"unknown version action {body.action!r}")

    @app.get("/admin/rollout")
    def rollout_state(_: None = Depends(auth)) -> dict[str, Any]:
        policy = service.store.registry.rollout
        return {"rollout": policy.to_dict() if policy else None}

    @app.post("/admin/rollout")
    def rollout_action(body: RolloutBody, _: None = Depends(auth)) -> dict[str, Any]:
        if body.action == "stop":
            return service.stop_rollout(actor=body.actor, rationale=body.rationale)
        if body.variant_b is None:
            raise InvalidQuery("rollout start requires variant_b")
        return service.start_rollout(
            variant_b=body.variant_b,
            fraction_b=body.fraction_b,
            variant_a=body.variant_a,
            key_basis=body.key_basis,
            actor=body.actor,
            rationale=body.rationale,
        )

    @app.get("/admin/prompts")
    def prompts(_: None = Depends(auth)) -> list[dict[str, Any]]:
        return [v for v in service.metrics()["versions"] if v["pathway"] == "P"]

    @app.post("/admin/prompts")
    def prompt_change(body: PromptBody, _: None = Depends(auth)) -> dict[str, Any]:
        return service.apply_prompt_change(
            template_text=body.template_text,
            k_shot=body.k_shot,
            selection_strategy=body.selection_strategy,
            selection_seed=body.selection_seed,
            actor=body.actor,
            rationale=body.rationale,
            mode=body.mode,
        )

    @app.post("/admin/drift-check")
    def drift_check(window: Optional[int] = None, _: None = Depends(auth)) -> dict[str, Any]:
        return service.drift_check(window_messages=window)

    @app.post("/admin/experiment")
    def experiment(body: ExperimentBody, _: None = Depends(auth)) -> list[dict[str, Any]]:
        spec = ExperimentSpec.from_dict(body.model_dump())
        return [cell.to_dict() for cell in service.run_experiment(spec)]

    @app.get("/admin/digest")
    def digest(_: None = Depends(auth)) -> dict[str, Any]:
        return {"digest": service.digest(), "log_seq": service.log.next_seq}

    # serve the built web UI when running from a checkout
    ui_dir = Path(__file__).resolve().parents[2] / "frontend"
    if (ui_dir / "index.html").exists() and (ui_dir / "dist").exists():
        app.mount("/ui", StaticFiles(directory=ui_dir, html=True), name="ui")

    return app
