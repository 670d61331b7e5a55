"""HTTP API for iteration control, labeler worklists, annotation intake,
consensus, ontology suggestions, and the dashboard views.

Stateless between requests apart from bearer sessions and the store, so a
restart loses nothing that was committed. Group isolation is enforced on
every annotation write: a labeler can only touch audios assigned to their
own group's half of the batch.
"""

from __future__ import annotations

from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

from fastapi import Depends, FastAPI, HTTPException, Query, Request
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel, Field

from .config import AppConfig
from .consensus import build_doubt_worklist, run_consensus_for_iteration
from .domain import ChunkAnnotation
from .engine import ActiveLearningEngine, EngineConfig
from .errors import (
    DuplicateName,
    InactiveClass,
    IterationInProgress,
    ListenLoopError,
    MissingSidecar,
    OutOfRangeTimes,
    UnknownAudio,
    UnknownClass,
    UnknownNode,
)
from .ingestion import EmbeddingPool, load_manifest, load_sidecar
from .persistence import Database
from .reports import projection_rows

ROLE_OPERATOR = "operator"
ROLE_LABELER = "labeler"


@dataclass(frozen=True)
class ApiSession:
    token: str
    role: str
    labeler_id: str | None = None
    group_id: str | None = None
    expires_at: datetime | None = None

    @property
    def expired(self) -> bool:
        return self.expires_at is not None and datetime.now(timezone.utc) >= self.expires_at


class AppState:
    """Everything one service process shares across requests."""

    def __init__(self, config: AppConfig, db: Database, pool: EmbeddingPool):
        self.config = config
        self.db = db
        self.pool = pool
        self.engine = ActiveLearningEngine(
            db,
            pool,
            EngineConfig(
                budget=config.budget,
                n_smax=config.n_smax,
                n_mmax=config.n_mmax,
                seed=config.seed,
            ),
        )
        self.sessions: dict[str, ApiSession] = {
            config.operator_token: ApiSession(token=config.operator_token, role=ROLE_OPERATOR)
        }
        for labeler in config.labelers:
            self.sessions[labeler.token] = ApiSession(
                token=labeler.token,
                role=ROLE_LABELER,
                labeler_id=labeler.labeler_id,
                group_id=labeler.group,
            )

    @classmethod
    def bootstrap(cls, config: AppConfig) -> "AppState":
        """Open the store, register configured labelers, load sidecars."""
        db = Database(config.storage)
        db.migrate()
        for labeler in config.labelers:
            db.add_labeler(labeler.labeler_id, labeler.group)
        ontology = db.ontology()
        existing = {c.name for c in ontology.classes if c.active}
        for name in config.seed_classes:
            if name not in existing:
                db.add_class(name, origin="seed")
        pool = EmbeddingPool()
        for sidecar in config.sidecars:
            with open(sidecar, "rb") as fh:
                pool.extend(load_sidecar(fh))
        for manifest in config.manifests:
            with open(manifest) as fh:
                pool.extend(load_manifest(fh))
        return cls(config, db, pool)


# ---- request bodies ----------------------------------------------------------

class IterationRequest(BaseModel):
    node_id: str
    window_start: datetime
    window_end: datetime
    budget: int | None = Field(default=None, ge=1)


class AnnotationChunk(BaseModel):
    class_id: int
    onset: float
    offset: float


class AnnotationRequest(BaseModel):
    audio_id: str
    chunks: list[AnnotationChunk] = Field(min_length=1)


class SuggestionRequest(BaseModel):
    name: str = Field(min_length=1)


class DoubtResolutionRequest(BaseModel):
    class_id: int
    onset: float | None = None
    offset: float | None = None


# ---- app factory ---------------------------------------------------------------

def create_app(state: AppState) -> FastAPI:
    app = FastAPI(title="listenloop", version="0.1.0")
    app.state.listenloop = state

    def current_session(request: Request) -> ApiSession:
        header = request.headers.get("Authorization", "")
        if not header.startswith("Bearer "):
            raise HTTPException(status_code=401, detail="missing bearer token")
        session = state.sessions.get(header.removeprefix("Bearer ").strip())
        if session is None or session.expired:
            raise HTTPException(status_code=401, detail="unknown or expired token")
        return session

    def operator_session(session: ApiSession = Depends(current_session)) -> ApiSession:
        if session.role != ROLE_OPERATOR:
            raise HTTPException(status_code=401, detail="operator role required")
        return session

    @app.get("/healthz")
    def healthz() -> dict:
        return {"status": "ok", "audios": state.db.audio_count(), "embeddings": len(state.pool)}

    # -- iterations -----------------------------------------------------------

    @app.post("/iterations", status_code=201)
    def create_iteration(body: IterationRequest, _: ApiSession = Depends(operator_session)) -> dict:
        try:
            record = state.engine.run_iteration(
                body.node_id, body.window_start, body.window_end, budget=body.budget
            )
        except IterationInProgress as exc:
            raise HTTPException(status_code=409, detail=str(exc)) from exc
        except (UnknownNode, MissingSidecar, ValueError) as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        return record.summary()

    @app.get("/iterations/{iteration_id}")
    def get_iteration(iteration_id: str, _: ApiSession = Depends(current_session)) -> dict:
        header = state.db.get_iteration(iteration_id)
        if header is None:
            raise HTTPException(status_code=404, detail=f"unknown iteration {iteration_id!r}")
        proposals = state.db.iteration_proposals(iteration_id)
        labeled = sum(1 for p in proposals if p.label is not None)
        return {
            "iteration_id": iteration_id,
            "seq": header["seq"],
            "node_id": header["node_id"],
            "window_start": header["window_start"].isoformat(),
            "window_end": header["window_end"].isoformat(),
            "audio_count": header["audio_count"],
            "labeled_pct": header["labeled_pct"],
            "n_ds": header["n_ds"],
            "path": header["path"],
            "proposal_count": len(proposals),
            "promoted_count": labeled,
        }

    @app.get("/iterations/{iteration_id}/proposals")
    def proposals_for_labeler(
        iteration_id: str,
        labeler: str = Query(...),
        session: ApiSession = Depends(current_session),
    ) -> dict:
        if not state.db.iteration_exists(iteration_id):
            raise HTTPException(status_code=404, detail=f"unknown iteration {iteration_id!r}")
        if session.role == ROLE_LABELER and session.labeler_id != labeler:
            raise HTTPException(status_code=401, detail="token does not match labeler")
        group_id = state.db.group_of(labeler)
        if group_id is None:
            raise HTTPException(status_code=404, detail=f"unknown labeler {labeler!r}")
        done = state.db.annotated_audio_ids(labeler)
        items = []
        for row in state.db.iteration_proposals(iteration_id):
            if row.assigned_group != group_id or row.audio_id in done:
                continue
            audio = state.db.get_audio(row.audio_id)
            items.append({
                "audio_id": row.audio_id,
                "rank": row.rank,
                "filename": row.filename,
                "audio_url": f"/audio/{row.filename}",
                "duration": audio.duration if audio else None,
                "agreement": row.agreement_pct / 100.0,
            })
        return {"iteration_id": iteration_id, "labeler_id": labeler, "items": items}

    @app.post("/iterations/{iteration_id}/consensus")
    def consensus_for_iteration(
        iteration_id: str, _: ApiSession = Depends(operator_session)
    ) -> dict:
        if not state.db.iteration_exists(iteration_id):
            raise HTTPException(status_code=404, detail=f"unknown iteration {iteration_id!r}")
        run = run_consensus_for_iteration(state.db, iteration_id)
        return {
            "iteration_id": iteration_id,
            "outcomes": len(run.outcomes),
            "promoted": run.promoted,
            "consensus_yield": run.consensus_yield,
        }

    # -- annotations ------------------------------------------------------------

    @app.post("/annotations")
    def submit_annotations(
        body: AnnotationRequest, session: ApiSession = Depends(current_session)
    ) -> dict:
        if session.role != ROLE_LABELER:
            raise HTTPException(status_code=401, detail="labeler session required")
        proposal = state.db.proposal_for_audio(body.audio_id)
        if proposal is None or proposal.assigned_group != session.group_id:
            raise HTTPException(
                status_code=409,
                detail=f"audio {body.audio_id!r} was not proposed to group {session.group_id!r}",
            )
        annotations = [
            ChunkAnnotation(
                audio_id=body.audio_id,
                labeler_id=session.labeler_id,
                class_id=chunk.class_id,
                onset=chunk.onset,
                offset=chunk.offset,
            )
            for chunk in body.chunks
        ]
        try:
            stored = state.db.record_annotations(annotations)
        except (OutOfRangeTimes, UnknownClass, InactiveClass, UnknownAudio) as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        refreshed = state.db.proposal_for_audio(body.audio_id)
        return {
            "audio_id": body.audio_id,
            "stored": stored,
            "labeler_count": refreshed.labeler_count,
            "agreement": refreshed.agreement_pct / 100.0,
        }

    # -- doubt workflow ------------------------------------------------------------

    @app.get("/doubts")
    def doubt_worklist(
        labeler: str = Query(...), session: ApiSession = Depends(current_session)
    ) -> dict:
        if session.role == ROLE_LABELER and session.labeler_id != labeler:
            raise HTTPException(status_code=401, detail="token does not match labeler")
        items = build_doubt_worklist(labeler, state.db.doubt_items())
        return {
            "labeler_id": labeler,
            "items": [
                {
                    "chunk_id": item.chunk_id,
                    "audio_id": item.audio_id,
                    "onset": item.onset,
                    "offset": item.offset,
                    "audio_url": f"/audio/{item.audio_id}.wav",
                }
                for item in items
            ],
        }

    @app.post("/doubts/{chunk_id}/resolution")
    def resolve_doubt(
        chunk_id: int,
        body: DoubtResolutionRequest,
        session: ApiSession = Depends(current_session),
    ) -> dict:
        if session.role == ROLE_LABELER:
            mine = {item.chunk_id for item in state.db.doubt_items()
                    if item.labeler_id == session.labeler_id}
            if chunk_id not in mine:
                raise HTTPException(status_code=409, detail="not this labeler's doubt chunk")
        try:
            updated = state.db.resolve_doubt(
                chunk_id, body.class_id, onset=body.onset, offset=body.offset
            )
        except (OutOfRangeTimes, UnknownClass, InactiveClass) as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        except UnknownAudio as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from exc
        proposal = state.db.proposal_for_audio(updated.audio_id)
        return {
            "chunk_id": chunk_id,
            "audio_id": updated.audio_id,
            "class_id": updated.class_id,
            "agreement": (proposal.agreement_pct / 100.0) if proposal else None,
            "label": proposal.label if proposal else None,
        }

    # -- ontology ----------------------------------------------------------------

    @app.get("/ontology")
    def ontology(_: ApiSession = Depends(current_session)) -> dict:
        classes = [
            {
                "class_id": c.class_id,
                "name": c.name,
                "origin": c.origin,
                "active": c.active,
            }
            for c in state.db.ontology().classes
        ]
        return {"classes": classes, "doubt_class_id": state.db.doubt_class_id()}

    @app.post("/ontology/suggestions", status_code=201)
    def suggest_class(
        body: SuggestionRequest, session: ApiSession = Depends(current_session)
    ) -> dict:
        if session.role != ROLE_LABELER:
            raise HTTPException(status_code=401, detail="labeler session required")
        try:
            suggestion_id = state.db.suggest_class(session.labeler_id, body.name)
        except DuplicateName as exc:
            raise HTTPException(status_code=409, detail=str(exc)) from exc
        status = "pending"
        class_id = None
        if state.config.auto_approve_suggestions:
            class_id = state.db.approve_suggestion(suggestion_id)
            status = "approved"
        return {
            "suggestion_id": suggestion_id,
            "name": body.name,
            "status": status,
            "class_id": class_id,
            "available_from_seq": (
                state.db.class_available_from(class_id) if class_id is not None else None
            ),
        }

    # -- dashboard -----------------------------------------------------------------

    @app.get("/dashboard/projection")
    def dashboard_projection(
        iteration: str = Query(...), _: ApiSession = Depends(current_session)
    ) -> dict:
        if not state.db.iteration_exists(iteration):
            raise HTTPException(status_code=404, detail=f"unknown iteration {iteration!r}")
        points = projection_rows(state.db, state.pool, iteration)
        return {"iteration_id": iteration, "points": points}

    @app.get("/dashboard/histogram")
    def dashboard_histogram(
        top: int = Query(default=50, ge=1), _: ApiSession = Depends(current_session)
    ) -> dict:
        entries = state.db.tag_frequency_histogram(top)
        return {
            "entries": [
                {"class_id": class_id, "name": name, "count": count}
                for class_id, name, count in entries
            ]
        }

    @app.exception_handler(ListenLoopError)
    async def listenloop_error(_, exc: ListenLoopError):
        from fastapi.responses import JSONResponse

        return JSONResponse(
            status_code=400, content={"detail": f"{type(exc).__name__}: {exc}"}
        )

    if state.config.console_dir and Path(state.config.console_dir).is_dir():
        app.mount(
            "/console",
            StaticFiles(directory=state.config.console_dir, html=True),
            name="console",
        )
    if state.config.audio_root and Path(state.config.audio_root).is_dir():
        app.mount("/audio", StaticFiles(directory=state.config.audio_root), name="audio")

    return app


def app_from_config(config: AppConfig) -> FastAPI:
    return create_app(AppState.bootstrap(config))
