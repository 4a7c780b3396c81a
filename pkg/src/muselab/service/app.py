"""FastAPI binding of the session engine.

Endpoints:
  POST /api/session                       create from a plan (or participant + seed)
  POST /api/session/{id}/start
  GET  /api/session/{id}/state
  GET  /api/clip/{clip_id}/audio          WAV bytes
  POST /api/session/{id}/rating
  POST /api/session/{id}/arithmetic
  POST /api/session/{id}/samples/{kind}   CSV chunk body (eeg | fnirs)
  POST /api/session/{id}/export
"""

from __future__ import annotations

import json
from pathlib import Path

from fastapi import FastAPI, Request, Response
from fastapi.responses import JSONResponse

from ..analysis import RatingTriple
from ..audio import load_wav, wav_bytes
from ..errors import (
    ConflictError,
    MuselabError,
    NotFoundError,
    OutOfWindowError,
    PlanningError,
    SchemaError,
    StateError,
    ValidationError,
)
from ..quadrants import EmotionQuadrant
from ..session.plan import PlanBlock, SessionPlan, build_plan
from ..session.store import SessionEngine
from . import schemas

_STATUS_BY_ERROR = (
    (NotFoundError, 404),
    (OutOfWindowError, 409),
    (ConflictError, 409),
    (StateError, 409),
    (ValidationError, 422),
    (SchemaError, 422),
    (PlanningError, 422),
)


class ClipStore:
    """Serves clip audio and the per-quadrant library from a clips dir.

    Expects clips.json mapping clip_id to either a quadrant string or an
    object {quadrant, file}; audio files default to <clip_id>.wav.
    """

    def __init__(self, directory: Path | str):
        self.directory = Path(directory)
        manifest_path = self.directory / "clips.json"
        if not manifest_path.exists():
            raise NotFoundError(f"no clips.json in {self.directory}")
        self.manifest = json.loads(manifest_path.read_text())

    def library(self) -> dict:
        out: dict[str, list[str]] = {}
        for clip_id, meta in self.manifest.items():
            quadrant = meta if isinstance(meta, str) else meta["quadrant"]
            out.setdefault(quadrant, []).append(clip_id)
        return {q: sorted(ids) for q, ids in out.items()}

    def audio_bytes(self, clip_id: str) -> bytes:
        meta = self.manifest.get(clip_id)
        if meta is None:
            raise NotFoundError(f"unknown clip {clip_id!r}")
        file_name = f"{clip_id}.wav" if isinstance(meta, str) else meta.get("file", f"{clip_id}.wav")
        path = self.directory / file_name
        if not path.exists():
            raise NotFoundError(f"audio file missing for clip {clip_id!r}")
        return wav_bytes(load_wav(path))


def create_app(engine: SessionEngine, clip_store: ClipStore | None = None) -> FastAPI:
    app = FastAPI(title="muselab session service", version="0.1.0")

    @app.exception_handler(MuselabError)
    async def muselab_error_handler(_request: Request, exc: MuselabError):
        status = 400
        for error_type, code in _STATUS_BY_ERROR:
            if isinstance(exc, error_type):
                status = code
                break
        return JSONResponse(
            status_code=status,
            content=schemas.ErrorResponse(error=type(exc).__name__, detail=str(exc)).model_dump(),
        )

    @app.post("/api/session", response_model=schemas.CreateSessionResponse)
    def create_session(request: schemas.CreateSessionRequest):
        if request.plan is not None:
            plan = SessionPlan(
                participant_id=request.plan.participant_id,
                seed=request.plan.seed,
                blocks=tuple(
                    PlanBlock(
                        session_index=b.session_index,
                        block_index=b.block_index,
                        quadrant=EmotionQuadrant(b.quadrant),
                        clip_ids=tuple(b.clip_ids),
                    )
                    for b in request.plan.blocks
                ),
            )
        else:
            if clip_store is None:
                raise PlanningError("no clip library configured; POST a full plan instead")
            if not request.participant_id:
                raise ValidationError("participant_id is required when no plan is posted")
            plan = build_plan(request.participant_id, clip_store.library(), request.seed)
        session_id = engine.create_session(plan)
        return schemas.CreateSessionResponse(
            session_id=session_id, participant_id=plan.participant_id, total_trials=plan.total_trials
        )

    @app.post("/api/session/{session_id}/start", response_model=schemas.StateResponse)
    def start(session_id: str):
        return engine.start(session_id)

    @app.get("/api/session/{session_id}/state", response_model=schemas.StateResponse)
    def state(session_id: str):
        return engine.state(session_id)

    @app.post("/api/session/{session_id}/rating", response_model=schemas.RatingResponse)
    def rating(session_id: str, request: schemas.RatingRequest):
        record = engine.record_rating(
            session_id,
            request.trial_id,
            RatingTriple(valence=request.valence, arousal=request.arousal, liking=request.liking),
        )
        return schemas.RatingResponse(
            trial_id=record.trial_id,
            derived_label=record.derived_label.quadrant.value,
            label_source=record.derived_label.source.value,
            phase=engine.state(session_id)["phase"],
        )

    @app.post("/api/session/{session_id}/arithmetic", response_model=schemas.StateResponse)
    def arithmetic(session_id: str, request: schemas.ArithmeticRequest):
        return engine.submit_arithmetic(session_id, request.block_id, request.answers)

    @app.post("/api/session/{session_id}/samples/{kind}", response_model=schemas.IngestResponse)
    async def samples(session_id: str, kind: str, request: Request):
        if kind not in ("eeg", "fnirs"):
            raise SchemaError(f"stream kind must be eeg or fnirs, got {kind!r}")
        body = (await request.body()).decode("utf-8")
        return engine.ingest_samples(session_id, kind, body)

    @app.post("/api/session/{session_id}/export", response_model=schemas.ExportResponse)
    def export(session_id: str):
        return schemas.ExportResponse(path=str(engine.export(session_id)))

    @app.get("/api/clip/{clip_id}/audio")
    def clip_audio(clip_id: str):
        if clip_store is None:
            raise NotFoundError("no clip library configured")
        return Response(content=clip_store.audio_bytes(clip_id), media_type="audio/wav")

    return app
