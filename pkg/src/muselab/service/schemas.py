"""Pydantic request/response models for the session HTTP API."""

from __future__ import annotations

from pydantic import BaseModel, Field


class PlanBlockModel(BaseModel):
    session_index: int
    block_index: int
    quadrant: str
    clip_ids: list[str]


class PlanModel(BaseModel):
    participant_id: str
    seed: int
    blocks: list[PlanBlockModel]


class CreateSessionRequest(BaseModel):
    participant_id: str | None = None
    seed: int = 0
    plan: PlanModel | None = None


class CreateSessionResponse(BaseModel):
    session_id: str
    participant_id: str
    total_trials: int


class ArithmeticProblem(BaseModel):
    id: int
    text: str


class ArithmeticState(BaseModel):
    block_id: str
    problems: list[ArithmeticProblem]


class StateResponse(BaseModel):
    phase: str
    session: int
    block: int
    trial: int
    total_trials: int
    collected_ratings: int
    now_ms: int
    phase_deadline_ms: int | None = None
    remaining_ms: int | None = None
    trial_id: str | None = None
    clip_id: str | None = None
    music_quadrant: str | None = None
    arithmetic: ArithmeticState | None = None
    awaiting_session: int | None = None


class RatingRequest(BaseModel):
    trial_id: str
    valence: int = Field(ge=1, le=9)
    arousal: int = Field(ge=1, le=9)
    liking: int = Field(ge=1, le=9)


class RatingResponse(BaseModel):
    trial_id: str
    derived_label: str
    label_source: str
    phase: str


class ArithmeticRequest(BaseModel):
    block_id: str
    answers: list[int]


class IngestResponse(BaseModel):
    accepted: int
    session_index: int
    new_discontinuities: int


class ExportResponse(BaseModel):
    path: str


class ErrorResponse(BaseModel):
    error: str
    detail: str
