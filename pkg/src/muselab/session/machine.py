"""Clock-driven phase state machine for one participant's visit.

Transitions fire at exact deadline timestamps regardless of polling
jitter: advancing the clock far ahead replays every due transition with
its scheduled time, so phase durations in the emitted timeline are exact.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from enum import Enum

from ..analysis import RatingTriple, TrialLabel, derive_label
from ..errors import ConflictError, OutOfWindowError, StateError, ValidationError
from ..quadrants import EmotionQuadrant
from ..timeline import EventKind, EventTimeline, TimelineEvent
from .plan import BLOCKS_PER_SESSION, N_SESSIONS, TRIALS_PER_BLOCK, PlanBlock, SessionPlan


class Phase(str, Enum):
    IDLE = "idle"
    PREPARATION = "preparation"
    PLAYBACK = "playback"
    RATING = "rating"
    REST = "rest"
    ARITHMETIC = "arithmetic"
    FINISHED = "finished"


@dataclass(frozen=True)
class SessionConfig:
    preparation_ms: int = 5_000
    playback_ms: int = 60_000
    rest_ms: int = 15_000
    rating_timeout_ms: int | None = 30_000
    arithmetic_problems: int = 3


@dataclass
class TrialRecord:
    trial_id: str
    clip_id: str
    music_quadrant: EmotionQuadrant
    t_prep: int
    t_music_on: int | None = None
    t_music_off: int | None = None
    t_rating: int | None = None
    t_rest: int | None = None
    rating: RatingTriple | None = None
    derived_label: TrialLabel | None = None
    unrated: bool = False


@dataclass
class ArithmeticInterlude:
    block_id: str
    problems: list[dict]
    answers: list[int] | None = None
    t_submitted: int | None = None


class SessionMachine:
    """Authoritative paradigm state for one participant."""

    def __init__(self, plan: SessionPlan, config: SessionConfig = SessionConfig()):
        self.plan = plan
        self.config = config
        self.phase = Phase.IDLE
        self.timeline = EventTimeline()
        self.trials: dict[str, TrialRecord] = {}
        self.interludes: list[ArithmeticInterlude] = []
        self._session_number = 1
        self._block_pos = 0
        self._trial_pos = 0
        self._phase_start: int | None = None
        self._phase_deadline: int | None = None
        self._last_now: int | None = None
        self._pending_interlude: ArithmeticInterlude | None = None

    # -- introspection -----------------------------------------------------

    def _current_block(self) -> PlanBlock:
        return self.plan.session_blocks(self._session_number)[self._block_pos]

    def current_trial_id(self) -> str | None:
        if self.phase in (Phase.IDLE, Phase.FINISHED, Phase.ARITHMETIC):
            return None
        block = self._current_block()
        return self.plan.trial_id(self._session_number, block.block_index, self._trial_pos + 1)

    def collected_ratings(self) -> int:
        return sum(1 for t in self.trials.values() if t.rating is not None)

    def snapshot(self, now: int) -> dict:
        self.advance(now)
        state: dict = {
            "phase": self.phase.value,
            "session": self._session_number,
            "block": self._block_pos + 1,
            "trial": self._trial_pos + 1,
            "total_trials": self.plan.total_trials,
            "collected_ratings": self.collected_ratings(),
            "now_ms": now,
            "phase_deadline_ms": self._phase_deadline,
            "remaining_ms": max(self._phase_deadline - now, 0) if self._phase_deadline is not None else None,
        }
        trial_id = self.current_trial_id()
        if trial_id is not None:
            block = self._current_block()
            state["trial_id"] = trial_id
            state["clip_id"] = block.clip_ids[self._trial_pos]
            state["music_quadrant"] = block.quadrant.value
        if self.phase == Phase.ARITHMETIC and self._pending_interlude is not None:
            state["arithmetic"] = {
                "block_id": self._pending_interlude.block_id,
                "problems": [{"id": p["id"], "text": p["text"]} for p in self._pending_interlude.problems],
            }
        if self.phase == Phase.IDLE:
            state["awaiting_session"] = self._session_number if self._session_number <= N_SESSIONS else None
        return state

    # -- clock -------------------------------------------------------------

    def advance(self, now: int) -> None:
        """Apply every transition due at or before `now`."""
        if self._last_now is not None and now < self._last_now:
            raise StateError(f"clock moved backwards: {now} < {self._last_now}")
        self._last_now = now
        while True:
            if self.phase in (Phase.IDLE, Phase.ARITHMETIC, Phase.FINISHED):
                return
            if self._phase_deadline is None or now < self._phase_deadline:
                return
            at = self._phase_deadline
            if self.phase == Phase.PREPARATION:
                self._to_playback(at)
            elif self.phase == Phase.PLAYBACK:
                self._to_rating(at)
            elif self.phase == Phase.RATING:
                self._current_trial().unrated = True
                self._to_rest(at)
            elif self.phase == Phase.REST:
                self._after_rest(at)

    # -- commands ----------------------------------------------------------

    def start_session(self, now: int) -> None:
        self.advance(now)
        if self.phase == Phase.FINISHED:
            raise StateError("session already finished")
        if self.phase != Phase.IDLE:
            raise StateError(f"cannot start a session during phase {self.phase.value}")
        self._block_pos = 0
        self._trial_pos = 0
        self._emit(now, EventKind.BLOCK_START, self._current_block().block_id)
        self._enter_preparation(now)

    def record_rating(self, now: int, trial_id: str, rating: RatingTriple) -> TrialRecord:
        self.advance(now)
        existing = self.trials.get(trial_id)
        if existing is not None and existing.rating is not None:
            raise ConflictError(f"trial {trial_id} already has a rating")
        if self.phase != Phase.RATING:
            raise OutOfWindowError(f"rating window is not open (phase {self.phase.value})")
        current = self.current_trial_id()
        if trial_id != current:
            raise OutOfWindowError(f"rating window is open for {current}, not {trial_id}")
        record = self._current_trial()
        record.rating = rating
        record.derived_label = derive_label(rating, record.music_quadrant)
        record.t_rating = now
        self._to_rest(now)
        return record

    def submit_arithmetic(self, now: int, block_id: str, answers: list[int]) -> None:
        self.advance(now)
        if self.phase != Phase.ARITHMETIC:
            raise OutOfWindowError(f"no arithmetic interlude is open (phase {self.phase.value})")
        interlude = self._pending_interlude
        if block_id != interlude.block_id:
            raise ValidationError(f"arithmetic answers are for block {interlude.block_id}, got {block_id}")
        if len(answers) != len(interlude.problems):
            raise ValidationError(f"expected {len(interlude.problems)} answers, got {len(answers)}")
        interlude.answers = [int(a) for a in answers]
        interlude.t_submitted = now
        self._pending_interlude = None
        self._block_pos += 1
        self._trial_pos = 0
        self._emit(now, EventKind.BLOCK_START, self._current_block().block_id)
        self._enter_preparation(now)

    # -- transitions -------------------------------------------------------

    def _emit(self, t: int, kind: EventKind, trial_id: str | None) -> None:
        self.timeline.append(TimelineEvent(t_ms=t, kind=kind, trial_id=trial_id))

    def _current_trial(self) -> TrialRecord:
        return self.trials[self.current_trial_id()]

    def _enter_preparation(self, t: int) -> None:
        self.phase = Phase.PREPARATION
        self._phase_start = t
        self._phase_deadline = t + self.config.preparation_ms
        block = self._current_block()
        trial_id = self.plan.trial_id(self._session_number, block.block_index, self._trial_pos + 1)
        self.trials[trial_id] = TrialRecord(
            trial_id=trial_id,
            clip_id=block.clip_ids[self._trial_pos],
            music_quadrant=block.quadrant,
            t_prep=t,
        )
        self._emit(t, EventKind.TRIAL_PREP, trial_id)

    def _to_playback(self, t: int) -> None:
        self.phase = Phase.PLAYBACK
        self._phase_start = t
        self._phase_deadline = t + self.config.playback_ms
        record = self._current_trial()
        record.t_music_on = t
        self._emit(t, EventKind.MUSIC_ON, record.trial_id)

    def _to_rating(self, t: int) -> None:
        self.phase = Phase.RATING
        self._phase_start = t
        timeout = self.config.rating_timeout_ms
        self._phase_deadline = t + timeout if timeout is not None else None
        record = self._current_trial()
        record.t_music_off = t
        self._emit(t, EventKind.MUSIC_OFF, record.trial_id)
        self._emit(t, EventKind.RATING_OPEN, record.trial_id)

    def _to_rest(self, t: int) -> None:
        record = self._current_trial()
        record.t_rest = t
        self._emit(t, EventKind.REST, record.trial_id)
        self.phase = Phase.REST
        self._phase_start = t
        self._phase_deadline = t + self.config.rest_ms

    def _after_rest(self, t: int) -> None:
        if self._trial_pos + 1 < TRIALS_PER_BLOCK:
            self._trial_pos += 1
            self._enter_preparation(t)
        elif self._block_pos + 1 < BLOCKS_PER_SESSION:
            self._open_interlude(t)
        elif self._session_number < N_SESSIONS:
            self._session_number += 1
            self.phase = Phase.IDLE
            self._phase_start = t
            self._phase_deadline = None
        else:
            self.phase = Phase.FINISHED
            self._phase_start = t
            self._phase_deadline = None

    def _open_interlude(self, t: int) -> None:
        block = self._current_block()
        rng = random.Random((self.plan.seed, self._session_number, block.block_id).__repr__())
        problems = []
        for i in range(self.config.arithmetic_problems):
            a, b = rng.randint(0, 9), rng.randint(0, 9)
            if rng.random() < 0.5:
                problems.append({"id": i, "text": f"{a} + {b} = ?", "answer": a + b})
            else:
                hi, lo = max(a, b), min(a, b)
                problems.append({"id": i, "text": f"{hi} - {lo} = ?", "answer": hi - lo})
        interlude = ArithmeticInterlude(block_id=block.block_id, problems=problems)
        self.interludes.append(interlude)
        self._pending_interlude = interlude
        self.phase = Phase.ARITHMETIC
        self._phase_start = t
        self._phase_deadline = None
