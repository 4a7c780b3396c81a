"""Two-stage clip screening: technical-flaw rejection, then geometric
selection of evaluator score means in valence-arousal space.
"""

from __future__ import annotations

import csv
import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .audio import AudioClip
from .errors import InputError, MissingDataError, ValidationError
from .quadrants import ALL_QUADRANTS, EmotionQuadrant

# Selection circles: (corner in (v, a), radius). LAHV additionally requires
# v >= 5 and a <= 5.
SELECTION_RULES: dict[EmotionQuadrant, tuple[tuple[float, float], float]] = {
    EmotionQuadrant.HAHV: ((9.0, 9.0), 2.0 * math.sqrt(2.0)),
    EmotionQuadrant.HALV: ((1.0, 9.0), 2.0 * math.sqrt(2.0)),
    EmotionQuadrant.LALV: ((1.0, 1.0), 3.4),
    EmotionQuadrant.LAHV: ((9.0, 1.0), 5.0),
}

# Scores sitting exactly on a circle are selected. Decimal coordinates are
# not exact in binary floats (e.g. 4.4 - 1 > 3.4), so squared distances get
# a hair of relative slack rather than an exact <=.
_BOUNDARY_RTOL = 1e-12


@dataclass(frozen=True)
class EvaluatorRating:
    evaluator_id: str
    clip_id: str
    valence: int
    arousal: int

    def __post_init__(self):
        for name in ("valence", "arousal"):
            value = getattr(self, name)
            if not isinstance(value, int) or not 1 <= value <= 9:
                raise ValidationError(f"{name} must be an integer in [1, 9], got {value!r}")


@dataclass(frozen=True)
class ClipScore:
    clip_id: str
    v: float
    a: float
    n_raters: int

    def __post_init__(self):
        if not (1.0 <= self.v <= 9.0 and 1.0 <= self.a <= 9.0):
            raise ValidationError(f"scores must lie in [1, 9], got v={self.v}, a={self.a}")
        if self.n_raters < 1:
            raise ValidationError("n_raters must be >= 1")


@dataclass(frozen=True)
class ClipRecord:
    """A generated music clip with its intended label."""

    clip_id: str
    quadrant: EmotionQuadrant
    audio: AudioClip | None = None
    prompt: str | None = None


@dataclass(frozen=True)
class ScreeningThresholds:
    spike_threshold: float = 10.0
    silence_rms_db: float = -50.0
    silence_max_s: float = 3.0
    frame_ms: float = 10.0


@dataclass
class ScreeningReport:
    retained_technical: list[str] = field(default_factory=list)
    selected: dict[str, list[str]] = field(default_factory=dict)
    rejected: list[tuple[str, str]] = field(default_factory=list)

    def selected_count(self) -> int:
        return sum(len(ids) for ids in self.selected.values())

    def to_dict(self) -> dict:
        return {
            "retained_technical": list(self.retained_technical),
            "selected": {q: list(ids) for q, ids in self.selected.items()},
            "rejected": [{"clip_id": cid, "reason": reason} for cid, reason in self.rejected],
        }


class TechnicalScreenResult(NamedTuple):
    passed: bool
    reason: str | None


def technical_screen(
    audio: AudioClip,
    spike_threshold: float = 10.0,
    silence_rms_db: float = -50.0,
    silence_max_s: float = 3.0,
    frame_ms: float = 10.0,
) -> TechnicalScreenResult:
    """Reject clips with abrupt noise spikes or extended silence.

    A clip fails "abrupt_noise" when some frame's peak exceeds
    spike_threshold times the 95th percentile of frame peaks, and
    "extended_silence" when frame RMS stays below silence_rms_db (dBFS)
    for longer than silence_max_s contiguously.
    """
    if len(audio) == 0:
        raise InputError("cannot screen zero-length audio")
    frame_len = max(int(round(frame_ms / 1000.0 * audio.sample_rate)), 1)
    n_frames = len(audio) // frame_len
    tail = len(audio) - n_frames * frame_len
    frames = audio.samples[: n_frames * frame_len].reshape(n_frames, frame_len)
    if tail:
        frames = list(frames) + [audio.samples[-tail:]]

    peaks = np.array([np.abs(f).max() for f in frames])
    reference = np.percentile(peaks, 95)
    if np.any(peaks > spike_threshold * reference):
        return TechnicalScreenResult(False, "abrupt_noise")

    silence_floor = 10.0 ** (silence_rms_db / 20.0)
    run = 0.0
    for f in frames:
        rms = math.sqrt(float(np.mean(np.square(f))))
        if rms < silence_floor:
            run += len(f) / audio.sample_rate
            if run > silence_max_s:
                return TechnicalScreenResult(False, "extended_silence")
        else:
            run = 0.0
    return TechnicalScreenResult(True, None)


def aggregate_scores(
    ratings: list[EvaluatorRating], expected_clip_ids: list[str] | None = None
) -> list[ClipScore]:
    """Per-clip arithmetic mean of valence and arousal, sorted by clip id."""
    by_clip: dict[str, list[EvaluatorRating]] = defaultdict(list)
    for rating in ratings:
        by_clip[rating.clip_id].append(rating)
    if expected_clip_ids is not None:
        missing = sorted(set(expected_clip_ids) - set(by_clip))
        if missing:
            raise MissingDataError(f"no ratings for {len(missing)} clip(s): {', '.join(missing)}", missing)
    scores = []
    for clip_id in sorted(by_clip):
        group = by_clip[clip_id]
        scores.append(
            ClipScore(
                clip_id=clip_id,
                v=sum(r.valence for r in group) / len(group),
                a=sum(r.arousal for r in group) / len(group),
                n_raters=len(group),
            )
        )
    return scores


def select_clip(score: ClipScore, intended: EmotionQuadrant) -> bool:
    """True iff the mean score satisfies the intended quadrant's rule."""
    (cv, ca), radius = SELECTION_RULES[intended]
    d2 = (score.v - cv) ** 2 + (score.a - ca) ** 2
    inside = d2 <= radius * radius * (1.0 + _BOUNDARY_RTOL)
    if intended == EmotionQuadrant.LAHV:
        inside = inside and score.v >= 5.0 and score.a <= 5.0
    return inside


def screen_library(
    clips: list[ClipRecord],
    ratings: list[EvaluatorRating],
    thresholds: ScreeningThresholds = ScreeningThresholds(),
) -> ScreeningReport:
    """Run the full pipeline: technical screen, score aggregation, selection."""
    report = ScreeningReport(selected={q.value: [] for q in ALL_QUADRANTS})
    clips = sorted(clips, key=lambda c: c.clip_id)
    retained: list[ClipRecord] = []
    for clip in clips:
        if clip.audio is None:
            raise InputError(f"clip {clip.clip_id} has no audio to screen")
        outcome = technical_screen(
            clip.audio,
            spike_threshold=thresholds.spike_threshold,
            silence_rms_db=thresholds.silence_rms_db,
            silence_max_s=thresholds.silence_max_s,
            frame_ms=thresholds.frame_ms,
        )
        if outcome.passed:
            retained.append(clip)
            report.retained_technical.append(clip.clip_id)
        else:
            report.rejected.append((clip.clip_id, outcome.reason))

    scores = {s.clip_id: s for s in aggregate_scores(ratings, [c.clip_id for c in retained])}
    for clip in retained:
        if select_clip(scores[clip.clip_id], clip.quadrant):
            report.selected[clip.quadrant.value].append(clip.clip_id)
        else:
            report.rejected.append((clip.clip_id, "outside_target_region"))
    report.rejected.sort()
    return report


def load_ratings_csv(path) -> list[EvaluatorRating]:
    """Read `evaluator_id,clip_id,valence,arousal` rows (header required)."""
    ratings = []
    with open(path, newline="") as handle:
        reader = csv.DictReader(handle)
        required = {"evaluator_id", "clip_id", "valence", "arousal"}
        if reader.fieldnames is None or not required.issubset(reader.fieldnames):
            raise InputError(f"ratings CSV must have columns {sorted(required)}, got {reader.fieldnames}")
        for row in reader:
            ratings.append(
                EvaluatorRating(
                    evaluator_id=row["evaluator_id"],
                    clip_id=row["clip_id"],
                    valence=int(row["valence"]),
                    arousal=int(row["arousal"]),
                )
            )
    return ratings
