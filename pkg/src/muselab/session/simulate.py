"""Synthetic participant: drives the session machine with a scripted
client and synthesizes device streams with quadrant-dependent components.

EEG gets alpha bursts keyed to arousal and beta bursts keyed to valence;
fNIRS intensities come from a forward optical model whose slow waves key
HbO to valence and HbR to arousal, with a cardiac component whose rate
follows arousal (feeding the PPG features) and a Mayer-band oscillation.
"""

from __future__ import annotations

import hashlib
import random
import re
from dataclasses import dataclass, field

import numpy as np

from ..analysis import RatingTriple
from ..errors import InputError
from ..quadrants import ALL_QUADRANTS, EmotionQuadrant
from ..sigproc import (
    EEG_SAMPLE_RATE,
    FNIRS_SAMPLE_RATE,
    DEFAULT_OPTICAL_CONSTANTS,
    EegRecording,
    FnirsRecording,
    bandpass,
    mbll_forward,
)
from ..timeline import EventTimeline
from .machine import Phase, SessionConfig, SessionMachine, TrialRecord
from .plan import SessionPlan, build_plan


@dataclass(frozen=True)
class SimulationProfile:
    rating_dwell_ms: tuple[int, int] = (4_000, 10_000)
    arithmetic_dwell_ms: tuple[int, int] = (15_000, 25_000)
    inter_session_break_ms: int = 120_000
    tail_ms: int = 2_000
    exact_five_probability: float = 0.05
    eeg_noise_uv: float = 10.0
    eeg_alpha_uv: tuple[float, float] = (4.0, 22.0)  # (arousal low, high)
    eeg_beta_uv: tuple[float, float] = (4.0, 22.0)  # (valence low, high)
    hbo_task_um: tuple[float, float] = (0.3, 1.2)  # (valence low, high)
    hbr_task_um: tuple[float, float] = (0.3, 1.2)  # (arousal low, high)
    cardiac_hz: tuple[float, float] = (1.0, 1.4)  # (arousal low, high)
    cardiac_od_amp: tuple[float, float] = (0.08, 0.16)  # (valence low, high)
    subject_gain_range: tuple[float, float] = (0.85, 1.15)


@dataclass
class SimulatedSession:
    session_index: int
    span_ms: tuple[int, int]
    eeg: EegRecording
    fnirs: FnirsRecording
    timeline: EventTimeline
    trials: list[TrialRecord] = field(default_factory=list)


def synthetic_library(per_quadrant: int = 8) -> dict:
    """Clip-id-only library for plan building when no real clips exist."""
    return {
        q.value: [f"{q.value.lower()}_clip{i:02d}" for i in range(per_quadrant)]
        for q in ALL_QUADRANTS
    }


def _stable_seed(key: str) -> int:
    return int.from_bytes(hashlib.sha256(key.encode("utf-8")).digest()[:8], "big")


def _draw_level(rng: random.Random, high: bool, exact_five_p: float) -> int:
    if rng.random() < exact_five_p:
        return 5
    pool = (6, 7, 8, 9) if high else (1, 2, 3, 4)
    return rng.choices(pool, weights=(30, 35, 25, 10) if high else (10, 25, 35, 30))[0]


def draw_rating(rng: random.Random, quadrant: EmotionQuadrant, exact_five_p: float) -> RatingTriple:
    valence = _draw_level(rng, quadrant.valence_high, exact_five_p)
    arousal = _draw_level(rng, quadrant.arousal_high, exact_five_p)
    liking = min(9, max(1, valence + rng.randint(-1, 1)))
    return RatingTriple(valence=valence, arousal=arousal, liking=liking)


def _answer(problem_text: str) -> int:
    m = re.match(r"(\d+) ([+-]) (\d+)", problem_text)
    a, op, b = int(m.group(1)), m.group(2), int(m.group(3))
    return a + b if op == "+" else a - b


def drive_machine(
    machine: SessionMachine, profile: SimulationProfile, rng: random.Random, start_ms: int = 0
) -> list[tuple[int, int]]:
    """Run both sessions to completion; returns per-session (start, end) ms."""
    spans = []
    t = start_ms
    for _ in range(2):
        span_start = t
        machine.start_session(t)
        while True:
            state = machine.snapshot(t)
            phase = state["phase"]
            if phase in (Phase.PREPARATION.value, Phase.PLAYBACK.value, Phase.REST.value):
                t = state["phase_deadline_ms"]
            elif phase == Phase.RATING.value:
                t += rng.randint(*profile.rating_dwell_ms)
                rating = draw_rating(rng, EmotionQuadrant(state["music_quadrant"]), profile.exact_five_probability)
                machine.record_rating(t, state["trial_id"], rating)
            elif phase == Phase.ARITHMETIC.value:
                t += rng.randint(*profile.arithmetic_dwell_ms)
                problems = state["arithmetic"]["problems"]
                machine.submit_arithmetic(t, state["arithmetic"]["block_id"], [_answer(p["text"]) for p in problems])
            else:  # idle between sessions, or finished
                spans.append((span_start, t))
                break
        t += profile.inter_session_break_ms
    return spans


def _session_trials(machine: SessionMachine, session_index: int) -> list[TrialRecord]:
    prefix = f"s{session_index}b"
    return [t for t in machine.trials.values() if t.trial_id.startswith(prefix)]


def _session_timeline(machine: SessionMachine, span: tuple[int, int]) -> EventTimeline:
    events = [e for e in machine.timeline.events if span[0] <= e.t_ms <= span[1]]
    return EventTimeline(events=list(events))


def _synth_eeg(
    trials: list[TrialRecord], span: tuple[int, int], gain: float, profile: SimulationProfile, seed: str
) -> EegRecording:
    fs = EEG_SAMPLE_RATE
    t0, t1 = span
    n = int(round((t1 - t0 + profile.tail_ms) * fs / 1000.0))
    rng = np.random.default_rng(_stable_seed(seed))
    channels = []
    for ch in range(2):
        noise = bandpass(rng.normal(0.0, profile.eeg_noise_uv, n), 0.5, 45.0, fs)
        channels.append(noise)
    times_s = np.arange(n) / fs
    for trial in trials:
        if trial.t_music_on is None or trial.t_music_off is None:
            continue
        label = trial.derived_label.quadrant if trial.derived_label else trial.music_quadrant
        i0 = int(round((trial.t_music_on - t0) * fs / 1000.0))
        i1 = int(round((trial.t_music_off - t0) * fs / 1000.0))
        segment_t = times_s[i0:i1]
        alpha = gain * profile.eeg_alpha_uv[int(label.arousal_high)]
        beta = gain * profile.eeg_beta_uv[int(label.valence_high)]
        phase = rng.uniform(0, 2 * np.pi, size=2)
        burst = alpha * np.sin(2 * np.pi * 10.0 * segment_t + phase[0]) + beta * np.sin(
            2 * np.pi * 22.0 * segment_t + phase[1]
        )
        channels[0][i0:i1] += burst
        channels[1][i0:i1] += 0.9 * burst
    timestamps = t0 + np.arange(n) * (1000 // fs)
    return EegRecording(
        fp1=np.round(channels[0], 4), fp2=np.round(channels[1], 4), timestamps_ms=timestamps
    )


def _synth_fnirs(
    trials: list[TrialRecord], span: tuple[int, int], gain: float, profile: SimulationProfile, seed: str
) -> FnirsRecording:
    fs = FNIRS_SAMPLE_RATE
    t0, t1 = span
    n = int(round((t1 - t0 + profile.tail_ms) * fs / 1000.0))
    rng = np.random.default_rng(_stable_seed(seed))
    t_s = np.arange(n) / fs

    freq = np.full(n, profile.cardiac_hz[0])
    cardiac_amp = np.full(n, profile.cardiac_od_amp[0])
    task_hbo = np.zeros(n)
    task_hbr = np.zeros(n)
    for trial in trials:
        if trial.t_music_on is None or trial.t_music_off is None:
            continue
        label = trial.derived_label.quadrant if trial.derived_label else trial.music_quadrant
        i0 = int(round((trial.t_music_on - t0) * fs / 1000.0))
        i1 = int(round((trial.t_music_off - t0) * fs / 1000.0))
        rel = t_s[i0:i1] - t_s[i0]
        freq[i0:i1] = profile.cardiac_hz[int(label.arousal_high)]
        cardiac_amp[i0:i1] = profile.cardiac_od_amp[int(label.valence_high)]
        task_hbo[i0:i1] = gain * profile.hbo_task_um[int(label.valence_high)] * np.sin(2 * np.pi * 0.05 * rel)
        task_hbr[i0:i1] = gain * profile.hbr_task_um[int(label.arousal_high)] * np.sin(2 * np.pi * 0.07 * rel)

    cardiac_phase = 2 * np.pi * np.cumsum(freq) / fs
    channel_phase = rng.uniform(0, 2 * np.pi, size=8)
    reference = rng.uniform(7000.0, 11000.0, size=(8, 2))

    hbo = np.empty((8, n))
    hbr = np.empty((8, n))
    for ch in range(8):
        cardiac = cardiac_amp * np.sin(cardiac_phase + channel_phase[ch])
        mayer = 0.06 * np.sin(2 * np.pi * 0.095 * t_s + channel_phase[ch])
        drift = 0.05 * np.sin(2 * np.pi * 0.004 * t_s + 0.5 * channel_phase[ch])
        hbo[ch] = task_hbo + cardiac + mayer + drift + rng.normal(0.0, 0.02, n)
        hbr[ch] = task_hbr + 0.3 * cardiac - 0.4 * task_hbo + rng.normal(0.0, 0.02, n)

    od = mbll_forward(hbo, hbr, DEFAULT_OPTICAL_CONSTANTS)  # (8, n, 2)
    intensity = np.empty((8, 2, n))
    for w in range(2):
        intensity[:, w, :] = reference[:, w : w + 1] * np.exp(-od[:, :, w])
    timestamps = t0 + np.arange(n) * (1000 // fs)
    return FnirsRecording(intensity=np.round(intensity, 3), timestamps_ms=timestamps)


def simulate_device(
    plan: SessionPlan,
    profile: SimulationProfile = SimulationProfile(),
    seed: int = 0,
    config: SessionConfig = SessionConfig(),
) -> list[SimulatedSession]:
    """Deterministically synthesize a full two-session visit for one plan."""
    rng = random.Random((plan.participant_id, seed, "driver").__repr__())
    machine = SessionMachine(plan, config)
    spans = drive_machine(machine, profile, rng)
    if machine.phase != Phase.FINISHED:
        raise InputError("simulated visit did not reach the finished state")
    gain = random.Random((plan.participant_id, seed, "gain").__repr__()).uniform(*profile.subject_gain_range)

    sessions = []
    for session_index, span in zip((1, 2), spans):
        trials = _session_trials(machine, session_index)
        sessions.append(
            SimulatedSession(
                session_index=session_index,
                span_ms=span,
                eeg=_synth_eeg(trials, span, gain, profile, f"{plan.participant_id}/{seed}/eeg{session_index}"),
                fnirs=_synth_fnirs(trials, span, gain, profile, f"{plan.participant_id}/{seed}/nirs{session_index}"),
                timeline=_session_timeline(machine, span),
                trials=trials,
            )
        )
    return sessions


def simulate_study(
    n_subjects: int,
    seed: int = 0,
    profile: SimulationProfile = SimulationProfile(),
    library: dict | None = None,
) -> list[tuple[SessionPlan, list[SimulatedSession]]]:
    """Plans and simulated visits for a cohort of synthetic participants."""
    if n_subjects < 1:
        raise InputError("need at least one subject")
    library = library or synthetic_library()
    out = []
    for i in range(n_subjects):
        participant_id = f"P{i + 1:02d}"
        plan = build_plan(participant_id, library, seed + i)
        out.append((plan, simulate_device(plan, profile, seed=seed + i)))
    return out
