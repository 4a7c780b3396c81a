"""Structural music features: tempo, articulation, mode, pitch range, and
melodic direction, plus corpus scaling to [1, 7] and the group ANOVA.

Spectral analyses run on audio resampled to 32 kHz with 2048-sample STFT
windows; the zero-crossing articulation uses the clip's native rate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from fractions import Fraction
from typing import NamedTuple

import numpy as np
from scipy.signal import resample_poly, stft

from . import analysis
from .audio import AudioClip
from .errors import InputError
from .quadrants import EmotionQuadrant

ANALYSIS_RATE = 32000
STFT_WINDOW = 2048
ONSET_HOP_S = 0.010
TEMPO_RANGE_BPM = (30.0, 300.0)
TEMPO_PRIOR_BPM = 120.0
TEMPO_PRIOR_OCTAVES = 1.0
BEAT_TIGHTNESS = 100.0

PITCH_FRAME_S = 0.040
PITCH_HOP_S = 0.010
PITCH_RANGE_HZ = (50.0, 1000.0)
PITCH_VALIDITY_THRESHOLD = 0.3
INTERVAL_THRESHOLD_SEMITONES = 0.5
MODE_CONFIDENCE_MARGIN = 0.05
ZCR_EPSILON = 1e-6

FEATURE_NAMES = ("tempo", "articulation", "mode", "pitch_range", "melodic_direction")
SCALE_RANGE = (1.0, 7.0)

# Krumhansl-Kessler key profiles, C-rooted before rotation.
KK_MAJOR = np.array([6.35, 2.23, 3.48, 2.33, 4.38, 4.09, 2.52, 5.19, 2.39, 3.66, 2.29, 2.88])
KK_MINOR = np.array([6.33, 2.68, 3.52, 5.38, 2.60, 3.53, 2.54, 4.75, 3.98, 2.69, 3.34, 3.17])


class TempoEstimate(NamedTuple):
    bpm: float
    low_confidence: bool


class ModeEstimate(NamedTuple):
    mode: str  # "major" | "minor"
    raw: float  # major-minus-minor best similarity
    low_confidence: bool


@dataclass(frozen=True)
class StructuralFeatures:
    clip_id: str
    quadrant: EmotionQuadrant | None
    tempo_bpm: float
    articulation_raw: float
    mode: str
    mode_raw: float
    pitch_range_semitones: float
    melodic_direction_raw: float
    flags: tuple[str, ...] = ()
    scaled: dict | None = None

    def raw_value(self, feature: str) -> float:
        return {
            "tempo": self.tempo_bpm,
            "articulation": self.articulation_raw,
            "mode": self.mode_raw,
            "pitch_range": self.pitch_range_semitones,
            "melodic_direction": self.melodic_direction_raw,
        }[feature]


def _resampled(clip: AudioClip) -> np.ndarray:
    if clip.sample_rate == ANALYSIS_RATE:
        return clip.samples
    ratio = Fraction(ANALYSIS_RATE, clip.sample_rate).limit_denominator(10000)
    return resample_poly(clip.samples, ratio.numerator, ratio.denominator)


def _hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f) / 700.0)


def _mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m) / 2595.0) - 1.0)


def _mel_filterbank(n_mels: int, n_fft: int, fs: float) -> np.ndarray:
    edges = _mel_to_hz(np.linspace(_hz_to_mel(0.0), _hz_to_mel(fs / 2), n_mels + 2))
    freqs = np.fft.rfftfreq(n_fft, d=1.0 / fs)
    bank = np.zeros((n_mels, len(freqs)))
    for m in range(n_mels):
        lo, center, hi = edges[m], edges[m + 1], edges[m + 2]
        up = (freqs - lo) / max(center - lo, 1e-9)
        down = (hi - freqs) / max(hi - center, 1e-9)
        bank[m] = np.clip(np.minimum(up, down), 0.0, None)
    return bank


def onset_envelope(clip: AudioClip) -> tuple[np.ndarray, float]:
    """Spectral-flux onset strength on a mel-weighted STFT, 10 ms hop.

    Returns (envelope, frames_per_second).
    """
    samples = _resampled(clip)
    hop = int(round(ONSET_HOP_S * ANALYSIS_RATE))
    _, _, spec = stft(
        samples,
        fs=ANALYSIS_RATE,
        window="hann",
        nperseg=STFT_WINDOW,
        noverlap=STFT_WINDOW - hop,
        boundary="zeros",
        padded=True,
    )
    power = np.abs(spec) ** 2
    mel = _mel_filterbank(40, STFT_WINDOW, ANALYSIS_RATE) @ power
    log_mel = np.log10(mel + 1e-10)
    flux = np.diff(log_mel, axis=1)
    envelope = np.clip(flux, 0.0, None).mean(axis=0)
    return envelope, ANALYSIS_RATE / hop


def _tempo_prior(bpm: np.ndarray) -> np.ndarray:
    octaves = np.log2(bpm / TEMPO_PRIOR_BPM)
    return np.exp(-0.5 * (octaves / TEMPO_PRIOR_OCTAVES) ** 2)


def _fold_bpm(bpm: float) -> float:
    while bpm < TEMPO_RANGE_BPM[0]:
        bpm *= 2.0
    while bpm > TEMPO_RANGE_BPM[1]:
        bpm /= 2.0
    return bpm


def _beat_track(envelope: np.ndarray, period: float, tightness: float = BEAT_TIGHTNESS) -> np.ndarray:
    """Dynamic-programming beat sequence for a fixed target period (frames)."""
    n = len(envelope)
    scale = envelope.std()
    local = envelope / scale if scale > 0 else envelope
    cumscore = np.full(n, -np.inf)
    backlink = np.full(n, -1, dtype=int)
    lo = max(int(round(period / 2)), 1)
    hi = int(round(period * 2))
    for t in range(n):
        cumscore[t] = local[t]
        p0, p1 = t - hi, t - lo
        if p1 < 0:
            continue
        window = np.arange(max(p0, 0), p1 + 1)
        txcost = -tightness * np.log(np.maximum(t - window, 1) / period) ** 2
        candidates = cumscore[window] + txcost
        best = int(np.argmax(candidates))
        if candidates[best] > -np.inf:
            cumscore[t] = local[t] + candidates[best]
            backlink[t] = window[best]
    beats = [int(np.argmax(cumscore))]
    while backlink[beats[-1]] >= 0:
        beats.append(int(backlink[beats[-1]]))
    return np.array(beats[::-1])


def estimate_tempo(clip: AudioClip) -> TempoEstimate:
    """Global tempo in BPM via onset autocorrelation and DP beat tracking.

    Silence (no onsets) falls back to the 120 BPM prior center flagged
    low-confidence instead of failing the corpus run.
    """
    if clip.duration_s < 2.0:
        raise InputError(f"need at least 2 s of audio for tempo, got {clip.duration_s:.2f} s")
    envelope, fps = onset_envelope(clip)
    if envelope.max() <= 1e-8:
        return TempoEstimate(TEMPO_PRIOR_BPM, low_confidence=True)
    centered = envelope - envelope.mean()
    acf = np.correlate(centered, centered, mode="full")[len(centered) - 1 :]
    min_lag = max(int(math.floor(fps * 60.0 / TEMPO_RANGE_BPM[1])), 1)
    max_lag = min(int(math.ceil(fps * 60.0 / TEMPO_RANGE_BPM[0])), len(acf) - 1)
    if max_lag <= min_lag:
        return TempoEstimate(TEMPO_PRIOR_BPM, low_confidence=True)
    lags = np.arange(min_lag, max_lag + 1)
    weighted = acf[lags] * _tempo_prior(fps * 60.0 / lags)
    period = float(lags[int(np.argmax(weighted))])

    beats = _beat_track(envelope, period)
    if len(beats) < 2:
        return TempoEstimate(_fold_bpm(fps * 60.0 / period), low_confidence=True)
    median_interval = float(np.median(np.diff(beats))) / fps
    return TempoEstimate(_fold_bpm(60.0 / median_interval), low_confidence=False)


def rhythmic_articulation(clip: AudioClip, frame_ms: float = 20.0) -> float:
    """Inverse mean zero-crossing rate over 20 ms frames (native rate).

    Frames carry one sample of right context so transitions straddling a
    frame boundary are counted exactly once.
    """
    if len(clip) == 0:
        raise InputError("cannot compute articulation of empty audio")
    signs = np.signbit(clip.samples)
    changes = signs[1:] != signs[:-1]
    hop = max(int(round(frame_ms / 1000.0 * clip.sample_rate)), 1)
    rates = [
        np.mean(changes[start : start + hop])
        for start in range(0, max(len(changes), 1), hop)
        if len(changes[start : start + hop])
    ]
    zcr = float(np.mean(rates)) if rates else 0.0
    return 1.0 / (zcr + ZCR_EPSILON)


def chroma_vector(clip: AudioClip) -> np.ndarray:
    """Time-averaged 12-bin pitch-class magnitude profile (A4 = 440 Hz).

    Magnitudes are folded at spectral peaks with quadratically interpolated
    frequencies; folding every raw bin smears tones across neighboring
    pitch classes at this window size (15.6 Hz bins vs a ~15 Hz semitone
    near C4).
    """
    samples = _resampled(clip)
    _, _, spec = stft(
        samples,
        fs=ANALYSIS_RATE,
        window="hann",
        nperseg=STFT_WINDOW,
        noverlap=STFT_WINDOW // 2,
        boundary=None,
    )
    magnitude = np.abs(spec).mean(axis=1)
    freqs = np.fft.rfftfreq(STFT_WINDOW, d=1.0 / ANALYSIS_RATE)
    chroma = np.zeros(12)
    floor = magnitude.max() * 1e-4
    for k in range(1, len(magnitude) - 1):
        m = magnitude[k]
        if m <= floor or m < magnitude[k - 1] or m < magnitude[k + 1]:
            continue
        curvature = magnitude[k - 1] - 2 * m + magnitude[k + 1]
        delta = 0.5 * (magnitude[k - 1] - magnitude[k + 1]) / curvature if abs(curvature) > 1e-12 else 0.0
        f = (k + delta) * ANALYSIS_RATE / STFT_WINDOW
        if 27.5 <= f <= 8000.0:
            pitch_class = int(round(12.0 * math.log2(f / 440.0))) % 12
            chroma[pitch_class] += m
    return chroma


def detect_mode(clip: AudioClip) -> ModeEstimate:
    """Major/minor decision by rotated template dot products on the chroma.

    mode_raw is the best-rotation major similarity minus the best-rotation
    minor similarity; near-ties (within 0.05) are flagged low-confidence.
    """
    if clip.duration_s < 1.0:
        raise InputError(f"need at least 1 s of audio for mode, got {clip.duration_s:.2f} s")
    chroma = chroma_vector(clip)
    norm = np.linalg.norm(chroma)
    if norm <= 1e-12:
        raise InputError("chroma undefined for silent audio")
    chroma = chroma / norm
    major = KK_MAJOR / np.linalg.norm(KK_MAJOR)
    minor = KK_MINOR / np.linalg.norm(KK_MINOR)
    best_major = max(float(chroma @ np.roll(major, r)) for r in range(12))
    best_minor = max(float(chroma @ np.roll(minor, r)) for r in range(12))
    raw = best_major - best_minor
    return ModeEstimate(
        mode="major" if raw >= 0 else "minor",
        raw=raw,
        low_confidence=abs(raw) < MODE_CONFIDENCE_MARGIN,
    )


def pitch_track(clip: AudioClip) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-frame fundamental frequency by normalized autocorrelation.

    Returns (frame_times_s, f0_hz, valid_mask); a frame is valid when its
    peak normalized autocorrelation reaches 0.3 in the 50-1000 Hz lag range.
    """
    samples = _resampled(clip)
    fs = ANALYSIS_RATE
    frame_len = int(round(PITCH_FRAME_S * fs))
    hop = int(round(PITCH_HOP_S * fs))
    min_lag = int(math.floor(fs / PITCH_RANGE_HZ[1]))
    max_lag = int(math.ceil(fs / PITCH_RANGE_HZ[0]))
    if len(samples) < frame_len:
        return np.array([]), np.array([]), np.array([], dtype=bool)

    starts = np.arange(0, len(samples) - frame_len + 1, hop)
    times = (starts + frame_len / 2) / fs
    frames = np.stack([samples[s : s + frame_len] for s in starts])
    lags = np.arange(min_lag, min(max_lag + 1, frame_len))

    # batch autocorrelation via FFT
    n_fft = 1 << int(np.ceil(np.log2(2 * frame_len)))
    spectra = np.fft.rfft(frames, n=n_fft, axis=1)
    corr = np.fft.irfft(np.abs(spectra) ** 2, n=n_fft, axis=1)[:, :frame_len]
    energy = np.cumsum(frames**2, axis=1)
    total = energy[:, -1:]
    head = energy[:, frame_len - 1 - lags]
    padded = np.concatenate([np.zeros((len(frames), 1)), energy], axis=1)
    tail = total - padded[:, lags]
    with np.errstate(invalid="ignore", divide="ignore"):
        r_all = np.where(head * tail > 0, corr[:, lags] / np.sqrt(head * tail), 0.0)

    f0 = np.zeros(len(starts))
    valid = np.zeros(len(starts), dtype=bool)
    quiet = np.abs(frames).max(axis=1) < 1e-6
    for i in range(len(starts)):
        if quiet[i]:
            continue
        r = r_all[i]
        peak = float(r.max())
        if peak < PITCH_VALIDITY_THRESHOLD:
            continue
        # earliest strong local max avoids octave-down errors on pure tones
        strong = max(PITCH_VALIDITY_THRESHOLD, 0.9 * peak)
        local_max = (r[1:-1] >= strong) & (r[1:-1] >= r[:-2]) & (r[1:-1] >= r[2:])
        hits = np.nonzero(local_max)[0]
        chosen = int(hits[0]) + 1 if hits.size else int(np.argmax(r))
        lag = float(lags[chosen])
        if 0 < chosen < len(r) - 1:
            curvature = r[chosen - 1] - 2 * r[chosen] + r[chosen + 1]
            if abs(curvature) > 1e-12:
                lag += 0.5 * (r[chosen - 1] - r[chosen + 1]) / curvature
        f0[i] = fs / lag
        valid[i] = True
    return times, f0, valid


def pitch_range(clip: AudioClip) -> float:
    """Semitone span between the highest and lowest valid pitches (0 if < 2)."""
    if clip.duration_s < 1.0:
        raise InputError(f"need at least 1 s of audio for pitch range, got {clip.duration_s:.2f} s")
    _, f0, valid = pitch_track(clip)
    voiced = f0[valid]
    if len(voiced) < 2:
        return 0.0
    return float(12.0 * np.log2(voiced.max() / voiced.min()))


def melodic_direction(clip: AudioClip) -> float:
    """Descending-trend score in [0, 1] from pitch intervals.

    Walks the valid pitch track and counts an interval whenever the pitch
    moves more than 0.5 semitone away from the last counted anchor, so slow
    continuous sweeps register. The ascending ratio is inverted (1 - raw)
    to emphasize descending trends; 0.5 when no interval qualifies.
    """
    _, f0, valid = pitch_track(clip)
    voiced = f0[valid]
    if len(voiced) < 2:
        return 0.5
    semitones = 12.0 * np.log2(voiced / 440.0)
    anchor = semitones[0]
    ascending = descending = 0
    for value in semitones[1:]:
        delta = value - anchor
        if abs(delta) > INTERVAL_THRESHOLD_SEMITONES:
            if delta > 0:
                ascending += 1
            else:
                descending += 1
            anchor = value
    if ascending + descending == 0:
        return 0.5
    return 1.0 - ascending / (ascending + descending)


def extract_features(clip: AudioClip, clip_id: str = "", quadrant: EmotionQuadrant | None = None) -> StructuralFeatures:
    """All five structural features for one clip, with degenerate-input flags."""
    flags: list[str] = []
    tempo = estimate_tempo(clip)
    if tempo.low_confidence:
        flags.append("tempo_low_confidence")
    mode = detect_mode(clip)
    if mode.low_confidence:
        flags.append("mode_low_confidence")
    _, f0, valid = pitch_track(clip)
    if valid.sum() < 2:
        flags.append("pitch_track_degenerate")
    return StructuralFeatures(
        clip_id=clip_id,
        quadrant=quadrant,
        tempo_bpm=tempo.bpm,
        articulation_raw=rhythmic_articulation(clip),
        mode=mode.mode,
        mode_raw=mode.raw,
        pitch_range_semitones=pitch_range(clip),
        melodic_direction_raw=melodic_direction(clip),
        flags=tuple(flags),
    )


def scale_features(corpus: list[StructuralFeatures]) -> list[StructuralFeatures]:
    """Min-max scale each feature over the corpus to [1, 7].

    A feature that is constant across the corpus maps to the midpoint 4.0.
    """
    if not corpus:
        raise InputError("cannot scale an empty corpus")
    lo, hi = SCALE_RANGE
    columns = {name: np.array([f.raw_value(name) for f in corpus]) for name in FEATURE_NAMES}
    scaled_columns = {}
    for name, values in columns.items():
        vmin, vmax = values.min(), values.max()
        if vmax > vmin:
            scaled_columns[name] = lo + (hi - lo) * (values - vmin) / (vmax - vmin)
        else:
            scaled_columns[name] = np.full(len(values), (lo + hi) / 2.0)
    return [
        replace(f, scaled={name: float(scaled_columns[name][i]) for name in FEATURE_NAMES})
        for i, f in enumerate(corpus)
    ]


def feature_group_anova(by_quadrant: dict) -> dict[str, tuple[float, float]]:
    """One-way ANOVA per feature across quadrant groups of scaled values."""
    results = {}
    for name in FEATURE_NAMES:
        groups = []
        for features in by_quadrant.values():
            values = [f.scaled[name] if f.scaled else f.raw_value(name) for f in features]
            groups.append(np.asarray(values))
        results[name] = analysis.one_way_anova(groups)
    return results
