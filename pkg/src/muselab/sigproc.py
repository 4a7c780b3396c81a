"""Preprocessing of raw device streams.

EEG: artifact exclusion, 0.1-40 Hz zero-phase filtering, trial epoching
with baseline correction. fNIRS: optical-density conversion, PPG
extraction, hemoglobin concentrations via the modified Beer-Lambert
relation, pre-stimulus baseline correction, and the slow systemic band
filter.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.signal import butter, sosfiltfilt

from .errors import ConfigurationError, DataError, InputError
from .timeline import EventTimeline

EEG_SAMPLE_RATE = 250
FNIRS_SAMPLE_RATE = 25
WAVELENGTHS_NM = (735, 850)
N_FNIRS_CHANNELS = 8

EEG_BAND = (0.1, 40.0)
PPG_BAND = (0.5, 4.0)
SYSTEMIC_BAND = (0.01, 0.1)

EPOCH_WINDOW_S = (25.0, 55.0)
FNIRS_BASELINE_S = 5.0
FNIRS_TASK_S = 60.0

HBT_TOLERANCE_UM = 1e-9


# ---------------------------------------------------------------------------
# Recording containers
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EegRecording:
    """Two prefrontal channels (Fp1, Fp2) in microvolts at 250 Hz."""

    fp1: np.ndarray
    fp2: np.ndarray
    timestamps_ms: np.ndarray
    sample_rate: int = EEG_SAMPLE_RATE
    artifact_mask: np.ndarray | None = None

    def __post_init__(self):
        fp1 = np.asarray(self.fp1, dtype=np.float64)
        fp2 = np.asarray(self.fp2, dtype=np.float64)
        ts = np.asarray(self.timestamps_ms, dtype=np.int64)
        if not (len(fp1) == len(fp2) == len(ts)):
            raise InputError(
                f"channel/timestamp lengths differ: fp1={len(fp1)} fp2={len(fp2)} ts={len(ts)}"
            )
        if self.sample_rate != EEG_SAMPLE_RATE:
            raise InputError(f"EEG sample rate must be {EEG_SAMPLE_RATE} Hz, got {self.sample_rate}")
        object.__setattr__(self, "fp1", fp1)
        object.__setattr__(self, "fp2", fp2)
        object.__setattr__(self, "timestamps_ms", ts)

    @property
    def n_samples(self) -> int:
        return len(self.fp1)

    def channels(self) -> np.ndarray:
        return np.stack([self.fp1, self.fp2])

    def index_at(self, t_ms: float) -> int:
        t0 = int(self.timestamps_ms[0]) if self.n_samples else 0
        return int(round((t_ms - t0) * self.sample_rate / 1000.0))


@dataclass(frozen=True)
class FnirsRecording:
    """Raw light intensities, shape (8 channels, 2 wavelengths, samples) at 25 Hz.

    Wavelength axis order follows WAVELENGTHS_NM = (735, 850). Intensities
    must be strictly positive (device units).
    """

    intensity: np.ndarray
    timestamps_ms: np.ndarray
    sample_rate: int = FNIRS_SAMPLE_RATE
    artifact_mask: np.ndarray | None = None

    def __post_init__(self):
        intensity = np.asarray(self.intensity, dtype=np.float64)
        ts = np.asarray(self.timestamps_ms, dtype=np.int64)
        if intensity.ndim != 3 or intensity.shape[:2] != (N_FNIRS_CHANNELS, len(WAVELENGTHS_NM)):
            raise InputError(
                f"intensity must have shape ({N_FNIRS_CHANNELS}, {len(WAVELENGTHS_NM)}, n), got {intensity.shape}"
            )
        if intensity.shape[2] != len(ts):
            raise InputError("timestamp count does not match sample count")
        if self.sample_rate != FNIRS_SAMPLE_RATE:
            raise InputError(f"fNIRS sample rate must be {FNIRS_SAMPLE_RATE} Hz, got {self.sample_rate}")
        _check_positive_intensity(intensity)
        object.__setattr__(self, "intensity", intensity)
        object.__setattr__(self, "timestamps_ms", ts)

    @property
    def n_samples(self) -> int:
        return self.intensity.shape[2]

    def index_at(self, t_ms: float) -> int:
        t0 = int(self.timestamps_ms[0]) if self.n_samples else 0
        return int(round((t_ms - t0) * self.sample_rate / 1000.0))


def _check_positive_intensity(intensity: np.ndarray) -> None:
    bad = np.argwhere(intensity <= 0)
    if bad.size:
        ch, wl, idx = bad[0]
        raise DataError(
            f"nonpositive intensity at channel {ch + 1}, wavelength {WAVELENGTHS_NM[wl]} nm, sample {idx}"
        )


@dataclass(frozen=True)
class OpticalDensitySeries:
    """Optical-density changes, same (8, 2, n) layout as the raw intensities."""

    od: np.ndarray
    timestamps_ms: np.ndarray
    sample_rate: int = FNIRS_SAMPLE_RATE

    def __post_init__(self):
        od = np.asarray(self.od, dtype=np.float64)
        if od.ndim != 3 or od.shape[:2] != (N_FNIRS_CHANNELS, len(WAVELENGTHS_NM)):
            raise InputError(f"od must have shape ({N_FNIRS_CHANNELS}, 2, n), got {od.shape}")
        object.__setattr__(self, "od", od)
        object.__setattr__(self, "timestamps_ms", np.asarray(self.timestamps_ms, dtype=np.int64))

    def wavelength_index(self, nm: int) -> int:
        try:
            return WAVELENGTHS_NM.index(nm)
        except ValueError:
            raise ConfigurationError(f"unknown wavelength {nm} nm; have {WAVELENGTHS_NM}") from None


@dataclass(frozen=True)
class PpgSeries:
    """Pulsatile component per fNIRS channel, shape (8, n) at 25 Hz."""

    values: np.ndarray
    timestamps_ms: np.ndarray
    sample_rate: int = FNIRS_SAMPLE_RATE


@dataclass(frozen=True)
class HemodynamicSeries:
    """Concentration changes in micromolar, shape (8, n) per chromophore."""

    hbo: np.ndarray
    hbr: np.ndarray
    hbt: np.ndarray
    timestamps_ms: np.ndarray
    sample_rate: int = FNIRS_SAMPLE_RATE

    def __post_init__(self):
        hbo = np.asarray(self.hbo, dtype=np.float64)
        hbr = np.asarray(self.hbr, dtype=np.float64)
        hbt = np.asarray(self.hbt, dtype=np.float64)
        if not (hbo.shape == hbr.shape == hbt.shape):
            raise InputError("hbo/hbr/hbt shapes differ")
        if hbo.ndim != 2 or hbo.shape[0] != N_FNIRS_CHANNELS:
            raise InputError(f"expected ({N_FNIRS_CHANNELS}, n) series, got {hbo.shape}")
        if hbt.size and np.max(np.abs(hbt - (hbo + hbr))) > HBT_TOLERANCE_UM:
            raise InputError("hbt is not hbo + hbr within tolerance")
        object.__setattr__(self, "hbo", hbo)
        object.__setattr__(self, "hbr", hbr)
        object.__setattr__(self, "hbt", hbt)
        object.__setattr__(self, "timestamps_ms", np.asarray(self.timestamps_ms, dtype=np.int64))

    @classmethod
    def from_components(cls, hbo, hbr, timestamps_ms, sample_rate=FNIRS_SAMPLE_RATE) -> "HemodynamicSeries":
        hbo = np.asarray(hbo, dtype=np.float64)
        hbr = np.asarray(hbr, dtype=np.float64)
        return cls(hbo=hbo, hbr=hbr, hbt=hbo + hbr, timestamps_ms=timestamps_ms, sample_rate=sample_rate)

    @property
    def n_samples(self) -> int:
        return self.hbo.shape[1]

    def index_at(self, t_ms: float) -> int:
        t0 = int(self.timestamps_ms[0]) if self.n_samples else 0
        return int(round((t_ms - t0) * self.sample_rate / 1000.0))


@dataclass(frozen=True)
class OpticalConstants:
    """Extinction coefficients, differential pathlength factors, and geometry.

    extinction[chromophore][wavelength_nm] is in 1/(mM*cm); dpf is
    dimensionless per wavelength; separation_cm is the source-detector
    distance. The 2x2 extinction matrix must be nonsingular.
    """

    extinction: dict
    dpf: dict
    separation_cm: float

    def matrix(self) -> np.ndarray:
        try:
            e = np.array(
                [
                    [self.extinction["hbo"][wl], self.extinction["hbr"][wl]]
                    for wl in WAVELENGTHS_NM
                ]
            )
        except KeyError as exc:
            raise ConfigurationError(f"extinction table missing entry: {exc}") from None
        if abs(np.linalg.det(e)) <= 1e-6:
            raise ConfigurationError(f"extinction matrix is singular: det={np.linalg.det(e):.2e}")
        return e

    def pathlength_cm(self, wavelength_nm: int) -> float:
        try:
            return self.separation_cm * self.dpf[wavelength_nm]
        except KeyError:
            raise ConfigurationError(f"no DPF for wavelength {wavelength_nm} nm") from None


# Shipped defaults; correctness tests rely only on round-trips, never on
# these numbers, and a config file can override them.
DEFAULT_OPTICAL_CONSTANTS = OpticalConstants(
    extinction={"hbo": {735: 0.45, 850: 1.06}, "hbr": {735: 1.10, 850: 0.69}},
    dpf={735: 6.0, 850: 6.0},
    separation_cm=3.0,
)


# ---------------------------------------------------------------------------
# Filtering
# ---------------------------------------------------------------------------


def _design_sos(lo: float, hi: float, fs: float) -> np.ndarray:
    if not (0 <= lo < hi and hi < fs / 2):
        raise InputError(f"invalid band edges ({lo}, {hi}) Hz at fs={fs} Hz")
    if lo == 0:
        return butter(4, hi, btype="lowpass", output="sos", fs=fs)
    # N=2 yields two biquads = a 4th-order band-pass transfer function
    return butter(2, [lo, hi], btype="bandpass", output="sos", fs=fs)


def bandpass(signal: np.ndarray, lo: float, hi: float, fs: float) -> np.ndarray:
    """Zero-phase 4th-order Butterworth band-pass (forward-backward).

    Output length equals input length; edges are odd-reflection padded by
    three times the filter order.
    """
    signal = np.asarray(signal, dtype=np.float64)
    sos = _design_sos(lo, hi, fs)
    order = 2 * sos.shape[0]
    padlen = min(3 * order, max(signal.shape[-1] - 1, 0))
    return sosfiltfilt(sos, signal, axis=-1, padtype="odd", padlen=padlen)


def bandpass_eeg(recording: EegRecording, lo: float = EEG_BAND[0], hi: float = EEG_BAND[1]) -> EegRecording:
    return replace(
        recording,
        fp1=bandpass(recording.fp1, lo, hi, recording.sample_rate),
        fp2=bandpass(recording.fp2, lo, hi, recording.sample_rate),
    )


# ---------------------------------------------------------------------------
# Artifact exclusion and epoching
# ---------------------------------------------------------------------------


def exclude_artifacts(recording, timeline: EventTimeline):
    """Attach a boolean mask covering the timeline's artifact spans.

    Returns a copy of the recording; downstream epoch extraction rejects
    any epoch overlapping a masked sample.
    """
    mask = np.zeros(recording.n_samples, dtype=bool)
    for start_ms, end_ms in timeline.artifact_spans():
        i0 = max(recording.index_at(start_ms), 0)
        i1 = min(recording.index_at(end_ms), recording.n_samples)
        if i1 > i0:
            mask[i0:i1] = True
    return replace(recording, artifact_mask=mask)


@dataclass(frozen=True)
class EegEpoch:
    trial_id: str
    onset_ms: int
    data: np.ndarray  # (2, 7500) baseline-corrected microvolts


@dataclass
class EpochResult:
    epochs: list[EegEpoch] = field(default_factory=list)
    skipped: list[tuple[str, str]] = field(default_factory=list)  # (trial_id, reason)


def epoch_eeg(
    recording: EegRecording,
    timeline: EventTimeline,
    window_s: tuple[float, float] = EPOCH_WINDOW_S,
    baseline: str = "epoch_mean",
) -> EpochResult:
    """Extract one epoch per music onset and baseline-correct it.

    The window is [onset + window_s[0], onset + window_s[1]) seconds.
    baseline="epoch_mean" subtracts each channel's epoch mean;
    baseline="prestim" subtracts the mean over the 5 s before onset.
    Trials whose window leaves the recording or touches an artifact span
    are skipped with a reason.
    """
    if baseline not in ("epoch_mean", "prestim"):
        raise ConfigurationError(f"unknown baseline mode {baseline!r}")
    fs = recording.sample_rate
    n_expected = int(round((window_s[1] - window_s[0]) * fs))
    data = recording.channels()
    result = EpochResult()
    for event in timeline.music_onsets():
        trial_id = event.trial_id or f"t{event.t_ms}"
        i0 = recording.index_at(event.t_ms + window_s[0] * 1000.0)
        i1 = i0 + n_expected
        if i0 < 0 or i1 > recording.n_samples:
            result.skipped.append((trial_id, "incomplete"))
            continue
        if recording.artifact_mask is not None and recording.artifact_mask[i0:i1].any():
            result.skipped.append((trial_id, "artifact_overlap"))
            continue
        epoch = data[:, i0:i1].copy()
        if baseline == "epoch_mean":
            epoch -= epoch.mean(axis=1, keepdims=True)
        else:
            b0 = recording.index_at(event.t_ms - FNIRS_BASELINE_S * 1000.0)
            b1 = recording.index_at(event.t_ms)
            if b0 < 0 or b1 <= b0:
                result.skipped.append((trial_id, "no_baseline"))
                continue
            epoch -= data[:, b0:b1].mean(axis=1, keepdims=True)
        result.epochs.append(EegEpoch(trial_id=trial_id, onset_ms=event.t_ms, data=epoch))
    return result


# ---------------------------------------------------------------------------
# fNIRS pipeline
# ---------------------------------------------------------------------------


def intensity_to_od(
    recording: FnirsRecording, i0_window_s: tuple[float, float] | None = None
) -> OpticalDensitySeries:
    """Optical-density change -ln(I / I0) per channel and wavelength.

    I0 is the mean intensity over i0_window_s (seconds from recording
    start), or over the whole recording when no window is given.
    """
    _check_positive_intensity(recording.intensity)
    if i0_window_s is None:
        reference = recording.intensity.mean(axis=2, keepdims=True)
    else:
        start, end = i0_window_s
        i0 = max(recording.index_at(recording.timestamps_ms[0] + start * 1000.0), 0)
        i1 = min(recording.index_at(recording.timestamps_ms[0] + end * 1000.0), recording.n_samples)
        if i1 <= i0:
            raise InputError(f"empty I0 window [{start}, {end}) s")
        reference = recording.intensity[:, :, i0:i1].mean(axis=2, keepdims=True)
    od = -np.log(recording.intensity / reference)
    return OpticalDensitySeries(od=od, timestamps_ms=recording.timestamps_ms, sample_rate=recording.sample_rate)


def extract_ppg(od: OpticalDensitySeries, source: str = "850", band: tuple[float, float] = PPG_BAND) -> PpgSeries:
    """Band-pass 0.5-4 Hz of per-channel optical density to isolate the pulse.

    `source` selects the 850 nm series (default), the 735 nm series, or
    "mean" of the two wavelengths.
    """
    if source == "mean":
        raw = od.od.mean(axis=1)
    elif source in ("735", "850"):
        raw = od.od[:, od.wavelength_index(int(source)), :]
    else:
        raise ConfigurationError(f"unknown PPG source {source!r}; use '735', '850', or 'mean'")
    filtered = bandpass(raw, band[0], band[1], od.sample_rate)
    return PpgSeries(values=filtered, timestamps_ms=od.timestamps_ms, sample_rate=od.sample_rate)


def mbll(od: OpticalDensitySeries, constants: OpticalConstants = DEFAULT_OPTICAL_CONSTANTS) -> HemodynamicSeries:
    """Hemoglobin concentration changes from dual-wavelength optical density.

    Solves, per channel and sample, the 2x2 system
    dOD(lambda) = [eps_HbO(lambda) dHbO + eps_HbR(lambda) dHbR] * d * DPF(lambda)
    with concentrations returned in micromolar.
    """
    e_inv = np.linalg.inv(constants.matrix())
    scaled = np.stack(
        [od.od[:, i, :] / constants.pathlength_cm(wl) for i, wl in enumerate(WAVELENGTHS_NM)]
    )  # (2, channels, n) in (1/(mM*cm)) * mM * cm / cm... i.e. eps * mM
    concentrations_mm = np.einsum("ij,jcn->icn", e_inv, scaled)
    hbo = concentrations_mm[0] * 1000.0  # mM -> uM
    hbr = concentrations_mm[1] * 1000.0
    return HemodynamicSeries.from_components(hbo, hbr, od.timestamps_ms, od.sample_rate)


def mbll_forward(
    hbo_um: np.ndarray, hbr_um: np.ndarray, constants: OpticalConstants = DEFAULT_OPTICAL_CONSTANTS
) -> np.ndarray:
    """Forward model: concentrations (uM) to optical density, shape (..., 2).

    The inverse of mbll(); used by the device simulator and round-trip
    checks.
    """
    e = constants.matrix()
    hbo_mm = np.asarray(hbo_um, dtype=np.float64) / 1000.0
    hbr_mm = np.asarray(hbr_um, dtype=np.float64) / 1000.0
    od = np.empty(hbo_mm.shape + (len(WAVELENGTHS_NM),))
    for i, wl in enumerate(WAVELENGTHS_NM):
        od[..., i] = (e[i, 0] * hbo_mm + e[i, 1] * hbr_mm) * constants.pathlength_cm(wl)
    return od


def fnirs_baseline_correct(
    series: HemodynamicSeries,
    timeline: EventTimeline,
    task_s: float = FNIRS_TASK_S,
    baseline_s: float = FNIRS_BASELINE_S,
) -> tuple[HemodynamicSeries, list[str]]:
    """Subtract each trial's pre-stimulus mean from its task span.

    The baseline is the per-channel mean over [onset - baseline_s, onset);
    trials without enough pre-stimulus data are left unchanged and returned
    as flagged.
    """
    fs = series.sample_rate
    hbo = series.hbo.copy()
    hbr = series.hbr.copy()
    flagged: list[str] = []
    for event in timeline.music_onsets():
        trial_id = event.trial_id or f"t{event.t_ms}"
        onset = series.index_at(event.t_ms)
        b0 = onset - int(round(baseline_s * fs))
        t1 = min(onset + int(round(task_s * fs)), series.n_samples)
        if b0 < 0 or onset > series.n_samples:
            flagged.append(trial_id)
            continue
        hbo[:, onset:t1] -= series.hbo[:, b0:onset].mean(axis=1, keepdims=True)
        hbr[:, onset:t1] -= series.hbr[:, b0:onset].mean(axis=1, keepdims=True)
    corrected = HemodynamicSeries.from_components(hbo, hbr, series.timestamps_ms, fs)
    return corrected, flagged


def systemic_filter(
    series: HemodynamicSeries, lo: float = SYSTEMIC_BAND[0], hi: float = SYSTEMIC_BAND[1]
) -> HemodynamicSeries:
    """Band-pass 0.01-0.1 Hz to strip cardiac, respiratory, and Mayer waves."""
    hbo = bandpass(series.hbo, lo, hi, series.sample_rate)
    hbr = bandpass(series.hbr, lo, hi, series.sample_rate)
    return HemodynamicSeries.from_components(hbo, hbr, series.timestamps_ms, series.sample_rate)
