"""Batch pipelines over dataset bundles: preprocessing, per-trial feature
extraction, study-level statistics, and the classification grid.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from . import analysis, dataio, recognition, sigproc
from .analysis import BAND_NAMES, FnirsFeatureVector, RatingTriple, TrialLabel, derive_label
from .errors import InputError
from .quadrants import ALL_QUADRANTS, EmotionQuadrant
from .session.store import SessionBundle, find_session_dirs, load_bundle

FEATURES_CSV_COLUMNS = (
    ["trial_id", "subject", "quadrant"]
    + list(BAND_NAMES)
    + [f"fnirs_{i + 1}" for i in range(48)]
    + ["valence", "arousal", "liking", "label"]
)


@dataclass
class ProcessedTrial:
    trial_id: str
    subject_id: str
    music_quadrant: EmotionQuadrant
    rating: RatingTriple | None
    label: TrialLabel | None
    eeg_epoch: np.ndarray | None  # (2, 7500) filtered + baseline corrected
    ppg_window: np.ndarray | None  # (8, 750) last 30 s of the music span
    fnirs_vector: FnirsFeatureVector | None
    band_power: analysis.BandPowerVector | None
    exclusion: str | None = None


@dataclass
class ProcessedSession:
    participant_id: str
    session_index: int
    trials: list[ProcessedTrial] = field(default_factory=list)
    eeg_filtered: sigproc.EegRecording | None = None
    ppg: sigproc.PpgSeries | None = None
    hemodynamics: sigproc.HemodynamicSeries | None = None
    epoch_skips: list[tuple[str, str]] = field(default_factory=list)
    baseline_flags: list[str] = field(default_factory=list)


def preprocess_session(
    bundle: SessionBundle,
    optical_constants: sigproc.OpticalConstants = sigproc.DEFAULT_OPTICAL_CONSTANTS,
    eeg_baseline: str = "epoch_mean",
    ppg_source: str = "850",
) -> ProcessedSession:
    """Run both device pipelines for one session bundle and cut per-trial
    artifacts (EEG epoch, last-30-s PPG window, 48-dim hemodynamic vector).
    """
    manifest = bundle.manifest
    out = ProcessedSession(
        participant_id=manifest["participant_id"], session_index=manifest["session_index"]
    )
    timeline = bundle.timeline

    epochs_by_trial = {}
    if bundle.eeg is not None:
        masked = sigproc.exclude_artifacts(bundle.eeg, timeline)
        filtered = sigproc.bandpass_eeg(masked)
        result = sigproc.epoch_eeg(filtered, timeline, baseline=eeg_baseline)
        epochs_by_trial = {e.trial_id: e for e in result.epochs}
        out.eeg_filtered = filtered
        out.epoch_skips = result.skipped

    hemo = None
    ppg = None
    if bundle.fnirs is not None:
        od = sigproc.intensity_to_od(bundle.fnirs)
        ppg = sigproc.extract_ppg(od, source=ppg_source)
        hemo_raw = sigproc.mbll(od, optical_constants)
        hemo_corrected, flagged = sigproc.fnirs_baseline_correct(hemo_raw, timeline)
        hemo = sigproc.systemic_filter(hemo_corrected)
        out.ppg = ppg
        out.hemodynamics = hemo
        out.baseline_flags = flagged

    ratings_by_trial = {row["trial_id"]: row for row in bundle.ratings}
    for event in timeline.music_onsets():
        trial_id = event.trial_id
        row = ratings_by_trial.get(trial_id)
        if row is None:
            out.epoch_skips.append((trial_id, "no_trial_record"))
            continue
        quadrant = EmotionQuadrant(row["music_quadrant"])
        rating = row.get("rating")
        label = derive_label(rating, quadrant) if rating is not None else None

        exclusion = None
        epoch = epochs_by_trial.get(trial_id)
        if epoch is None:
            skip = dict(out.epoch_skips).get(trial_id)
            exclusion = f"eeg_{skip}" if skip else "eeg_missing"

        ppg_window = None
        fnirs_vector = None
        if ppg is not None and hemo is not None and trial_id not in out.baseline_flags:
            fs = hemo.sample_rate
            start = hemo.index_at(event.t_ms + 30_000)
            end = start + 30 * fs
            if 0 <= start and end <= hemo.n_samples:
                ppg_window = ppg.values[:, start:end]
                t0 = (start) / fs
                fnirs_vector = analysis.fnirs_features(hemo, (t0, t0 + 30.0))
            else:
                exclusion = exclusion or "fnirs_incomplete"
        else:
            exclusion = exclusion or "fnirs_missing"
        if rating is None:
            exclusion = exclusion or "unrated"

        out.trials.append(
            ProcessedTrial(
                trial_id=trial_id,
                subject_id=out.participant_id,
                music_quadrant=quadrant,
                rating=rating,
                label=label,
                eeg_epoch=epoch.data if epoch else None,
                ppg_window=ppg_window,
                fnirs_vector=fnirs_vector,
                band_power=analysis.relative_band_power(epoch.data) if epoch else None,
                exclusion=exclusion,
            )
        )
    return out


def write_processed_session(session: ProcessedSession, out_dir: Path) -> None:
    """Materialize processed streams mirroring the input layout, one epoch
    file per trial."""
    directory = Path(out_dir) / "participant" / session.participant_id / f"session{session.session_index}"
    directory.mkdir(parents=True, exist_ok=True)
    # processed mirrors are inspection artifacts; fixed precision keeps them small
    if session.eeg_filtered is not None:
        dataio.save_eeg_csv(directory / "eeg_filtered.csv", session.eeg_filtered, float_format="%.6f")
    if session.ppg is not None:
        frame = {"timestamp_ms": session.ppg.timestamps_ms}
        frame.update({f"ch{c + 1}": session.ppg.values[c] for c in range(8)})
        pd.DataFrame(frame).to_csv(directory / "ppg.csv", index=False, float_format="%.9f")
    if session.hemodynamics is not None:
        hemo = session.hemodynamics
        frame = {"timestamp_ms": hemo.timestamps_ms}
        for c in range(8):
            frame[f"ch{c + 1}_hbo"] = hemo.hbo[c]
            frame[f"ch{c + 1}_hbr"] = hemo.hbr[c]
            frame[f"ch{c + 1}_hbt"] = hemo.hbt[c]
        pd.DataFrame(frame).to_csv(directory / "hemodynamics.csv", index=False, float_format="%.9f")
    epochs_dir = directory / "epochs"
    epochs_dir.mkdir(exist_ok=True)
    for trial in session.trials:
        if trial.eeg_epoch is None:
            continue
        pd.DataFrame({"fp1_uv": trial.eeg_epoch[0], "fp2_uv": trial.eeg_epoch[1]}).to_csv(
            epochs_dir / f"{trial.trial_id}.csv", index=False, float_format="%.6f"
        )
    skips = {"epoch_skips": session.epoch_skips, "baseline_flags": session.baseline_flags}
    (directory / "preprocess_log.json").write_text(json.dumps(skips, indent=2, sort_keys=True) + "\n")


def preprocess_dataset(data_root: Path | str, out_dir: Path | str, **kwargs) -> list[ProcessedSession]:
    sessions = []
    for directory in find_session_dirs(data_root):
        session = preprocess_session(load_bundle(directory), **kwargs)
        write_processed_session(session, Path(out_dir))
        sessions.append(session)
    if not sessions:
        raise InputError(f"no session bundles found under {data_root}")
    return sessions


def collect_trial_features(sessions: list[ProcessedSession]) -> tuple[list[recognition.TrialFeatures], list[dict]]:
    """Classifier-ready features for every fully processed, rated trial."""
    trials = []
    excluded = []
    for session in sessions:
        for trial in session.trials:
            if trial.exclusion is not None or trial.label is None:
                excluded.append({"trial_id": trial.trial_id, "subject": trial.subject_id, "reason": trial.exclusion or "unrated"})
                continue
            trials.append(
                recognition.build_features(
                    trial_id=f"{trial.subject_id}_{session.session_index}_{trial.trial_id}",
                    subject_id=trial.subject_id,
                    eeg_epoch=trial.eeg_epoch,
                    ppg_segment=trial.ppg_window,
                    fnirs_vector=trial.fnirs_vector,
                    valence_high=trial.label.valence_high,
                    arousal_high=trial.label.arousal_high,
                    music_quadrant=trial.music_quadrant,
                )
            )
    return trials, excluded


def write_features_csv(sessions: list[ProcessedSession], path: Path) -> int:
    """The analysis export: channel-averaged band powers, the 48-dim
    hemodynamic block, ratings, and the derived label per trial."""
    rows = []
    for session in sessions:
        for trial in session.trials:
            if trial.band_power is None or trial.fnirs_vector is None or trial.rating is None:
                continue
            row = {
                "trial_id": f"{trial.subject_id}_{session.session_index}_{trial.trial_id}",
                "subject": trial.subject_id,
                "quadrant": trial.music_quadrant.value,
            }
            row.update({band: getattr(trial.band_power, band) for band in BAND_NAMES})
            row.update({f"fnirs_{i + 1}": v for i, v in enumerate(trial.fnirs_vector.values)})
            row.update(
                {
                    "valence": trial.rating.valence,
                    "arousal": trial.rating.arousal,
                    "liking": trial.rating.liking,
                    "label": trial.label.quadrant.value,
                }
            )
            rows.append(row)
    frame = pd.DataFrame(rows, columns=FEATURES_CSV_COLUMNS)
    frame.to_csv(path, index=False)
    return len(rows)


class _TrialView:
    """Adapter giving rating_report the attribute shape it expects."""

    def __init__(self, trial: ProcessedTrial):
        self.music_quadrant = trial.music_quadrant
        self.rating = trial.rating
        self.derived_label = trial.label


def study_statistics(sessions: list[ProcessedSession]) -> dict:
    """Rating distributions/correlations, band-power ANOVA with Tukey
    follow-ups, and per-feature hemodynamic correlations against the
    binary label axes."""
    trials = [t for s in sessions for t in s.trials]
    rated = [t for t in trials if t.rating is not None]
    if not rated:
        raise InputError("no rated trials in dataset")
    report = {"ratings": analysis.rating_report([_TrialView(t) for t in rated])}

    labeled = [t for t in rated if t.band_power is not None and t.label is not None]
    band_groups: dict[str, list[list[float]]] = {band: [] for band in BAND_NAMES}
    for band in BAND_NAMES:
        for quadrant in ALL_QUADRANTS:
            group = [getattr(t.band_power, band) for t in labeled if t.label.quadrant == quadrant]
            band_groups[band].append(group)
    report["band_power_anova"] = {}
    report["band_power_tukey"] = {}
    for band, groups in band_groups.items():
        usable = [np.asarray(g) for g in groups if len(g) >= 2]
        if len(usable) < 2:
            report["band_power_anova"][band] = None
            continue
        f_stat, p = analysis.one_way_anova(usable)
        report["band_power_anova"][band] = {"F": f_stat, "p": p}
        pairs = analysis.tukey_hsd(usable)
        report["band_power_tukey"][band] = [
            {
                "pair": [pair.group_a, pair.group_b],
                "diff": pair.diff,
                "q": pair.q,
                "p": pair.p,
                "significant": pair.significant,
            }
            for pair in pairs
        ]

    hemo_trials = [t for t in rated if t.fnirs_vector is not None and t.label is not None]
    report["fnirs_feature_correlations"] = {}
    if len(hemo_trials) >= 3:
        names = FnirsFeatureVector.feature_names()
        matrix = np.stack([t.fnirs_vector.values for t in hemo_trials])
        for axis in ("valence", "arousal"):
            labels = np.array(
                [getattr(t.label, f"{axis}_high") for t in hemo_trials], dtype=float
            )
            axis_report = {}
            for i, name in enumerate(names):
                try:
                    r, p = analysis.pearson(matrix[:, i], labels)
                    axis_report[name] = {"r": r, "p": p}
                except analysis.StatsError:
                    axis_report[name] = {"r": None, "p": None}
            report["fnirs_feature_correlations"][axis] = axis_report
    return report


def run_classification(features_path: Path | str, k: int = 10, seed: int = 0) -> dict:
    trials = recognition.load_features_csv(features_path)
    if not trials:
        raise InputError(f"no trials in {features_path}")
    return recognition.ablation_report(trials, k=k, seed=seed)


def json_safe(value):
    """Replace non-finite floats so dumps stay strictly valid JSON."""
    if isinstance(value, dict):
        return {k: json_safe(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [json_safe(v) for v in value]
    if isinstance(value, float) and not np.isfinite(value):
        return repr(value)
    return value
