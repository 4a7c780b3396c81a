"""Multimodal trial features, a deterministic linear classifier, and the
cross-validation harness over all six modality combinations.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import find_peaks

from .analysis import FnirsFeatureVector, per_channel_band_power
from .errors import InputError, MissingDataError, StatsError
from .quadrants import EmotionQuadrant

EEG_DIM = 10  # 5 bands x 2 channels
PPG_DIM = 18  # 8 channel means + 8 channel variances + HR mean + HR SD
HB_DIM = 48

MODALITY_COMBOS: dict[str, tuple[str, ...]] = {
    "EEG": ("eeg",),
    "PPG": ("ppg",),
    "Hb": ("hb",),
    "EEG+PPG": ("eeg", "ppg"),
    "EEG+Hb": ("eeg", "hb"),
    "EEG+PPG+Hb": ("eeg", "ppg", "hb"),
}
TARGETS = ("valence", "arousal")
PROTOCOLS = ("loso", "intra")

HR_REFRACTORY_S = 0.3

EEG_FEATURE_NAMES = [f"{ch}_{band}" for ch in ("fp1", "fp2") for band in ("delta", "theta", "alpha", "beta", "gamma")]
PPG_FEATURE_NAMES = [f"ppg_ch{c + 1}_{stat}" for c in range(8) for stat in ("mean", "var")] + [
    "ppg_hr_mean",
    "ppg_hr_sd",
]


class DegenerateModelError(StatsError):
    """Training set contains a single class."""


@dataclass(frozen=True)
class TrialFeatures:
    trial_id: str
    subject_id: str
    music_quadrant: EmotionQuadrant | None
    eeg: np.ndarray  # (10,)
    ppg: np.ndarray  # (18,)
    hb: np.ndarray  # (48,)
    valence_high: bool
    arousal_high: bool
    flags: tuple[str, ...] = ()

    def __post_init__(self):
        for name, dim in (("eeg", EEG_DIM), ("ppg", PPG_DIM), ("hb", HB_DIM)):
            values = np.asarray(getattr(self, name), dtype=np.float64)
            if values.shape != (dim,):
                raise InputError(f"{name} block must have {dim} values, got shape {values.shape}")
            if np.isnan(values).any():
                raise InputError(f"{name} block contains NaN for trial {self.trial_id}")
            object.__setattr__(self, name, values)

    def vector(self, combo: str) -> np.ndarray:
        try:
            blocks = MODALITY_COMBOS[combo]
        except KeyError:
            raise InputError(f"unknown modality combo {combo!r}; one of {list(MODALITY_COMBOS)}") from None
        return np.concatenate([getattr(self, block) for block in blocks])

    def target(self, name: str) -> bool:
        if name == "valence":
            return self.valence_high
        if name == "arousal":
            return self.arousal_high
        raise InputError(f"unknown target {name!r}; one of {TARGETS}")


def ppg_block(ppg_segment: np.ndarray, sample_rate: float = 25.0) -> tuple[np.ndarray, tuple[str, ...]]:
    """18 PPG features from an (8, n) last-30-s window.

    Per-channel mean and population variance, then heart-rate mean and SD
    from peak picking on the channel-average pulse (0.3 s refractory).
    Fewer than two usable peaks yields zeroed HR features and a flag.
    """
    segment = np.asarray(ppg_segment, dtype=np.float64)
    if segment.ndim != 2 or segment.shape[0] != 8:
        raise InputError(f"PPG window must be (8, n), got {segment.shape}")
    flags: tuple[str, ...] = ()
    values = np.empty(PPG_DIM)
    for ch in range(8):
        values[ch * 2] = segment[ch].mean()
        values[ch * 2 + 1] = segment[ch].var()
    aggregate = segment.mean(axis=0)
    peaks, _ = find_peaks(aggregate, distance=max(int(round(HR_REFRACTORY_S * sample_rate)), 1))
    if len(peaks) >= 2:
        intervals_s = np.diff(peaks) / sample_rate
        rates = 60.0 / intervals_s
        values[16] = rates.mean()
        values[17] = rates.std()
    else:
        values[16] = 0.0
        values[17] = 0.0
        flags = ("hr_undefined",)
    return values, flags


def build_features(
    trial_id: str,
    subject_id: str,
    eeg_epoch: np.ndarray,
    ppg_segment: np.ndarray,
    fnirs_vector: FnirsFeatureVector,
    valence_high: bool,
    arousal_high: bool,
    music_quadrant: EmotionQuadrant | None = None,
    eeg_sample_rate: float = 250.0,
    ppg_sample_rate: float = 25.0,
) -> TrialFeatures:
    """Pack one trial's engineered features in the fixed block layout."""
    if eeg_epoch is None or ppg_segment is None or fnirs_vector is None:
        missing = [
            name
            for name, value in (("eeg", eeg_epoch), ("ppg", ppg_segment), ("hb", fnirs_vector))
            if value is None
        ]
        raise MissingDataError(f"trial {trial_id} missing modalities: {missing}", missing)
    eeg = per_channel_band_power(eeg_epoch, eeg_sample_rate).reshape(-1)
    ppg, flags = ppg_block(ppg_segment, ppg_sample_rate)
    return TrialFeatures(
        trial_id=trial_id,
        subject_id=subject_id,
        music_quadrant=music_quadrant,
        eeg=eeg,
        ppg=ppg,
        hb=fnirs_vector.values,
        valence_high=valence_high,
        arousal_high=arousal_high,
        flags=flags,
    )


# ---------------------------------------------------------------------------
# CSV round trip
# ---------------------------------------------------------------------------

_CSV_COLUMNS = (
    ["trial_id", "subject", "quadrant"]
    + EEG_FEATURE_NAMES
    + PPG_FEATURE_NAMES
    + FnirsFeatureVector.feature_names()
    + ["valence_high", "arousal_high"]
)


def save_features_csv(trials: list[TrialFeatures], path) -> None:
    """Full classifier feature table; floats use repr so reads are bit-equal."""
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(_CSV_COLUMNS)
        for t in trials:
            row = [t.trial_id, t.subject_id, t.music_quadrant.value if t.music_quadrant else ""]
            row += [repr(v) for v in t.eeg.tolist()]
            row += [repr(v) for v in t.ppg.tolist()]
            row += [repr(v) for v in t.hb.tolist()]
            row += [int(t.valence_high), int(t.arousal_high)]
            writer.writerow(row)


def load_features_csv(path) -> list[TrialFeatures]:
    trials = []
    with open(path, newline="") as handle:
        reader = csv.reader(handle)
        header = next(reader)
        if header != _CSV_COLUMNS:
            raise InputError(f"unexpected feature CSV header ({len(header)} columns)")
        for row in reader:
            cursor = 3
            eeg = np.array([float(v) for v in row[cursor : cursor + EEG_DIM]])
            cursor += EEG_DIM
            ppg = np.array([float(v) for v in row[cursor : cursor + PPG_DIM]])
            cursor += PPG_DIM
            hb = np.array([float(v) for v in row[cursor : cursor + HB_DIM]])
            cursor += HB_DIM
            trials.append(
                TrialFeatures(
                    trial_id=row[0],
                    subject_id=row[1],
                    music_quadrant=EmotionQuadrant(row[2]) if row[2] else None,
                    eeg=eeg,
                    ppg=ppg,
                    hb=hb,
                    valence_high=bool(int(row[cursor])),
                    arousal_high=bool(int(row[cursor + 1])),
                )
            )
    return trials


# ---------------------------------------------------------------------------
# Classifier
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Model:
    """Standardization statistics plus logistic-regression parameters."""

    combo: str
    target: str
    feature_mean: np.ndarray
    feature_scale: np.ndarray
    weights: np.ndarray
    bias: float

    def decision(self, trials: list[TrialFeatures]) -> np.ndarray:
        x = np.stack([t.vector(self.combo) for t in trials])
        z = (x - self.feature_mean) / self.feature_scale
        return z @ self.weights + self.bias

    def predict(self, trials: list[TrialFeatures]) -> np.ndarray:
        # ties at probability 0.5 go to the positive (high) class
        return self.decision(trials) >= 0.0


def train_classifier(
    train: list[TrialFeatures],
    combo: str,
    target: str,
    l2: float = 0.01,
    learning_rate: float = 0.1,
    iterations: int = 500,
) -> Model:
    """L2-regularized logistic regression by full-batch gradient descent.

    Standardization is fitted on the training rows only; weights start at
    zero, so retraining on the same data reproduces identical parameters.
    """
    if len(train) < 2:
        raise InputError(f"need at least 2 training trials, got {len(train)}")
    y = np.array([t.target(target) for t in train], dtype=np.float64)
    if y.min() == y.max():
        raise DegenerateModelError(f"training set has a single {target} class")
    x = np.stack([t.vector(combo) for t in train])
    mean = x.mean(axis=0)
    scale = x.std(axis=0)
    scale[scale == 0.0] = 1.0
    z = (x - mean) / scale

    n, dim = z.shape
    weights = np.zeros(dim)
    bias = 0.0
    for _ in range(iterations):
        logits = z @ weights + bias
        p = 1.0 / (1.0 + np.exp(-logits))
        error = p - y
        grad_w = z.T @ error / n + l2 * weights
        grad_b = error.mean()
        weights = weights - learning_rate * grad_w
        bias = bias - learning_rate * grad_b
    return Model(combo=combo, target=target, feature_mean=mean, feature_scale=scale, weights=weights, bias=bias)


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------


def macro_f1(predictions, labels) -> float:
    """Unweighted mean of the two per-class F1 scores.

    A class absent from both predictions and labels contributes F1 = 0 and
    emits a warning.
    """
    predictions = np.asarray(predictions, dtype=bool)
    labels = np.asarray(labels, dtype=bool)
    if predictions.size == 0:
        raise InputError("cannot score empty predictions")
    if predictions.shape != labels.shape:
        raise InputError("predictions and labels differ in length")
    scores = []
    for positive in (True, False):
        pred_pos = predictions == positive
        label_pos = labels == positive
        tp = np.sum(pred_pos & label_pos)
        fp = np.sum(pred_pos & ~label_pos)
        fn = np.sum(~pred_pos & label_pos)
        if tp + fp + fn == 0:
            warnings.warn(f"class {positive} absent from predictions and labels; F1 set to 0", stacklevel=2)
            scores.append(0.0)
        else:
            scores.append(2.0 * tp / (2.0 * tp + fp + fn))
    return float(np.mean(scores))


def accuracy(predictions, labels) -> float:
    predictions = np.asarray(predictions, dtype=bool)
    labels = np.asarray(labels, dtype=bool)
    if predictions.size == 0:
        raise InputError("cannot score empty predictions")
    return float(np.mean(predictions == labels))


# ---------------------------------------------------------------------------
# Cross-validation
# ---------------------------------------------------------------------------


@dataclass
class CvResult:
    acc_mean: float
    acc_sd: float
    mf1_mean: float
    mf1_sd: float
    per_fold: list[tuple[float, float]] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    @classmethod
    def from_folds(cls, folds: list[tuple[float, float]], notes: list[str] | None = None) -> "CvResult":
        if not folds:
            raise StatsError("no folds produced a result")
        accs = np.array([f[0] for f in folds])
        mf1s = np.array([f[1] for f in folds])
        return cls(
            acc_mean=float(accs.mean()),
            acc_sd=float(accs.std()),
            mf1_mean=float(mf1s.mean()),
            mf1_sd=float(mf1s.std()),
            per_fold=folds,
            warnings=notes or [],
        )

    def cell(self) -> str:
        return f"{self.acc_mean:.3f}±{self.acc_sd:.3f}"


def _split_by_subject(dataset: list[TrialFeatures]) -> dict[str, list[TrialFeatures]]:
    by_subject: dict[str, list[TrialFeatures]] = {}
    for t in dataset:
        by_subject.setdefault(t.subject_id, []).append(t)
    return by_subject


def loso_cv(dataset: list[TrialFeatures], combo: str, target: str) -> CvResult:
    """Leave-one-subject-out: one fold per subject, training on the rest."""
    by_subject = _split_by_subject(dataset)
    if len(by_subject) < 2:
        raise InputError(f"LOSO needs at least 2 subjects, got {len(by_subject)}")
    folds = []
    notes = []
    for subject in sorted(by_subject):
        test = by_subject[subject]
        train = [t for t in dataset if t.subject_id != subject]
        if not test:
            notes.append(f"subject {subject} has no trials; skipped")
            continue
        try:
            model = train_classifier(train, combo, target)
        except DegenerateModelError as exc:
            notes.append(f"fold {subject}: {exc}")
            continue
        predictions = model.predict(test)
        labels = [t.target(target) for t in test]
        folds.append((accuracy(predictions, labels), macro_f1(predictions, labels)))
    return CvResult.from_folds(folds, notes)


def _stratified_folds(trials: list[TrialFeatures], target: str, k: int, seed: int) -> list[list[TrialFeatures]]:
    rng = np.random.default_rng(seed)
    folds: list[list[TrialFeatures]] = [[] for _ in range(k)]
    for positive in (True, False):
        members = [t for t in trials if t.target(target) == positive]
        order = rng.permutation(len(members))
        for slot, idx in enumerate(order):
            folds[slot % k].append(members[idx])
    return folds


def kfold_cv(dataset: list[TrialFeatures], combo: str, target: str, k: int = 10, seed: int = 0) -> CvResult:
    """Within-subject stratified k-fold, averaged per subject then across.

    Subjects with fewer than k trials fold with a reduced k (warned);
    subjects without two trials of each class are excluded with a reason.
    """
    by_subject = _split_by_subject(dataset)
    per_subject: list[tuple[float, float]] = []
    notes: list[str] = []
    for subject in sorted(by_subject):
        trials = by_subject[subject]
        n_pos = sum(1 for t in trials if t.target(target))
        n_neg = len(trials) - n_pos
        if n_pos < 2 or n_neg < 2:
            notes.append(f"subject {subject} excluded: needs >= 2 trials per class (has {n_pos}/{n_neg})")
            continue
        k_eff = min(k, n_pos, n_neg)
        if k_eff < k:
            notes.append(f"subject {subject}: folds reduced to {k_eff}")
        folds = _stratified_folds(trials, target, k_eff, seed)
        fold_scores = []
        for i, test in enumerate(folds):
            train = [t for f, members in enumerate(folds) if f != i for t in members]
            try:
                model = train_classifier(train, combo, target)
            except DegenerateModelError as exc:
                notes.append(f"subject {subject} fold {i}: {exc}")
                continue
            predictions = model.predict(test)
            labels = [t.target(target) for t in test]
            fold_scores.append((accuracy(predictions, labels), macro_f1(predictions, labels)))
        if fold_scores:
            per_subject.append(
                (
                    float(np.mean([s[0] for s in fold_scores])),
                    float(np.mean([s[1] for s in fold_scores])),
                )
            )
    return CvResult.from_folds(per_subject, notes)


def ablation_report(dataset: list[TrialFeatures], k: int = 10, seed: int = 0) -> dict:
    """Full grid: six combos x {valence, arousal} x {LOSO, intra-subject}."""
    if not dataset:
        raise InputError("empty dataset")
    grid: dict = {"targets": {}, "n_trials": len(dataset), "n_subjects": len(_split_by_subject(dataset))}
    for target in TARGETS:
        grid["targets"][target] = {}
        for combo in MODALITY_COMBOS:
            grid["targets"][target][combo] = {
                "loso": loso_cv(dataset, combo, target),
                "intra": kfold_cv(dataset, combo, target, k=k, seed=seed),
            }
    best = {}
    for target in TARGETS:
        for protocol in PROTOCOLS:
            column = {combo: grid["targets"][target][combo][protocol].acc_mean for combo in MODALITY_COMBOS}
            best[f"{target}_{protocol}"] = max(column, key=column.get)
    grid["best"] = best
    return grid


def report_to_dict(grid: dict) -> dict:
    out = {"n_trials": grid["n_trials"], "n_subjects": grid["n_subjects"], "best": grid["best"], "targets": {}}
    for target, combos in grid["targets"].items():
        out["targets"][target] = {}
        for combo, protocols in combos.items():
            out["targets"][target][combo] = {
                protocol: {
                    "acc_mean": result.acc_mean,
                    "acc_sd": result.acc_sd,
                    "mf1_mean": result.mf1_mean,
                    "mf1_sd": result.mf1_sd,
                    "n_folds": len(result.per_fold),
                    "warnings": result.warnings,
                }
                for protocol, result in protocols.items()
            }
    return out


def report_to_markdown(grid: dict) -> str:
    """Two tables (cross-subject, intra-subject) with mean±SD cells."""
    lines = []
    for protocol, title in (("loso", "Cross-subject (LOSO)"), ("intra", "Intra-subject (10-fold)")):
        lines.append(f"### {title}")
        lines.append("")
        lines.append("| Modality | Valence ACC | Valence MF1 | Arousal ACC | Arousal MF1 |")
        lines.append("|---|---|---|---|---|")
        for combo in MODALITY_COMBOS:
            cells = [combo]
            for target in TARGETS:
                result = grid["targets"][target][combo][protocol]
                bold = grid["best"][f"{target}_{protocol}"] == combo
                acc = f"{result.acc_mean:.3f}±{result.acc_sd:.3f}"
                mf1 = f"{result.mf1_mean:.3f}±{result.mf1_sd:.3f}"
                if bold:
                    acc = f"**{acc}**"
                    mf1 = f"**{mf1}**"
                cells.extend([acc, mf1])
            lines.append("| " + " | ".join(cells) + " |")
        lines.append("")
    return "\n".join(lines)
