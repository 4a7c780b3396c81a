"""Derived trial features and statistics.

Covers the label rule applied to self-reports, relative EEG band powers,
the 48-dimensional hemodynamic feature set, one-way ANOVA, Tukey HSD with
a studentized-range distribution computed by Gauss-Legendre quadrature,
Pearson correlation, and the aggregate rating report.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.signal import welch
from scipy.special import betainc, gammaln, ndtr

from .errors import InputError, StatsError, ValidationError
from .quadrants import ALL_QUADRANTS, EmotionQuadrant

# Band edges in Hz; the full band is bounded by the 40 Hz analysis filter.
BANDS: dict[str, tuple[float, float]] = {
    "delta": (0.5, 4.0),
    "theta": (4.0, 8.0),
    "alpha": (8.0, 13.0),
    "beta": (13.0, 30.0),
    "gamma": (30.0, 40.0),
}
FULL_BAND: tuple[float, float] = (0.5, 40.0)
BAND_NAMES = tuple(BANDS)

SUB_EPOCH_S = 3.0
WELCH_SEGMENT_S = 1.0

N_FNIRS_CHANNELS = 8
CHROMOPHORES = ("hbo", "hbr", "hbt")
FNIRS_STATS = ("mean", "var")
FNIRS_FEATURE_DIM = N_FNIRS_CHANNELS * len(CHROMOPHORES) * len(FNIRS_STATS)


# ---------------------------------------------------------------------------
# Trial labels
# ---------------------------------------------------------------------------


class LabelSource(str, Enum):
    SELF_REPORT = "self_report"
    MUSIC_FALLBACK_VALENCE = "music_fallback_valence"
    MUSIC_FALLBACK_AROUSAL = "music_fallback_arousal"
    MUSIC_FALLBACK_BOTH = "music_fallback_both"


@dataclass(frozen=True)
class RatingTriple:
    """Self-reported valence / arousal / liking, each on the 1-9 scale."""

    valence: int
    arousal: int
    liking: int

    def __post_init__(self):
        for name in ("valence", "arousal", "liking"):
            value = getattr(self, name)
            if not isinstance(value, int) or not 1 <= value <= 9:
                raise ValidationError(f"{name} must be an integer in [1, 9], got {value!r}")


@dataclass(frozen=True)
class TrialLabel:
    quadrant: EmotionQuadrant
    valence_high: bool
    arousal_high: bool
    source: LabelSource

    def __post_init__(self):
        expected = EmotionQuadrant.from_polarity(self.arousal_high, self.valence_high)
        if expected != self.quadrant:
            raise ValidationError(
                f"quadrant {self.quadrant} inconsistent with polarities "
                f"(arousal_high={self.arousal_high}, valence_high={self.valence_high})"
            )


def derive_label(rating: RatingTriple, music_quadrant: EmotionQuadrant) -> TrialLabel:
    """Label a trial from its self-report, thresholded at 5.

    A score above 5 counts as high and below 5 as low; a score of exactly 5
    inherits the polarity of the music clip that was playing, and the source
    field records which dimensions fell back.
    """
    valence_fell_back = rating.valence == 5
    arousal_fell_back = rating.arousal == 5
    valence_high = music_quadrant.valence_high if valence_fell_back else rating.valence > 5
    arousal_high = music_quadrant.arousal_high if arousal_fell_back else rating.arousal > 5

    if valence_fell_back and arousal_fell_back:
        source = LabelSource.MUSIC_FALLBACK_BOTH
    elif valence_fell_back:
        source = LabelSource.MUSIC_FALLBACK_VALENCE
    elif arousal_fell_back:
        source = LabelSource.MUSIC_FALLBACK_AROUSAL
    else:
        source = LabelSource.SELF_REPORT

    return TrialLabel(
        quadrant=EmotionQuadrant.from_polarity(arousal_high, valence_high),
        valence_high=valence_high,
        arousal_high=arousal_high,
        source=source,
    )


# ---------------------------------------------------------------------------
# EEG relative band power
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BandPowerVector:
    """Relative spectral power per band, unitless fractions in [0, 1]."""

    delta: float
    theta: float
    alpha: float
    beta: float
    gamma: float

    def as_array(self) -> np.ndarray:
        return np.array([self.delta, self.theta, self.alpha, self.beta, self.gamma])

    def as_dict(self) -> dict[str, float]:
        return {name: getattr(self, name) for name in BAND_NAMES}


def _band_fractions(segment: np.ndarray, fs: float, bands: dict, full_band: tuple) -> np.ndarray:
    """Relative band powers of one channel segment via Welch PSD.

    1 s Hann segments with 50% overlap; band power is the PSD integral over
    [lo, hi) and relative power divides by the 0.5-40 Hz total.
    """
    nperseg = int(round(WELCH_SEGMENT_S * fs))
    freqs, psd = welch(segment, fs=fs, window="hann", nperseg=nperseg, noverlap=nperseg // 2)
    df = freqs[1] - freqs[0]
    full_mask = (freqs >= full_band[0]) & (freqs < full_band[1])
    full_power = psd[full_mask].sum() * df
    if full_power <= 0:
        return np.zeros(len(bands))
    out = np.empty(len(bands))
    for i, (lo, hi) in enumerate(bands.values()):
        mask = (freqs >= lo) & (freqs < hi)
        out[i] = psd[mask].sum() * df / full_power
    return out


def relative_band_power(
    epoch: np.ndarray, fs: float = 250.0, bands: dict | None = None, full_band: tuple = FULL_BAND
) -> BandPowerVector:
    """Mean relative band power of a (channels, samples) EEG epoch.

    The epoch is split into consecutive 3 s sub-epochs; fractions are
    computed per sub-epoch and channel, averaged across channels, then
    averaged across sub-epochs.
    """
    bands = bands or BANDS
    epoch = np.atleast_2d(np.asarray(epoch, dtype=np.float64))
    sub_len = int(round(SUB_EPOCH_S * fs))
    n_sub = epoch.shape[1] // sub_len
    if n_sub < 1:
        raise InputError(
            f"epoch of {epoch.shape[1]} samples is shorter than one {SUB_EPOCH_S:.0f} s sub-epoch"
        )
    per_sub = np.empty((n_sub, len(bands)))
    for s in range(n_sub):
        chunk = epoch[:, s * sub_len : (s + 1) * sub_len]
        per_channel = np.stack([_band_fractions(chunk[c], fs, bands, full_band) for c in range(chunk.shape[0])])
        per_sub[s] = per_channel.mean(axis=0)
    mean = per_sub.mean(axis=0)
    return BandPowerVector(*mean)


def per_channel_band_power(
    epoch: np.ndarray, fs: float = 250.0, bands: dict | None = None, full_band: tuple = FULL_BAND
) -> np.ndarray:
    """Relative band powers kept per channel, shape (channels, bands).

    Same sub-epoch scheme as relative_band_power but without the channel
    average; used to build classifier feature blocks.
    """
    bands = bands or BANDS
    epoch = np.atleast_2d(np.asarray(epoch, dtype=np.float64))
    sub_len = int(round(SUB_EPOCH_S * fs))
    n_sub = epoch.shape[1] // sub_len
    if n_sub < 1:
        raise InputError("epoch shorter than one sub-epoch")
    acc = np.zeros((epoch.shape[0], len(bands)))
    for s in range(n_sub):
        chunk = epoch[:, s * sub_len : (s + 1) * sub_len]
        for c in range(chunk.shape[0]):
            acc[c] += _band_fractions(chunk[c], fs, bands, full_band)
    return acc / n_sub


# ---------------------------------------------------------------------------
# fNIRS features
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FnirsFeatureVector:
    """48 reals: {mean, variance} x {HbO, HbR, HbT} x 8 channels.

    Ordering is channel-major, then chromophore (HbO, HbR, HbT), then
    statistic (mean, variance); variances are population variances.
    """

    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.shape != (FNIRS_FEATURE_DIM,):
            raise InputError(f"expected {FNIRS_FEATURE_DIM} features, got shape {values.shape}")
        object.__setattr__(self, "values", values)

    @staticmethod
    def feature_names() -> list[str]:
        return [
            f"ch{ch + 1}_{chrom}_{stat}"
            for ch in range(N_FNIRS_CHANNELS)
            for chrom in CHROMOPHORES
            for stat in FNIRS_STATS
        ]

    @staticmethod
    def index_of(channel: int, chromophore: str, stat: str) -> int:
        return (
            channel * len(CHROMOPHORES) * len(FNIRS_STATS)
            + CHROMOPHORES.index(chromophore) * len(FNIRS_STATS)
            + FNIRS_STATS.index(stat)
        )

    def unpack(self) -> dict[str, float]:
        return dict(zip(self.feature_names(), self.values.tolist()))


def fnirs_features(series, window_s: tuple[float, float]) -> FnirsFeatureVector:
    """Mean and population variance per channel/chromophore over a window.

    `window_s` is (start, end) in seconds from the series start and must
    cover at least 30 s of data inside the series.
    """
    fs = series.sample_rate
    start, end = window_s
    i0, i1 = int(round(start * fs)), int(round(end * fs))
    n = series.hbo.shape[1]
    if i0 < 0 or i1 > n:
        raise InputError(f"window [{start}, {end}) s outside series of {n / fs:.1f} s")
    if (i1 - i0) < int(round(30.0 * fs)):
        raise InputError(f"window shorter than 30 s: {(i1 - i0) / fs:.1f} s")
    values = np.empty(FNIRS_FEATURE_DIM)
    for ch in range(N_FNIRS_CHANNELS):
        for ci, chrom in enumerate(CHROMOPHORES):
            segment = getattr(series, chrom)[ch, i0:i1]
            base = ch * 6 + ci * 2
            values[base] = segment.mean()
            values[base + 1] = segment.var()
    return FnirsFeatureVector(values)


# ---------------------------------------------------------------------------
# Statistics
# ---------------------------------------------------------------------------


def one_way_anova(groups: list[np.ndarray]) -> tuple[float, float]:
    """One-way ANOVA F statistic and p-value.

    The p-value comes from the F(k-1, N-k) survival function expressed via
    the regularized incomplete beta function. Zero between-group and zero
    within-group variance returns (0.0, 1.0) by convention.
    """
    groups = [np.asarray(g, dtype=np.float64) for g in groups]
    if len(groups) < 2:
        raise StatsError(f"need at least 2 groups, got {len(groups)}")
    for i, g in enumerate(groups):
        if g.size < 2:
            raise StatsError(f"group {i} has {g.size} values; need at least 2")
    n_total = sum(g.size for g in groups)
    k = len(groups)
    grand = np.concatenate(groups).mean()
    ss_between = sum(g.size * (g.mean() - grand) ** 2 for g in groups)
    ss_within = sum(((g - g.mean()) ** 2).sum() for g in groups)
    df_between = k - 1
    df_within = n_total - k
    ms_between = ss_between / df_between
    ms_within = ss_within / df_within
    if ms_within == 0.0:
        if ms_between == 0.0:
            return 0.0, 1.0
        return math.inf, 0.0
    f_stat = ms_between / ms_within
    p = f_sf(f_stat, df_between, df_within)
    return float(f_stat), float(p)


def f_sf(f_stat: float, d1: int, d2: int) -> float:
    """P(F > f) for the F distribution with (d1, d2) degrees of freedom."""
    if f_stat <= 0:
        return 1.0
    if math.isinf(f_stat):
        return 0.0
    x = d2 / (d2 + d1 * f_stat)
    return float(betainc(d2 / 2.0, d1 / 2.0, x))


def _gauss_legendre(n: int, lo: float, hi: float) -> tuple[np.ndarray, np.ndarray]:
    nodes, weights = np.polynomial.legendre.leggauss(n)
    half = 0.5 * (hi - lo)
    return lo + half * (nodes + 1.0), half * weights


def _normal_range_cdf(u: np.ndarray, k: int, z_nodes: np.ndarray, z_weights: np.ndarray) -> np.ndarray:
    """P(range of k iid standard normals <= u), vectorized over u."""
    u = np.asarray(u, dtype=np.float64)
    phi = np.exp(-0.5 * z_nodes**2) / math.sqrt(2.0 * math.pi)
    # (n_u, n_z): probability mass of an interval of width u ending at z
    inner = ndtr(z_nodes[None, :]) - ndtr(z_nodes[None, :] - u[:, None])
    integrand = phi[None, :] * np.clip(inner, 0.0, 1.0) ** (k - 1)
    return np.clip(k * integrand @ z_weights, 0.0, 1.0)


def studentized_range_cdf(q: float, k: int, df: float, n_points: int = 64, n_segments: int = 8) -> float:
    """CDF of the studentized range distribution by double quadrature.

    Outer integral over the chi/sqrt(df) scale factor and inner integral
    over the normal range CDF, both with composite Gauss-Legendre rules
    (n_points nodes per segment). Accuracy target is 1e-6 absolute.
    """
    if q <= 0:
        return 0.0
    if k < 2 or df < 1:
        raise StatsError(f"studentized range needs k >= 2 and df >= 1, got k={k}, df={df}")

    z_lo, z_hi = -9.0, 9.0
    z_nodes_list, z_weights_list = [], []
    for seg in range(n_segments):
        lo = z_lo + (z_hi - z_lo) * seg / n_segments
        hi = z_lo + (z_hi - z_lo) * (seg + 1) / n_segments
        nodes, weights = _gauss_legendre(n_points, lo, hi)
        z_nodes_list.append(nodes)
        z_weights_list.append(weights)
    z_nodes = np.concatenate(z_nodes_list)
    z_weights = np.concatenate(z_weights_list)

    # Density of s = chi_df / sqrt(df); mass concentrates near 1 as df grows.
    log_norm = (df / 2.0) * math.log(df) - gammaln(df / 2.0) - (df / 2.0 - 1.0) * math.log(2.0)
    spread = math.sqrt(80.0 / df)
    s_lo = max(0.0, 1.0 - spread)
    s_hi = 1.0 + spread
    total = 0.0
    for seg in range(n_segments):
        lo = s_lo + (s_hi - s_lo) * seg / n_segments
        hi = s_lo + (s_hi - s_lo) * (seg + 1) / n_segments
        s_nodes, s_weights = _gauss_legendre(n_points, lo, hi)
        with np.errstate(divide="ignore"):
            log_density = log_norm + (df - 1.0) * np.log(s_nodes) - df * s_nodes**2 / 2.0
        density = np.exp(log_density)
        range_cdf = _normal_range_cdf(q * s_nodes, k, z_nodes, z_weights)
        total += float((density * range_cdf) @ s_weights)
    return min(max(total, 0.0), 1.0)


def studentized_range_sf(q: float, k: int, df: float) -> float:
    return 1.0 - studentized_range_cdf(q, k, df)


@dataclass(frozen=True)
class TukeyPair:
    group_a: int
    group_b: int
    diff: float
    q: float
    p: float
    significant: bool


def tukey_hsd(groups: list[np.ndarray], alpha: float = 0.05) -> list[TukeyPair]:
    """Tukey's HSD over all group pairs.

    Uses the Tukey-Kramer standard error with pooled within-group variance;
    p-values come from the studentized range distribution with N-k degrees
    of freedom.
    """
    groups = [np.asarray(g, dtype=np.float64) for g in groups]
    if len(groups) < 2:
        raise StatsError(f"need at least 2 groups, got {len(groups)}")
    for i, g in enumerate(groups):
        if g.size < 2:
            raise StatsError(f"group {i} has {g.size} values; need at least 2")
    k = len(groups)
    n_total = sum(g.size for g in groups)
    df = n_total - k
    ms_within = sum(((g - g.mean()) ** 2).sum() for g in groups) / df
    means = [g.mean() for g in groups]

    pairs: list[TukeyPair] = []
    for a in range(k):
        for b in range(a + 1, k):
            diff = means[b] - means[a]
            se = math.sqrt(ms_within / 2.0 * (1.0 / groups[a].size + 1.0 / groups[b].size))
            if se == 0.0:
                q = 0.0 if diff == 0.0 else math.inf
            else:
                q = abs(diff) / se
            p = 0.0 if math.isinf(q) else studentized_range_sf(q, k, df)
            pairs.append(
                TukeyPair(group_a=a, group_b=b, diff=float(diff), q=float(q), p=float(p), significant=p < alpha)
            )
    return pairs


def pearson(x: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    """Sample Pearson correlation with a two-sided t-test p-value."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise InputError(f"x and y must be equal-length 1-D arrays, got {x.shape} and {y.shape}")
    n = x.size
    if n < 3:
        raise StatsError(f"need at least 3 points, got {n}")
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = (dx**2).sum()
    syy = (dy**2).sum()
    if sxx == 0.0 or syy == 0.0:
        raise StatsError("correlation undefined: zero variance input")
    r = float((dx * dy).sum() / math.sqrt(sxx * syy))
    r = max(-1.0, min(1.0, r))
    df = n - 2
    denom = 1.0 - r * r
    if denom <= 0.0:
        return r, 0.0
    t = r * math.sqrt(df / denom)
    p = float(betainc(df / 2.0, 0.5, df / (df + t * t)))
    return r, p


# ---------------------------------------------------------------------------
# Rating report
# ---------------------------------------------------------------------------


def _quartiles(values: np.ndarray) -> dict[str, float]:
    qs = np.percentile(values, [0, 25, 50, 75, 100])
    return {"min": qs[0], "q1": qs[1], "median": qs[2], "q3": qs[3], "max": qs[4]}


def rating_report(trials) -> dict:
    """Distribution summaries, rating correlations, and label histograms.

    `trials` is any iterable of objects carrying music_quadrant, rating
    (a RatingTriple) and derived_label (a TrialLabel); unrated trials are
    skipped. Correlations that are undefined (zero variance) are reported
    as null with a note instead of failing the report.
    """
    rated = [t for t in trials if getattr(t, "rating", None) is not None]
    if not rated:
        raise InputError("no rated trials to report on")

    report: dict = {"quadrants": {}, "correlations": {}, "label_histograms": {}, "warnings": []}
    dims = ("valence", "arousal", "liking")

    for quadrant in ALL_QUADRANTS:
        q_trials = [t for t in rated if t.music_quadrant == quadrant]
        if not q_trials:
            report["warnings"].append(f"no rated trials for quadrant {quadrant.value}")
            continue
        report["quadrants"][quadrant.value] = {
            dim: _quartiles(np.array([getattr(t.rating, dim) for t in q_trials])) for dim in dims
        }
        histogram = {q.value: 0 for q in ALL_QUADRANTS}
        for t in q_trials:
            if t.derived_label is not None:
                histogram[t.derived_label.quadrant.value] += 1
        report["label_histograms"][quadrant.value] = histogram

    columns = {dim: np.array([getattr(t.rating, dim) for t in rated], dtype=float) for dim in dims}
    for i, a in enumerate(dims):
        for b in dims[i + 1 :]:
            key = f"{a}_{b}"
            try:
                r, p = pearson(columns[a], columns[b])
                report["correlations"][key] = {"r": r, "p": p}
            except StatsError as exc:
                report["correlations"][key] = {"r": None, "p": None, "note": str(exc)}
    return report
