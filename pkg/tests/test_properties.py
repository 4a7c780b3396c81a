"""Property-based checks for the core numeric invariants."""

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from muselab.analysis import RatingTriple, derive_label
from muselab.quadrants import ALL_QUADRANTS, EmotionQuadrant
from muselab.recognition import accuracy, macro_f1
from muselab.screening import ClipScore, select_clip
from muselab.sigproc import DEFAULT_OPTICAL_CONSTANTS, OpticalDensitySeries, bandpass, mbll, mbll_forward

finite = st.floats(min_value=-100.0, max_value=100.0, allow_nan=False)


@given(
    hbo=st.lists(finite, min_size=4, max_size=16),
    hbr=st.lists(finite, min_size=4, max_size=16),
)
@settings(max_examples=50, deadline=None)
def test_mbll_round_trip_property(hbo, hbr):
    n = min(len(hbo), len(hbr))
    hbo_arr = np.tile(np.asarray(hbo[:n]), (8, 1))
    hbr_arr = np.tile(np.asarray(hbr[:n]), (8, 1))
    od_pairs = mbll_forward(hbo_arr, hbr_arr, DEFAULT_OPTICAL_CONSTANTS)
    series = mbll(
        OpticalDensitySeries(od=np.moveaxis(od_pairs, 2, 1), timestamps_ms=np.arange(n) * 40),
        DEFAULT_OPTICAL_CONSTANTS,
    )
    np.testing.assert_allclose(series.hbo, hbo_arr, rtol=1e-9, atol=1e-9)
    np.testing.assert_allclose(series.hbr, hbr_arr, rtol=1e-9, atol=1e-9)


@given(
    a=st.floats(min_value=-5.0, max_value=5.0, allow_nan=False),
    b=st.floats(min_value=-5.0, max_value=5.0, allow_nan=False),
    seed=st.integers(min_value=0, max_value=2**16),
)
@settings(max_examples=25, deadline=None)
def test_bandpass_linearity_property(a, b, seed):
    rng = np.random.default_rng(seed)
    x1, x2 = rng.normal(size=600), rng.normal(size=600)
    lhs = bandpass(a * x1 + b * x2, 0.5, 4.0, 25.0)
    rhs = a * bandpass(x1, 0.5, 4.0, 25.0) + b * bandpass(x2, 0.5, 4.0, 25.0)
    np.testing.assert_allclose(lhs, rhs, atol=1e-9 * max(abs(a) + abs(b), 1.0))


@given(
    valence=st.integers(min_value=1, max_value=9),
    arousal=st.integers(min_value=1, max_value=9),
    liking=st.integers(min_value=1, max_value=9),
    music=st.sampled_from(ALL_QUADRANTS),
)
def test_derive_label_total_and_consistent(valence, arousal, liking, music):
    label = derive_label(RatingTriple(valence, arousal, liking), music)
    assert label.quadrant == EmotionQuadrant.from_polarity(label.arousal_high, label.valence_high)
    fell_back = valence == 5 or arousal == 5
    assert (label.source.value != "self_report") == fell_back
    if valence != 5:
        assert label.valence_high == (valence > 5)
    if arousal != 5:
        assert label.arousal_high == (arousal > 5)


@given(st.lists(st.tuples(st.booleans(), st.booleans()), min_size=1, max_size=60))
@settings(max_examples=100)
def test_macro_f1_and_accuracy_bounded(pairs):
    predictions = [p for p, _ in pairs]
    labels = [l for _, l in pairs]
    import warnings

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        score = macro_f1(predictions, labels)
    assert 0.0 <= score <= 1.0
    assert 0.0 <= accuracy(predictions, labels) <= 1.0
    if predictions == labels and len(set(labels)) == 2:
        assert score == 1.0


@given(
    v=st.floats(min_value=1.0, max_value=9.0, allow_nan=False),
    a=st.floats(min_value=1.0, max_value=9.0, allow_nan=False),
)
@settings(max_examples=200)
def test_hahv_monotone_property(v, a):
    if select_clip(ClipScore("c", v, a, 1), EmotionQuadrant.HAHV):
        for v2, a2 in [(min(v + 0.5, 9.0), a), (v, min(a + 0.5, 9.0)), (9.0, 9.0)]:
            assert select_clip(ClipScore("c", v2, a2, 1), EmotionQuadrant.HAHV)
