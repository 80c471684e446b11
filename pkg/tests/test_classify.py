import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from pyrkv.classify import (
    ClassifyConfig,
    HeadClassMap,
    classify_head,
    classify_model,
    estimate_period,
    folded_scores,
    label_agreement,
    mean_logit,
    sign_rates,
)
from pyrkv.errors import AllZero, EmptySequence, InsufficientHistory
from pyrkv.heads import HeadClass, HeadKind
from pyrkv.oracles import brute_force_period, naive_dft_magnitudes
from pyrkv.trace import LogitTrace, PatternSpec, synth_trace, synthesize_sequence

T60 = np.arange(1, 61)
COS6 = np.cos(2 * np.pi * T60 / 6)

# Frozen from oracles.brute_force_period (direct DFT + explicit folding table);
# 59 differenced samples, so candidate periods are 59/k.
PERIOD_COS6_60 = 5.9
PERIOD_COS6_HARMONIC_60 = 5.9


@pytest.mark.parametrize(
    "seq, expected",
    [
        ([1.0] * 10, (1.0, 0.0)),
        ([1, -1] * 5, (0.5, 0.5)),
        ([1, -1, -1, -1], (0.25, 0.75)),
        ([0, 0, 1, 1], (0.5, 0.5)),
    ],
)
def test_sign_rates(seq, expected):
    assert sign_rates(seq) == expected


@pytest.mark.parametrize("seq, expected", [([2, 2, 2], 2.0), ([1, -1], 0.0), ([3, -1, -1, -1], 0.0)])
def test_mean_logit(seq, expected):
    assert mean_logit(seq) == expected


def test_empty_sequences_rejected():
    with pytest.raises(EmptySequence):
        sign_rates([])
    with pytest.raises(EmptySequence):
        mean_logit([])


def test_period_pure_cosine():
    assert brute_force_period(COS6) == PERIOD_COS6_60
    est = estimate_period(COS6)
    assert est.dominant_period == pytest.approx(PERIOD_COS6_60, abs=1e-12)
    assert abs(est.dominant_period - 6.0) <= 0.5
    assert est.spectrum_peak_index == 10


def test_period_with_harmonic_folds_to_fundamental():
    seq = COS6 + 0.4 * np.cos(2 * np.pi * T60 / 3)
    assert brute_force_period(seq) == PERIOD_COS6_HARMONIC_60
    assert estimate_period(seq).dominant_period == pytest.approx(PERIOD_COS6_HARMONIC_60, abs=1e-12)


def test_folding_changes_the_winner():
    # a strong harmonic wins on raw magnitude but loses once folded
    seq = COS6 + 0.9 * np.cos(2 * np.pi * T60 / 3)
    assert estimate_period(seq, ClassifyConfig(harmonic_count=1)).dominant_period == pytest.approx(2.95)
    assert estimate_period(seq).dominant_period == pytest.approx(5.9)


def test_folded_scores_table():
    mag = np.array([9.0, 1.0, 2.0, 3.0, 4.0])
    # k=1: 1 + 2/2 + 3/3 + 4/4; k=2: 2 + 4/2; k=3: 3; k=4: 4
    assert np.allclose(folded_scores(mag, 4), [0, 4, 4, 3, 4])


def test_period_errors():
    with pytest.raises(AllZero):
        estimate_period(np.full(20, 3.0))
    with pytest.raises(AllZero):
        estimate_period(np.arange(20, dtype=float))
    with pytest.raises(InsufficientHistory):
        estimate_period(np.ones(7))


def test_zero_padding_refines_resolution():
    seq = np.cos(np.arange(1, 61))
    assert estimate_period(seq, ClassifyConfig(pad_to=1024)).dominant_period == pytest.approx(2 * np.pi, abs=0.01)


def test_period_search_max():
    seq = np.cos(2 * np.pi * np.arange(1, 70) / 20) + 0.3 * np.cos(2 * np.pi * np.arange(1, 70) / 4)
    assert estimate_period(seq).dominant_period == pytest.approx(4.0)
    assert estimate_period(seq, ClassifyConfig(period_search_max=3.5)).dominant_period <= 3.5


@settings(max_examples=200, deadline=None)
@given(n=st.integers(8, 120), seed=st.integers(0, 2**32 - 1))
def test_period_matches_brute_force(n, seed):
    a = np.random.default_rng(seed).standard_normal(n)
    assert estimate_period(a).dominant_period == brute_force_period(a)


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), offset=st.floats(-100, 100), scale=st.floats(0.01, 100))
def test_period_offset_and_scale_invariant(seed, offset, scale):
    a = np.random.default_rng(seed).standard_normal(50)
    base = estimate_period(a).dominant_period
    assert estimate_period(a + offset).dominant_period == base
    assert estimate_period(a * scale).dominant_period == base


def test_rfft_against_dft(rng):
    from pyrkv.classify import magnitude_spectrum

    for n in (7, 8, 63, 64, 255, 256):
        x = rng.standard_normal(n)
        assert np.max(np.abs(magnitude_spectrum(x) - naive_dft_magnitudes(x))) < 1e-9


def test_classify_anchor_by_sign_rate():
    seq = synthesize_sequence(PatternSpec(HeadKind.ANCHOR, base_level=1.0), 30)
    assert classify_head(seq) == HeadClass.anchor()


def test_classify_wave():
    seq = synthesize_sequence(PatternSpec(HeadKind.WAVE, period=6), 60)
    hc = classify_head(seq)
    assert hc.kind is HeadKind.WAVE
    assert hc.period == pytest.approx(PERIOD_COS6_60)


def test_one_sided_periodic_is_anchor_not_wave():
    seq = 0.5 + 0.4 * COS6
    assert sign_rates(seq)[0] == 1.0
    # without gating the FFT alone would call it a wave
    assert estimate_period(seq).dominant_period < 6.4
    assert classify_head(seq) == HeadClass.anchor()


def test_veil_by_sign_rate_and_fallback():
    veil = synthesize_sequence(PatternSpec(HeadKind.VEIL, base_level=-1.0, first_frame_boost=2.5), 40)
    assert classify_head(veil) == HeadClass.veil()
    # balanced signs, long period: falls through to the mean-logit rule
    slow = np.cos(2 * np.pi * np.arange(1, 61) / 30) - 0.05
    assert estimate_period(slow).dominant_period >= 6.4
    assert classify_head(slow) == HeadClass.veil()
    assert classify_head(-slow) == HeadClass.anchor()


def test_insufficient_history_propagates():
    with pytest.raises(InsufficientHistory):
        classify_head([1, -1, 1])


def test_config_validation():
    for bad in (dict(alpha=0.5), dict(alpha=1.1), dict(beta=1.9), dict(harmonic_count=0)):
        with pytest.raises(ValueError):
            ClassifyConfig(**bad)


sequences = hnp.arrays(np.float64, st.integers(8, 80), elements=st.floats(-10, 10, allow_subnormal=False))


@settings(max_examples=300, deadline=None)
@given(seq=sequences, scale=st.floats(1e-2, 1e2))
def test_partition_and_scale_invariance(seq, scale):
    r_pos, r_neg = sign_rates(seq)
    assert r_pos + r_neg == 1.0
    hc = classify_head(seq)
    assert hc.kind in set(HeadKind)
    assert (hc.period is not None) == (hc.kind is HeadKind.WAVE)
    assert classify_head(seq * scale).kind is hc.kind


@settings(max_examples=200, deadline=None)
@given(seq=sequences, alpha=st.floats(0.51, 1.0), shrink=st.floats(0.0, 1.0))
def test_anchor_gate_is_monotone(seq, alpha, shrink):
    if sign_rates(seq)[0] < alpha:
        return
    smaller = 0.5 + 1e-9 + (alpha - 0.5 - 1e-9) * shrink
    assert classify_head(seq, ClassifyConfig(alpha=smaller)).kind is HeadKind.ANCHOR


def _trace_from(rows):
    arr = np.asarray(rows, dtype=np.float32)[:, None, None, :]
    return LogitTrace(arr)


def test_single_prompt_equals_classify_head(rng):
    trace = synth_trace(prompts=1, layers=3, heads=4, frames=40, noise=0.2, seed=5)
    hmap = classify_model(trace)
    for l in range(3):
        for h in range(4):
            assert hmap[l, h] == classify_head(trace.sequences[0, l, h].astype(np.float64))


def test_majority_vote():
    anchor = np.full(20, 1.0)
    veil = np.full(20, -1.0)
    hmap = classify_model(_trace_from([anchor, veil, veil]))
    assert hmap[0, 0] == HeadClass.veil()
    assert hmap.heads[0][0].votes == {HeadKind.ANCHOR: 1, HeadKind.WAVE: 0, HeadKind.VEIL: 2}
    assert not hmap.heads[0][0].tie_break


def test_tie_break_uses_pooled_mean():
    hmap = classify_model(_trace_from([np.full(20, 3.0), np.full(20, -1.0)]))
    assert hmap[0, 0] == HeadClass.anchor()
    assert hmap.heads[0][0].tie_break
    hmap = classify_model(_trace_from([np.full(20, 1.0), np.full(20, -3.0)]))
    assert hmap[0, 0] == HeadClass.veil()


def test_tie_with_wave_and_opposite_class_keeps_wave():
    t = np.arange(1, 21)
    wave = np.cos(2 * np.pi * t / 6)
    hmap = classify_model(_trace_from([wave, np.full(20, 0.5)]))
    # pooled mean > 0 and anchor is tied, so anchor wins
    assert hmap[0, 0].kind is HeadKind.ANCHOR
    hmap = classify_model(_trace_from([wave - 0.2, np.full(20, 0.1)]))
    # pooled mean <= 0 but veil is not among the tied classes
    assert hmap[0, 0].kind is HeadKind.WAVE


def test_wave_period_is_median():
    t = np.arange(1, 70)
    rows = [np.cos(2 * np.pi * t / p) for p in (4.0, 5.0, 6.0)]
    hmap = classify_model(_trace_from(rows))
    periods = sorted(classify_head(r.astype(np.float32).astype(np.float64)).period for r in rows)
    assert hmap[0, 0].period == periods[1]


@pytest.mark.parametrize("noise", [0.0, 0.1])
def test_model_accuracy_on_labeled_trace(noise):
    trace = synth_trace(prompts=8, noise=noise, seed=2)
    acc, confusion = label_agreement(classify_model(trace), trace)
    assert acc >= 0.95
    assert confusion.sum() == 360


def test_json_round_trip():
    trace = synth_trace(prompts=2, layers=2, heads=3, frames=30, seed=1)
    hmap = classify_model(trace)
    doc = json.loads(hmap.dumps())
    assert doc["prompts_voted"] == 2
    assert set(doc["config"]) >= {"alpha", "beta", "harmonic_count", "min_length"}
    for layer in doc["layers"]:
        for head in layer["heads"]:
            assert head["class"] in {"anchor", "wave", "veil"}
            assert ("period" in head) == (head["class"] == "wave")
    back = HeadClassMap.from_dict(doc)
    assert back.kinds().tolist() == hmap.kinds().tolist()
