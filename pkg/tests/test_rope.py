import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pyrkv.classify import ClassifyConfig, estimate_period
from pyrkv.rope import apply_rope, dominant_rope_period, perceived_period, rope_frequencies, rope_score_curve


def test_frequencies():
    assert rope_frequencies(2).thetas.tolist() == [1.0]
    assert rope_frequencies(4).thetas == pytest.approx([1.0, 0.01], rel=1e-15)
    th = rope_frequencies(64).thetas
    assert len(th) == 32
    assert np.all(np.diff(th) < 0)
    assert th[-1] == pytest.approx(10000 ** (-62 / 64), rel=1e-14)
    with pytest.raises(ValueError):
        rope_frequencies(5)


def test_position_zero_is_identity(rng):
    x = rng.standard_normal(16)
    assert np.array_equal(apply_rope(x, 0), x)


@given(seed=st.integers(0, 2**32 - 1), pos=st.integers(-10_000, 10_000), d=st.sampled_from([2, 8, 64]))
def test_isometry(seed, pos, d):
    x = np.random.default_rng(seed).standard_normal(d)
    assert abs(np.linalg.norm(apply_rope(x, pos)) - np.linalg.norm(x)) < 1e-12


@given(seed=st.integers(0, 2**32 - 1), t=st.integers(0, 500), s=st.integers(0, 500), c=st.integers(-200, 200))
def test_relative_encoding(seed, t, s, c):
    rng = np.random.default_rng(seed)
    q, k = rng.standard_normal(32), rng.standard_normal(32)
    a = apply_rope(q, t) @ apply_rope(k, s)
    b = apply_rope(q, t + c) @ apply_rope(k, s + c)
    assert abs(a - b) < 1e-9


def test_shift_by_seven(rng):
    q, k = rng.standard_normal(64), rng.standard_normal(64)
    assert abs(apply_rope(q, 12) @ apply_rope(k, 3) - apply_rope(q, 19) @ apply_rope(k, 10)) < 1e-9


def test_interleaved_pair_layout():
    x = np.array([1.0, 0.0, 0.0, 0.0])
    out = apply_rope(x, 1)
    assert out == pytest.approx([math.cos(1), math.sin(1), 0, 0])


def test_batched_positions(rng):
    x = rng.standard_normal((5, 8))
    pos = np.arange(5)
    out = apply_rope(x, pos)
    for i in range(5):
        assert np.array_equal(out[i], apply_rope(x[i], i))


def test_fractional_position_rejected():
    with pytest.raises(ValueError):
        apply_rope(np.ones(4), 1.5)
    with pytest.raises(TypeError):
        apply_rope(np.ones(4), True)
    assert np.array_equal(apply_rope(np.ones(4), 2.0), apply_rope(np.ones(4), 2))


def test_dim_mismatch():
    with pytest.raises(ValueError):
        apply_rope(np.ones(4), 1, rope_frequencies(8))


@pytest.mark.parametrize("d", [2, 8, 64, 128])
def test_dominant_period(d):
    assert dominant_rope_period(d) == pytest.approx(2 * math.pi)
    assert perceived_period(d) == 6


def test_score_curve_is_cosine():
    deltas = np.arange(1, 61)
    assert np.max(np.abs(rope_score_curve(deltas) - np.cos(deltas))) < 1e-12


def test_classifier_recovers_rope_period_at_analysis_length():
    curve = rope_score_curve(np.arange(1, 70))
    assert abs(estimate_period(curve).dominant_period - 6.0) <= 0.5


def test_classifier_on_sixty_samples():
    curve = rope_score_curve(np.arange(1, 61))
    # 59 differenced samples resolve 2*pi only to 59/9 without padding
    assert estimate_period(curve).dominant_period == pytest.approx(59 / 9)
    padded = estimate_period(curve, ClassifyConfig(pad_to=1024)).dominant_period
    assert 5.5 <= padded <= 6.5
    assert round(padded) == 6
