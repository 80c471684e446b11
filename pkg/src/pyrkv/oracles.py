"""Slow, independent reference computations used by ``verify`` and the tests.

Nothing here calls into the production paths it is meant to check.
"""

from __future__ import annotations

import cmath
import math
from decimal import ROUND_HALF_UP, Decimal
from fractions import Fraction

import numpy as np


def naive_dft_magnitudes(x) -> np.ndarray:
    """``|sum_n x[n] exp(-2 pi i k n / N)|`` for ``k = 0 .. N//2`` by direct summation."""
    x = [float(v) for v in x]
    n = len(x)
    out = []
    for k in range(n // 2 + 1):
        acc = 0j
        for j, v in enumerate(x):
            acc += v * cmath.exp(-2j * math.pi * k * j / n)
        out.append(abs(acc))
    return np.array(out)


def naive_hanning(n: int) -> list[float]:
    if n == 1:
        return [1.0]
    return [0.5 - 0.5 * math.cos(2 * math.pi * i / (n - 1)) for i in range(n)]


def brute_force_period(seq, harmonic_count: int = 4) -> float:
    """Period estimate rebuilt from scratch: diff, demean, taper, DFT, folding table."""
    a = [float(v) for v in seq]
    d = [a[i + 1] - a[i] for i in range(len(a) - 1)]
    mean = sum(d) / len(d)
    w = naive_hanning(len(d))
    x = [(v - mean) * wi for v, wi in zip(d, w)]
    mag = naive_dft_magnitudes(x)
    n = len(x)
    nyq = n // 2
    best_k, best = None, -1.0
    for k in range(1, nyq + 1):
        score = sum(mag[h * k] / h for h in range(1, harmonic_count + 1) if h * k <= nyq)
        if score > best:
            best_k, best = k, score
    return n / best_k


def naive_attention(q, k, v) -> np.ndarray:
    """Scalar-loop softmax attention for one segment: q (Lq, D), k/v (Lk, D)."""
    q, k, v = (np.asarray(a, dtype=np.float64) for a in (q, k, v))
    d = q.shape[1]
    out = np.zeros((q.shape[0], v.shape[1]))
    for i in range(q.shape[0]):
        logits = []
        for j in range(k.shape[0]):
            s = 0.0
            for c in range(d):
                s += q[i, c] * k[j, c]
            logits.append(s / math.sqrt(d))
        m = max(logits)
        w = [math.exp(s - m) for s in logits]
        z = sum(w)
        for j, wj in enumerate(w):
            for c in range(v.shape[1]):
                out[i, c] += wj / z * v[j, c]
    return out


def padded_dense_attention(queries, keys, values) -> list[np.ndarray]:
    """Pad every segment to the longest length and mask the padding with -inf.

    ``queries[i]`` is (Lq_i, D); ``keys[i]``/``values[i]`` are (L_i, D).
    Returns per-segment outputs with the padded query rows removed.
    """
    n = len(keys)
    d = np.shape(keys[0])[1]
    lk = max(len(k) for k in keys)
    lq = max(len(q) for q in queries)
    K = np.zeros((n, lk, d))
    V = np.zeros((n, lk, d))
    Q = np.zeros((n, lq, d))
    mask = np.zeros((n, lk), dtype=bool)
    for i in range(n):
        K[i, : len(keys[i])] = keys[i]
        V[i, : len(values[i])] = values[i]
        Q[i, : len(queries[i])] = queries[i]
        mask[i, : len(keys[i])] = True
    scores = np.einsum("nqd,nkd->nqk", Q, K) / np.sqrt(d)
    scores = np.where(mask[:, None, :], scores, -np.inf)
    scores -= scores.max(axis=-1, keepdims=True)
    w = np.exp(scores)
    w /= w.sum(axis=-1, keepdims=True)
    out = np.einsum("nqk,nkd->nqd", w, V)
    return [out[i, : len(queries[i])] for i in range(n)]


def anchor_substitution(t: int, cap: int, lower_bound: int = 0) -> tuple[int, ...]:
    """Centered strided window by exact rational substitution, then drop/dedupe/sort."""
    if t <= cap:
        return tuple(range(max(lower_bound, 0), t))
    offset = math.floor(Fraction(t, 2 * cap))
    raw = [t - math.floor(Fraction(i * t, cap)) - offset for i in range(cap)]
    return tuple(sorted({i for i in raw if i >= lower_bound}))


def wave_substitution(t: int, cap: int, period, lower_bound: int = 0) -> tuple[int, ...]:
    """``t - round_half_up(i * P)`` evaluated with decimal arithmetic."""
    p = Decimal(str(period))
    raw = [t - int((i * p).quantize(Decimal(1), rounding=ROUND_HALF_UP)) for i in range(cap)]
    return tuple(sorted({i for i in raw if i >= lower_bound}))
