"""Oracle-equivalence checks behind ``pyrkv verify``."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import oracles
from .attention import InvocationCounter, fused_ragged_call, pack_ragged, ragged_attention, unfused_ragged_call
from .classify import ClassifyConfig, estimate_period, magnitude_spectrum
from .policy import anchor_indices, wave_indices


@dataclass
class Check:
    name: str
    max_deviation: float
    tolerance: float
    cases: int

    @property
    def passed(self) -> bool:
        return self.max_deviation <= self.tolerance if self.tolerance > 0 else self.max_deviation == 0

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status}  {self.name:<28} max|d|={self.max_deviation:.3e}  tol={self.tolerance:.0e}  cases={self.cases}"


def random_segments(rng: np.random.Generator, d: int, max_len: int = 32, max_b: int = 4, max_h: int = 8):
    n = int(rng.integers(1, max_b + 1)) * int(rng.integers(1, max_h + 1))
    lengths = rng.integers(1, max_len + 1, size=n)
    qlens = rng.integers(1, 5, size=n)
    keys = [rng.standard_normal((L, d)) for L in lengths]
    values = [rng.standard_normal((L, d)) for L in lengths]
    queries = [rng.standard_normal((L, d)) for L in qlens]
    return queries, keys, values


def check_ragged_vs_padded(instances: int, seed: int) -> Check:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(instances):
        d = int(rng.choice([8, 64]))
        qs, ks, vs = random_segments(rng, d)
        got = ragged_attention(qs, pack_ragged(list(zip(ks, vs))))
        want = np.concatenate(oracles.padded_dense_attention(qs, ks, vs))
        worst = max(worst, float(np.max(np.abs(got - want))))
    return Check("ragged vs padded dense", worst, 1e-9, instances)


def check_fused_vs_unfused(instances: int, seed: int) -> Check:
    rng = np.random.default_rng(seed + 1)
    worst = 0.0
    for _ in range(instances):
        d = int(rng.choice([8, 64]))
        groups = []
        for _g in range(3):
            qs, ks, vs = random_segments(rng, d, max_b=2, max_h=4)
            groups.append((qs, pack_ragged(list(zip(ks, vs)))))
        fused = fused_ragged_call(groups, InvocationCounter())
        unfused = unfused_ragged_call(groups, InvocationCounter())
        for a, b in zip(fused, unfused):
            worst = max(worst, float(np.max(np.abs(a - b))))
    return Check("fused vs unfused", worst, 1e-12, instances)


def check_fft_vs_dft(max_n: int, seed: int) -> Check:
    rng = np.random.default_rng(seed + 2)
    worst = 0.0
    sizes = list(range(2, max_n + 1))
    for n in sizes:
        x = rng.standard_normal(n)
        worst = max(worst, float(np.max(np.abs(magnitude_spectrum(x) - oracles.naive_dft_magnitudes(x)))))
    return Check("rfft vs naive DFT", worst, 1e-9, len(sizes))


def check_period_pipeline(instances: int, seed: int) -> Check:
    rng = np.random.default_rng(seed + 3)
    worst = 0.0
    cfg = ClassifyConfig()
    for _ in range(instances):
        n = int(rng.integers(8, 80))
        a = rng.standard_normal(n)
        worst = max(worst, abs(estimate_period(a, cfg).dominant_period - oracles.brute_force_period(a, cfg.harmonic_count)))
    return Check("period vs brute force", worst, 1e-9, instances)


def check_index_formulas(max_t: int) -> Check:
    mismatches = 0
    cases = 0
    for cap in range(1, 9):
        for t in range(1, max_t + 1):
            cases += 1
            if anchor_indices(t, cap).frames != oracles.anchor_substitution(t, cap):
                mismatches += 1
            for p in (3, 6, 12):
                cases += 1
                if wave_indices(t, cap, p).frames != oracles.wave_substitution(t, cap, p):
                    mismatches += 1
    return Check("index formula substitution", float(mismatches), 0.0, cases)


def run_all(instances: int = 200, seed: int = 0, max_t: int = 2000, max_n: int = 256) -> list[Check]:
    return [
        check_ragged_vs_padded(instances, seed),
        check_fused_vs_unfused(max(1, instances // 10), seed),
        check_fft_vs_dft(max_n, seed),
        check_period_pipeline(max(1, instances // 10), seed),
        check_index_formulas(max_t),
    ]
