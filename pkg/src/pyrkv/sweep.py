"""Parameter grids over classifier thresholds and cache-policy knobs.

The metrics are desk-scale proxies: label agreement on synthetic traces,
retained slots, flop proxy and output drift against the full-history cache.
"""

from __future__ import annotations

import csv
import itertools
from typing import Iterable, Sequence

import numpy as np

from .classify import ClassifyConfig, HeadClassMap, classify_model, label_agreement
from .policy import PolicyConfig
from .sim import Mode, SimConfig, run
from .trace import LogitTrace

CLASSIFY_FIELDS = ["alpha", "beta", "accuracy", "anchor", "wave", "veil"]
POLICY_FIELDS = [
    "sink", "recent", "cap_anchor", "cap_wave", "cap_veil", "period", "merge_range",
    "peak_slots", "mean_slots_per_head", "flop_proxy", "output_drift",
]


def classify_grid(trace: LogitTrace, alphas: Sequence[float], betas: Sequence[float]) -> list[dict]:
    rows = []
    for alpha, beta in itertools.product(alphas, betas):
        cfg = ClassifyConfig(alpha=alpha, beta=beta)
        hmap = classify_model(trace, cfg)
        acc = label_agreement(hmap, trace)[0] if trace.labels is not None else float("nan")
        rows.append({"alpha": alpha, "beta": beta, "accuracy": acc, **hmap.counts()})
    return rows


def policy_grid(
    base: SimConfig,
    sinks: Sequence[int],
    recents: Sequence[int],
    cap_anchor: Sequence[int],
    cap_wave: Sequence[int],
    cap_veil: Sequence[int],
    periods: Sequence[float],
    merges: Sequence[int],
) -> list[dict]:
    full = run(_variant(base, base.policy, Mode.FULL_HISTORY))
    reference = full.outputs[base.num_frames]
    rows = []
    for s, r, ca, cw, cv, p, m in itertools.product(sinks, recents, cap_anchor, cap_wave, cap_veil, periods, merges):
        pol = PolicyConfig(s, r, ca, cw, cv, m, p)
        rep = run(_variant(base, pol, Mode.PYRAMID))
        drift = float(np.mean(np.abs(rep.outputs[base.num_frames] - reference)))
        rows.append({
            "sink": s, "recent": r, "cap_anchor": ca, "cap_wave": cw, "cap_veil": cv,
            "period": p, "merge_range": m,
            "peak_slots": rep.peak_slots,
            "mean_slots_per_head": float(rep.per_head_slots.mean()),
            "flop_proxy": rep.flop_proxy,
            "output_drift": drift,
        })
    return rows


def _variant(base: SimConfig, policy: PolicyConfig, mode: Mode) -> SimConfig:
    # the period axis overrides every wave head's period
    kinds = base.head_map.kinds()
    return SimConfig(
        num_frames=base.num_frames, layers=base.layers, heads=base.heads, head_dim=base.head_dim,
        tokens_per_frame=base.tokens_per_frame, policy=policy,
        head_map=HeadClassMap.from_kinds(kinds, policy.wave_default_period),
        rng_seed=base.rng_seed, mode=mode, fused=True, compute=True,
    )


def write_csv(rows: Iterable[dict], fields: Sequence[str], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(fields))
        w.writeheader()
        for row in rows:
            w.writerow(row)
