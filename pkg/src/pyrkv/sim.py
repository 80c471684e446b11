"""Deterministic autoregressive cache simulator.

Each step generates one frame. The simulator builds every head's cache view,
materializes the retained K/V (with veil heads gathering channel slices),
runs ragged attention per layer and records slot, call and flop accounting.
K/V/Q values are seeded Gaussian noise since there is no model behind them.
"""

from __future__ import annotations

import csv
import enum
import json
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .attention import (
    InvocationCounter,
    RaggedQueries,
    fused_ragged_call,
    pack_ragged,
    unfused_ragged_call,
)
from .classify import HeadClassMap
from .heads import HeadClass, HeadKind
from .policy import (
    HeadCacheView,
    MergedBlock,
    PolicyConfig,
    assemble_cache,
    full_history_view,
    sink_recent_view,
)
from .rope import apply_rope, rope_frequencies


class Mode(str, enum.Enum):
    PYRAMID = "pyramid"
    FULL_HISTORY = "full_history"
    SINK_RECENT_ONLY = "sink_recent_only"


@dataclass
class SimConfig:
    num_frames: int = 200
    layers: int = 4
    heads: int = 12
    head_dim: int = 64
    tokens_per_frame: int = 4
    policy: PolicyConfig = field(default_factory=PolicyConfig)
    head_map: Optional[HeadClassMap] = None
    rng_seed: int = 0
    mode: Mode = Mode.PYRAMID
    fused: bool = True
    # False skips K/V synthesis and attention; only index accounting runs
    compute: bool = True
    keep_outputs: bool = False
    record_views: bool = False

    def __post_init__(self):
        self.mode = Mode(self.mode)
        for name in ("num_frames", "layers", "heads", "head_dim", "tokens_per_frame"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.head_dim % 2:
            raise ValueError("head_dim must be even")
        if self.head_map is None:
            self.head_map = default_head_map(self.layers, self.heads, self.policy.wave_default_period)
        if (self.head_map.num_layers, self.head_map.num_heads) != (self.layers, self.heads):
            raise ValueError(
                f"head map is {self.head_map.num_layers}x{self.head_map.num_heads}, "
                f"config is {self.layers}x{self.heads}"
            )

    def class_of(self, layer: int, head: int) -> HeadClass:
        return self.head_map[layer, head]


def default_head_map(layers: int, heads: int, period: float = 6.0) -> HeadClassMap:
    """Cycle anchor, wave, veil across heads so every layer holds all three classes."""
    kinds = np.array([[(l + h) % 3 for h in range(heads)] for l in range(layers)], dtype=np.uint8)
    return HeadClassMap.from_kinds(kinds, period)


@dataclass
class StepRecord:
    step: int
    kind: str
    heads: int
    slots: int
    max_slots: int
    calls: int
    flop_proxy: int


@dataclass
class SimReport:
    mode: str
    fused: bool
    num_frames: int
    tokens_per_frame: int
    per_head_slots: np.ndarray  # (step, layer, head) retained frame slots
    rows: list[StepRecord]
    peak_slots: int
    attention_calls: int
    scheduling_calls: int
    flop_proxy: int
    calls_per_layer_step: list[int]
    composition: dict[str, dict[str, int]]
    outputs: dict[int, np.ndarray] = field(default_factory=dict)
    views: dict[int, list[list[HeadCacheView]]] = field(default_factory=dict)

    def slots_at(self, step: int) -> np.ndarray:
        return self.per_head_slots[step - 1]

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "fused": self.fused,
            "num_frames": self.num_frames,
            "tokens_per_frame": self.tokens_per_frame,
            "peak_slots": self.peak_slots,
            "attention_calls": self.attention_calls,
            "scheduling_calls": self.scheduling_calls,
            "flop_proxy": self.flop_proxy,
            "final_per_head_slots": self.per_head_slots[-1].tolist(),
            "max_per_head_slots": {
                r.kind: max(x.max_slots for x in self.rows if x.kind == r.kind) for r in self.rows
            },
            "composition": self.composition,
        }

    def write_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["step", "class", "heads", "slots", "max_slots", "calls", "flop_proxy"])
            for r in self.rows:
                w.writerow([r.step, r.kind, r.heads, r.slots, r.max_slots, r.calls, r.flop_proxy])


class _FrameStore:
    """Seeded per-(layer, frame) K/V/Q blocks of shape (heads, F, D), generated on demand."""

    def __init__(self, cfg: SimConfig):
        self.cfg = cfg
        self._kv: dict[tuple[int, int], tuple[np.ndarray, np.ndarray]] = {}

    def kv(self, layer: int, frame: int) -> tuple[np.ndarray, np.ndarray]:
        key = (layer, frame)
        if key not in self._kv:
            rng = np.random.default_rng([self.cfg.rng_seed, layer, frame, 0])
            shape = (self.cfg.heads, self.cfg.tokens_per_frame, self.cfg.head_dim)
            self._kv[key] = (rng.standard_normal(shape), rng.standard_normal(shape))
        return self._kv[key]

    def query(self, layer: int, frame: int) -> np.ndarray:
        rng = np.random.default_rng([self.cfg.rng_seed, layer, frame, 1])
        return rng.standard_normal((self.cfg.heads, self.cfg.tokens_per_frame, self.cfg.head_dim))


def view_for(cfg: SimConfig, layer: int, head: int, t: int) -> HeadCacheView:
    if cfg.mode is Mode.FULL_HISTORY:
        return full_history_view(t)
    if cfg.mode is Mode.SINK_RECENT_ONLY:
        return sink_recent_view(t, cfg.policy)
    return assemble_cache(cfg.class_of(layer, head), t, cfg.policy, cfg.head_dim)


def _materialize(store: _FrameStore, layer: int, head: int, view: HeadCacheView) -> tuple[np.ndarray, np.ndarray]:
    """Stack retained slots into (slots * F, D) K and V, rotated to their slot positions."""
    ks, vs = [], []
    for slot in view.slots:
        if isinstance(slot, MergedBlock):
            k = np.empty((store.cfg.tokens_per_frame, store.cfg.head_dim))
            v = np.empty_like(k)
            for frame, (a, b) in zip(slot.source_frames, slot.channel_partition):
                fk, fv = store.kv(layer, frame)
                k[:, a:b] = fk[head, :, a:b]
                v[:, a:b] = fv[head, :, a:b]
        else:
            fk, fv = store.kv(layer, slot)
            k, v = fk[head], fv[head]
        ks.append(k)
        vs.append(v)
    if not ks:
        empty = np.empty((0, store.cfg.head_dim))
        return empty, empty
    f = store.cfg.tokens_per_frame
    pos = np.repeat(np.asarray(view.positions, dtype=np.int64), f)
    table = rope_frequencies(store.cfg.head_dim)
    return apply_rope(np.concatenate(ks), pos, table), np.concatenate(vs)


def run(cfg: SimConfig) -> SimReport:
    """Simulate ``num_frames`` generation steps.

    At step ``t`` frames ``0..t-1`` are history and frame ``t`` is queried.
    """
    store = _FrameStore(cfg)
    counter = InvocationCounter()
    table = rope_frequencies(cfg.head_dim)
    f = cfg.tokens_per_frame
    per_head = np.zeros((cfg.num_frames, cfg.layers, cfg.heads), dtype=np.int64)
    kinds = [[cfg.class_of(l, h).kind for h in range(cfg.heads)] for l in range(cfg.layers)]
    rows: list[StepRecord] = []
    calls_per_layer_step: list[int] = []
    flops_total = 0
    peak = 0
    outputs: dict[int, np.ndarray] = {}
    views_log: dict[int, list[list[HeadCacheView]]] = {}
    hist = {k.label: {} for k in HeadKind}

    for t in range(1, cfg.num_frames + 1):
        step_views = [[view_for(cfg, l, h, t) for h in range(cfg.heads)] for l in range(cfg.layers)]
        if cfg.record_views:
            views_log[t] = step_views
        for l in range(cfg.layers):
            for h in range(cfg.heads):
                per_head[t - 1, l, h] = step_views[l][h].num_slots
        peak = max(peak, int(per_head[t - 1].sum()) * f)

        step_calls = {k: 0 for k in HeadKind}
        step_flops = {k: 0 for k in HeadKind}
        step_out = np.zeros((cfg.layers, cfg.heads, f, cfg.head_dim)) if cfg.compute else None
        for l in range(cfg.layers):
            groups, members = _layer_groups(cfg, kinds[l])
            before = counter.attention_calls
            if cfg.compute:
                q_all = store.query(l, t)
                packed = []
                for heads_in_group in members:
                    segs, qs = [], []
                    for h in heads_in_group:
                        segs.append(_materialize(store, l, h, step_views[l][h]))
                        qs.append(apply_rope(q_all[h], step_views[l][h].query_position, table))
                    packed.append((RaggedQueries.pack(qs), pack_ragged(segs, cfg.head_dim)))
                call = fused_ragged_call if cfg.fused else unfused_ragged_call
                outs = call(packed, counter)
                for heads_in_group, out in zip(members, outs):
                    for i, h in enumerate(heads_in_group):
                        step_out[l, h] = out[i * f : (i + 1) * f]
            elif cfg.fused:
                counter.attention_calls += 1
                counter.scheduling_calls += 2
            else:
                # same increments as unfused_ragged_call
                counter.attention_calls += len(members)
                counter.scheduling_calls += sum(1 + len(hs) for hs in members)
            calls_per_layer_step.append(counter.attention_calls - before)
            for kind, heads_in_group in zip(groups, members):
                if not cfg.fused:
                    step_calls[kind] += 1
                for h in heads_in_group:
                    step_flops[kind] += f * step_views[l][h].num_slots * f * cfg.head_dim
            if cfg.fused:
                # attribute the single fused launch to the first group present
                step_calls[groups[0]] += 1

        if cfg.compute and (cfg.keep_outputs or t == cfg.num_frames):
            outputs[t] = step_out
        for kind in HeadKind:
            mask = np.array([[kinds[l][h] is kind for h in range(cfg.heads)] for l in range(cfg.layers)])
            n = int(mask.sum())
            if n == 0:
                continue
            slots = per_head[t - 1][mask]
            rows.append(StepRecord(t, kind.label, n, int(slots.sum()), int(slots.max()), step_calls[kind], step_flops[kind]))
            flops_total += step_flops[kind]
            for s in slots.tolist():
                hist[kind.label][str(s)] = hist[kind.label].get(str(s), 0) + 1

    return SimReport(
        mode=cfg.mode.value,
        fused=cfg.fused,
        num_frames=cfg.num_frames,
        tokens_per_frame=f,
        per_head_slots=per_head,
        rows=rows,
        peak_slots=peak,
        attention_calls=counter.attention_calls,
        scheduling_calls=counter.scheduling_calls,
        flop_proxy=flops_total,
        calls_per_layer_step=calls_per_layer_step,
        composition={k: dict(sorted(v.items(), key=lambda kv: int(kv[0]))) for k, v in hist.items() if v},
        outputs=outputs,
        views=views_log,
    )


def _layer_groups(cfg: SimConfig, layer_kinds: list[HeadKind]) -> tuple[list[HeadKind], list[list[int]]]:
    """Head index groups for one layer: one per class present (pyramid) or a single group."""
    if cfg.mode is not Mode.PYRAMID:
        return [layer_kinds[0]], [list(range(cfg.heads))]
    groups, members = [], []
    for kind in HeadKind:
        hs = [h for h, k in enumerate(layer_kinds) if k is kind]
        if hs:
            groups.append(kind)
            members.append(hs)
    return groups, members


@dataclass
class Comparison:
    fused_vs_unfused: float
    pyramid_vs_full_history: dict[int, float]
    pyramid_vs_sink_recent: dict[int, float]
    warmup_steps: int

    @property
    def warmup_identical(self) -> bool:
        return all(d == 0.0 for t, d in self.pyramid_vs_sink_recent.items() if t <= self.warmup_steps)

    @property
    def compression_observable(self) -> bool:
        return any(d > 0 for t, d in self.pyramid_vs_full_history.items() if t > self.warmup_steps)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["warmup_identical"] = self.warmup_identical
        d["compression_observable"] = self.compression_observable
        return d


def _max_dev(a: dict[int, np.ndarray], b: dict[int, np.ndarray]) -> dict[int, float]:
    return {t: float(np.max(np.abs(a[t] - b[t]))) for t in sorted(a)}


def compare_outputs(cfg: SimConfig) -> Comparison:
    """Run the same synthetic inputs through fused, unfused and baseline modes."""
    def variant(**kw) -> SimReport:
        base = asdict_shallow(cfg)
        base.update(kw, compute=True, keep_outputs=True, record_views=False)
        return run(SimConfig(**base))

    fused = variant(mode=Mode.PYRAMID, fused=True)
    unfused = variant(mode=Mode.PYRAMID, fused=False)
    full = variant(mode=Mode.FULL_HISTORY, fused=True)
    sink_recent = variant(mode=Mode.SINK_RECENT_ONLY, fused=True)
    dev = _max_dev(fused.outputs, unfused.outputs)
    return Comparison(
        fused_vs_unfused=max(dev.values()),
        pyramid_vs_full_history=_max_dev(fused.outputs, full.outputs),
        pyramid_vs_sink_recent=_max_dev(fused.outputs, sink_recent.outputs),
        warmup_steps=cfg.policy.sink + cfg.policy.recent,
    )


def asdict_shallow(cfg: SimConfig) -> dict:
    return {name: getattr(cfg, name) for name in cfg.__dataclass_fields__}
