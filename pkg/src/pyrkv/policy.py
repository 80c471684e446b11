"""Head-aware KV cache index policies.

Every head keeps the same sink frames ``[0, S)`` and forced-recent frames
``[t-R, t)``. What differs is the intermediate region:

* anchor: centered strided sampling spread over the whole history,
* wave:   frames spaced one dominant period apart,
* veil:   one slot merged from the ``m`` frames just before the recent window.

Indices are whole-frame indices; ``t`` is the frame being generated, so the
available history is ``[0, t)``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional, Union

from .errors import NonDivisible
from .heads import HeadClass, HeadKind


@dataclass(frozen=True)
class PolicyConfig:
    sink: int = 3
    recent: int = 4
    cap_anchor: int = 4
    cap_wave: int = 4
    cap_veil: int = 2
    merge_range: int = 2
    wave_default_period: float = 6.0

    def __post_init__(self):
        for name in ("sink", "recent", "cap_anchor", "cap_wave", "cap_veil"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.merge_range < 2:
            raise ValueError("merge_range must be >= 2")
        if self.wave_default_period < 2:
            raise ValueError("wave_default_period must be >= 2")

    def cap(self, kind: HeadKind) -> int:
        return {HeadKind.ANCHOR: self.cap_anchor, HeadKind.WAVE: self.cap_wave, HeadKind.VEIL: self.cap_veil}[kind]

    def slot_bound(self, kind: HeadKind) -> int:
        """Upper bound on retained slots for one head, independent of ``t``."""
        middle = 1 if kind is HeadKind.VEIL else self.cap(kind)
        return self.sink + middle + self.recent


class Region(enum.Enum):
    SINK = "sink"
    INTERMEDIATE = "intermediate"
    RECENT = "recent"


@dataclass(frozen=True)
class FrameIndexSet:
    frames: tuple[int, ...]
    kind: Region = Region.INTERMEDIATE

    def __post_init__(self):
        frames = tuple(int(f) for f in self.frames)
        if any(b <= a for a, b in zip(frames, frames[1:])):
            raise ValueError(f"frame indices must be strictly ascending: {frames}")
        if frames and frames[0] < 0:
            raise ValueError("frame indices must be non-negative")
        object.__setattr__(self, "frames", frames)

    def __len__(self) -> int:
        return len(self.frames)

    def __iter__(self):
        return iter(self.frames)

    def __contains__(self, f) -> bool:
        return f in self.frames


@dataclass(frozen=True)
class MergedBlock:
    """One cache slot built from ``m`` adjacent frames, each donating a channel range."""

    source_frames: tuple[int, ...]
    channel_partition: tuple[tuple[int, int], ...]

    def __post_init__(self):
        if len(self.source_frames) != len(self.channel_partition):
            raise ValueError("one channel range per source frame")
        lo = 0
        for a, b in self.channel_partition:
            if a != lo or b <= a:
                raise ValueError(f"channel ranges must tile [0, D): {self.channel_partition}")
            lo = b

    @property
    def channels(self) -> int:
        return self.channel_partition[-1][1]

    @property
    def frames(self) -> tuple[int, ...]:
        return self.source_frames

    def __len__(self) -> int:
        return 1


Intermediate = Union[FrameIndexSet, MergedBlock]


def _finish(raw, lower_bound: int) -> FrameIndexSet:
    return FrameIndexSet(tuple(sorted({i for i in raw if i >= lower_bound})))


def anchor_indices(t: int, cap: int, lower_bound: int = 0) -> FrameIndexSet:
    """Centered strided window: ``t - floor(i*t/cap) - floor(t/(2*cap))``.

    Indices below ``lower_bound`` are dropped, not redistributed. For
    ``t <= cap`` every frame in ``[lower_bound, t)`` is returned.
    """
    if t < 1 or cap < 1:
        raise ValueError("t and cap must be >= 1")
    if t <= cap:
        return FrameIndexSet(tuple(range(max(lower_bound, 0), t)))
    offset = t // (2 * cap)
    return _finish((t - (i * t) // cap - offset for i in range(cap)), lower_bound)


def round_half_up(x: float) -> int:
    return math.floor(x + 0.5)


def wave_indices(t: int, cap: int, period: float, lower_bound: int = 0) -> FrameIndexSet:
    """Period-aligned sampling ``t - round(i*period)``, ``i = 0..cap-1``.

    The ``i = 0`` term is ``t`` itself; callers clip it against the
    forced-recent window.
    """
    if period < 2:
        raise ValueError(f"period must be >= 2, got {period}")
    if cap < 1:
        raise ValueError("cap must be >= 1")
    return _finish((t - round_half_up(i * period) for i in range(cap)), lower_bound)


def veil_merge_plan(t: int, m: int, channels: int) -> MergedBlock:
    """Merge frames ``t-m .. t-1``; the i-th oldest frame donates the i-th channel slice."""
    if m < 1:
        raise ValueError("m must be >= 1")
    if channels % m:
        raise NonDivisible(f"{channels} channels not divisible into {m} subsets")
    if t < m:
        raise ValueError(f"need t >= m, got t={t}, m={m}")
    w = channels // m
    return MergedBlock(
        tuple(range(t - m, t)),
        tuple((i * w, (i + 1) * w) for i in range(m)),
    )


@dataclass(frozen=True)
class HeadCacheView:
    sink_frames: FrameIndexSet
    intermediate: Intermediate
    recent_frames: FrameIndexSet
    positions: tuple[int, ...] = ()
    query_position: int = 0

    def __post_init__(self):
        seen = set()
        for part in (self.sink_frames.frames, self.intermediate.frames, self.recent_frames.frames):
            if seen & set(part):
                raise ValueError("cache regions overlap")
            seen |= set(part)

    @property
    def num_slots(self) -> int:
        return len(self.sink_frames) + len(self.intermediate) + len(self.recent_frames)

    @property
    def slots(self) -> list[Union[int, MergedBlock]]:
        """Slots in cache order: sink frames, intermediate (frames or one merged block), recent."""
        mid = list(self.intermediate.frames) if isinstance(self.intermediate, FrameIndexSet) else [self.intermediate]
        return [*self.sink_frames, *mid, *self.recent_frames]

    @property
    def frames(self) -> tuple[int, ...]:
        """Every source frame referenced by the view, ascending."""
        return tuple(sorted((*self.sink_frames, *self.intermediate.frames, *self.recent_frames)))


def dynamic_rope_positions(view: HeadCacheView, t: Optional[int] = None) -> tuple[tuple[int, ...], int]:
    """Consecutive positions ``0..n-1`` in cache order; the query frame gets ``n``.

    Retained frames are re-addressed as if the compacted cache were
    contiguous, so sink frames sit right next to the retained window. With
    nothing evicted this is the identity on absolute frame indices.
    """
    n = view.num_slots
    return tuple(range(n)), n


def full_history_view(t: int) -> HeadCacheView:
    empty = FrameIndexSet((), Region.INTERMEDIATE)
    return HeadCacheView(
        FrameIndexSet((), Region.SINK), empty, FrameIndexSet(tuple(range(t)), Region.RECENT),
        tuple(range(t)), t,
    )


def sink_recent_view(t: int, cfg: PolicyConfig) -> HeadCacheView:
    sink, recent = _shared_regions(t, cfg)
    return _with_positions(sink, FrameIndexSet(()), recent)


def _shared_regions(t: int, cfg: PolicyConfig) -> tuple[FrameIndexSet, FrameIndexSet]:
    sink = FrameIndexSet(tuple(range(min(cfg.sink, t))), Region.SINK)
    recent = FrameIndexSet(tuple(range(max(t - cfg.recent, cfg.sink), t)), Region.RECENT)
    return sink, recent


def _with_positions(sink, intermediate, recent) -> HeadCacheView:
    view = HeadCacheView(sink, intermediate, recent)
    pos, q = dynamic_rope_positions(view)
    return HeadCacheView(sink, intermediate, recent, pos, q)


def assemble_cache(
    head: HeadClass, t: int, cfg: PolicyConfig = PolicyConfig(), channels: int = 64
) -> HeadCacheView:
    """Sink + class-specific intermediate + forced-recent view for generating frame ``t``.

    The intermediate region is restricted to ``[S, t-R)``. Veil heads only
    merge once ``m`` frames are available there; before that the region is
    empty.
    """
    if t < 1:
        raise ValueError("t must be >= 1")
    sink, recent = _shared_regions(t, cfg)
    lo, hi = cfg.sink, t - cfg.recent
    kind = head.kind
    if hi - lo <= 0:
        mid: Intermediate = FrameIndexSet(())
    elif kind is HeadKind.ANCHOR:
        raw = anchor_indices(t, cfg.cap_anchor, lo)
        mid = FrameIndexSet(tuple(f for f in raw if f < hi))
    elif kind is HeadKind.WAVE:
        period = head.period if head.period is not None else cfg.wave_default_period
        raw = wave_indices(t, cfg.cap_wave, period, lo)
        mid = FrameIndexSet(tuple(f for f in raw if f < hi))
    elif hi - lo >= cfg.merge_range:
        mid = veil_merge_plan(hi, cfg.merge_range, channels)
    else:
        mid = FrameIndexSet(())
    return _with_positions(sink, mid, recent)
