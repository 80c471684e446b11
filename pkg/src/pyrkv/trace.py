"""Attention-logit traces: data model, binary file format and synthetic generators.

File layout (little endian)::

    offset  size  field
    0       4     magic b"PFTR"
    4       4     version (u32, == 1)
    8       16    prompts, layers, heads, frames (4 x u32)
    24      1     label flag (u8, 0 or 1)
    25      4*n   float32 logits, (prompt, layer, head, frame) row-major
    ...     L*H   optional u8 labels: 0 anchor, 1 wave, 2 veil, 255 unlabeled
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from .errors import BadMagic, EmptyHistory, ExtentOverflow, Truncated, VersionMismatch
from .heads import UNLABELED, HeadKind

MAGIC = b"PFTR"
VERSION = 1
MIN_FRAMES = 8
# 2**32 float32 values = 16 GiB; anything beyond is treated as a corrupt header
MAX_ELEMENTS = 1 << 32

_HEADER = struct.Struct("<4sI4IB")

# Extents of the reference analysis: 30 layers x 12 heads, frames 0..68.
DEFAULT_LAYERS = 30
DEFAULT_HEADS = 12
DEFAULT_FRAMES = 69

PathLike = Union[str, "os.PathLike[str]"]


def _frozen(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class LogitSequence:
    """Pre-softmax scores of one query frame against its history.

    ``values[t - 1]`` is the logit towards history frame ``t`` for
    ``t = 1 .. target_frame - 1``.
    """

    values: np.ndarray
    target_frame: int

    def __post_init__(self):
        vals = np.array(self.values, dtype=np.float64)
        if vals.ndim != 1:
            raise ValueError("logit sequence must be one-dimensional")
        if not np.all(np.isfinite(vals)):
            raise ValueError("logit sequence contains non-finite values")
        if len(vals) != self.target_frame - 1:
            raise ValueError(
                f"length {len(vals)} does not match target frame {self.target_frame}"
            )
        object.__setattr__(self, "values", _frozen(vals))

    @classmethod
    def of(cls, values: Sequence[float]) -> "LogitSequence":
        values = np.asarray(values, dtype=np.float64)
        return cls(values, len(values) + 1)

    def __len__(self) -> int:
        return len(self.values)


@dataclass(frozen=True, eq=False)
class LogitTrace:
    """Dense ``(prompt, layer, head, frame)`` array of float32 history logits."""

    sequences: np.ndarray
    labels: Optional[np.ndarray] = None

    def __post_init__(self):
        seq = np.asarray(self.sequences)
        if seq.ndim != 4:
            raise ValueError(f"expected a 4-D logit array, got shape {seq.shape}")
        if seq.dtype != np.float32:
            seq = seq.astype(np.float32)
        if min(seq.shape[:3]) < 1:
            raise ValueError(f"empty extent in {seq.shape}")
        if seq.shape[3] < MIN_FRAMES:
            raise ValueError(f"need at least {MIN_FRAMES} history frames, got {seq.shape[3]}")
        if not np.all(np.isfinite(seq)):
            raise ValueError("trace contains non-finite logits")
        object.__setattr__(self, "sequences", _frozen(np.ascontiguousarray(seq)))
        if self.labels is not None:
            lab = np.asarray(self.labels)
            if lab.shape != seq.shape[1:3]:
                raise ValueError(f"labels shape {lab.shape} != (layers, heads) {seq.shape[1:3]}")
            valid = np.isin(lab, [int(k) for k in HeadKind] + [UNLABELED])
            if not valid.all():
                raise ValueError("labels must be 0, 1, 2 or 255")
            object.__setattr__(self, "labels", _frozen(lab.astype(np.uint8)))

    @property
    def num_prompts(self) -> int:
        return self.sequences.shape[0]

    @property
    def num_layers(self) -> int:
        return self.sequences.shape[1]

    @property
    def num_heads(self) -> int:
        return self.sequences.shape[2]

    @property
    def num_frames(self) -> int:
        return self.sequences.shape[3]

    def sequence(self, prompt: int, layer: int, head: int) -> LogitSequence:
        return LogitSequence.of(self.sequences[prompt, layer, head])

    def label(self, layer: int, head: int) -> Optional[HeadKind]:
        if self.labels is None or self.labels[layer, head] == UNLABELED:
            return None
        return HeadKind(int(self.labels[layer, head]))


def write_trace(trace: LogitTrace, path: PathLike) -> None:
    p, l, h, f = trace.sequences.shape
    has_labels = trace.labels is not None
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, p, l, h, f, int(has_labels)))
        fh.write(trace.sequences.astype("<f4", copy=False).tobytes(order="C"))
        if has_labels:
            fh.write(trace.labels.astype(np.uint8).tobytes(order="C"))


def read_trace(path: PathLike) -> LogitTrace:
    with open(path, "rb") as fh:
        blob = fh.read()
    return decode_trace(blob)


def decode_trace(blob: bytes) -> LogitTrace:
    if len(blob) < 4 or blob[:4] != MAGIC:
        raise BadMagic(f"bad magic {blob[:4]!r}, expected {MAGIC!r}")
    if len(blob) < _HEADER.size:
        raise Truncated(f"header needs {_HEADER.size} bytes, file has {len(blob)}")
    _, version, p, l, h, f, flag = _HEADER.unpack_from(blob)
    if version != VERSION:
        raise VersionMismatch(f"unsupported trace version {version}")
    if flag not in (0, 1):
        raise BadMagic(f"label flag must be 0 or 1, got {flag}")
    n = p * l * h * f
    if n == 0 or n > MAX_ELEMENTS:
        raise ExtentOverflow(f"declared extents {(p, l, h, f)} are not representable")
    need = _HEADER.size + 4 * n + (l * h if flag else 0)
    if len(blob) < need:
        raise Truncated(f"payload needs {need} bytes, file has {len(blob)}")
    if len(blob) > need:
        raise ExtentOverflow(f"{len(blob) - need} bytes beyond the declared extents")
    logits = np.frombuffer(blob, dtype="<f4", count=n, offset=_HEADER.size)
    logits = logits.astype(np.float32).reshape(p, l, h, f)
    labels = None
    if flag:
        off = _HEADER.size + 4 * n
        labels = np.frombuffer(blob, dtype=np.uint8, count=l * h, offset=off).reshape(l, h)
    return LogitTrace(logits, labels.copy() if labels is not None else None)


def extract_history_sequence(attention_logits: np.ndarray, target: int) -> LogitSequence:
    """Row ``target`` of a causal score matrix restricted to earlier frames (1-based)."""
    a = np.asarray(attention_logits, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square score matrix, got shape {a.shape}")
    if target == 1:
        raise EmptyHistory("frame 1 has no history")
    if not 1 <= target <= a.shape[0]:
        raise IndexError(f"target frame {target} outside 1..{a.shape[0]}")
    return LogitSequence(a[target - 1, : target - 1].copy(), target)


@dataclass(frozen=True)
class PatternSpec:
    kind: HeadKind
    base_level: float = 0.0
    period: float = 6.0
    amplitude: float = 1.0
    noise_sigma: float = 0.0
    first_frame_boost: float = 0.0
    near_frames: int = 2
    rng_seed: int = 0

    def __post_init__(self):
        if not isinstance(self.kind, HeadKind):
            object.__setattr__(self, "kind", HeadKind.parse(str(self.kind)))
        if self.kind is HeadKind.WAVE and self.period < 2:
            raise ValueError(f"wave period must be >= 2, got {self.period}")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be non-negative")
        if self.near_frames < 0:
            raise ValueError("near_frames must be non-negative")


def synthesize_sequence(spec: PatternSpec, length: int) -> LogitSequence:
    """Deterministic synthetic analogue of one head's history logits.

    anchor: ``base`` everywhere; wave: ``base + amplitude*cos(2*pi*t/period)``;
    veil: ``base`` with ``first_frame_boost`` added at t=1 and on the last
    ``near_frames`` frames. Gaussian noise of ``noise_sigma`` is added on top.
    """
    if length < MIN_FRAMES:
        raise ValueError(f"length must be >= {MIN_FRAMES}, got {length}")
    t = np.arange(1, length + 1, dtype=np.float64)
    vals = np.full(length, spec.base_level, dtype=np.float64)
    if spec.kind is HeadKind.WAVE:
        vals += spec.amplitude * np.cos(2.0 * np.pi * t / spec.period)
    elif spec.kind is HeadKind.VEIL:
        vals[0] += spec.first_frame_boost
        if spec.near_frames:
            vals[max(1, length - spec.near_frames):] += spec.first_frame_boost
    if spec.noise_sigma > 0:
        rng = np.random.default_rng(spec.rng_seed)
        vals += rng.normal(0.0, spec.noise_sigma, size=length)
    return LogitSequence.of(vals)


def _mix_counts(mix: Sequence[float], total: int) -> list[int]:
    w = np.asarray(mix, dtype=np.float64)
    if w.shape != (3,) or np.any(w < 0) or not np.isfinite(w).all() or w.sum() <= 0:
        raise ValueError(f"mix must be three non-negative weights with positive sum, got {mix}")
    exact = w / w.sum() * total
    counts = np.floor(exact).astype(int)
    # largest remainder, ties broken by class order
    for i in np.argsort(-(exact - counts), kind="stable")[: total - counts.sum()]:
        counts[i] += 1
    return counts.tolist()


def head_pattern(kind: HeadKind, seed: int, layer: int, head: int) -> PatternSpec:
    """Per-head pattern parameters; fixed across prompts, only noise varies."""
    rng = np.random.default_rng([seed, 0x5EED, layer, head])
    if kind is HeadKind.ANCHOR:
        return PatternSpec(kind, base_level=rng.uniform(0.8, 2.5))
    if kind is HeadKind.WAVE:
        amp = rng.uniform(0.8, 1.5)
        return PatternSpec(
            kind,
            base_level=rng.uniform(-0.05, 0.05) * amp,
            amplitude=amp,
            period=rng.uniform(4.5, 6.0),
        )
    base = rng.uniform(-2.5, -0.8)
    return PatternSpec(kind, base_level=base, first_frame_boost=2 * abs(base) + rng.uniform(0.5, 1.5))


def synth_trace(
    prompts: int = 8,
    layers: int = DEFAULT_LAYERS,
    heads: int = DEFAULT_HEADS,
    frames: int = DEFAULT_FRAMES,
    mix: Sequence[float] = (5, 4, 3),
    noise: float = 0.1,
    seed: int = 0,
) -> LogitTrace:
    """Labeled synthetic trace with ``mix`` anchor:wave:veil head proportions."""
    if min(prompts, layers, heads) < 1:
        raise ValueError("prompts, layers and heads must be >= 1")
    if noise < 0:
        raise ValueError("noise must be non-negative")
    counts = _mix_counts(mix, layers * heads)
    kinds = np.repeat(np.arange(3, dtype=np.uint8), counts)
    labels = np.random.default_rng([seed, 0x1AB]).permutation(kinds).reshape(layers, heads)
    out = np.empty((prompts, layers, heads, frames), dtype=np.float32)
    for li in range(layers):
        for hi in range(heads):
            base = head_pattern(HeadKind(int(labels[li, hi])), seed, li, hi)
            for p in range(prompts):
                spec = PatternSpec(
                    base.kind,
                    base_level=base.base_level,
                    period=base.period,
                    amplitude=base.amplitude,
                    noise_sigma=noise,
                    first_frame_boost=base.first_frame_boost,
                    near_frames=base.near_frames,
                    rng_seed=_prompt_seed(seed, p, li, hi),
                )
                out[p, li, hi] = synthesize_sequence(spec, frames).values
    return LogitTrace(out, labels)


def _prompt_seed(seed: int, prompt: int, layer: int, head: int) -> int:
    ss = np.random.SeedSequence([seed, prompt, layer, head])
    return int(ss.generate_state(1, dtype=np.uint64)[0])
