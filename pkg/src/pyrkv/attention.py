"""Reference attention: dense SDPA and ragged (cu_seqlens-packed) attention.

All arithmetic runs in float64 and goes through one per-segment kernel,
``attend``, so the dense, ragged, fused and unfused paths agree bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from .errors import CorruptOffsets, EmptySegment, NonFinite, ShapeMismatch


def softmax(scores: np.ndarray) -> np.ndarray:
    z = scores - scores.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def attend(q: np.ndarray, k: np.ndarray, v: np.ndarray) -> np.ndarray:
    """``softmax(q k^T / sqrt(D)) v`` for one (batch, head) segment, q: (Lq, D), k/v: (Lk, D)."""
    scores = (q @ k.T) / math.sqrt(q.shape[-1])
    return softmax(scores) @ v


def _as_f64(name: str, x) -> np.ndarray:
    a = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(a)):
        raise NonFinite(f"{name} contains non-finite values")
    return a


def dense_attention(q, k, v) -> np.ndarray:
    """Dense attention over ``(B, H, L, D)`` tensors."""
    q, k, v = _as_f64("q", q), _as_f64("k", k), _as_f64("v", v)
    if q.ndim != 4 or k.ndim != 4 or v.ndim != 4:
        raise ShapeMismatch("expected (B, H, L, D) tensors")
    if k.shape != v.shape:
        raise ShapeMismatch(f"k {k.shape} and v {v.shape} differ")
    if q.shape[:2] != k.shape[:2] or q.shape[3] != k.shape[3]:
        raise ShapeMismatch(f"q {q.shape} incompatible with k {k.shape}")
    if k.shape[2] == 0:
        raise EmptySegment("no keys to attend to")
    out = np.empty(q.shape)
    for b in range(q.shape[0]):
        for h in range(q.shape[1]):
            out[b, h] = attend(q[b, h], k[b, h], v[b, h])
    return out


def cu_seqlens_of(lengths: Sequence[int]) -> np.ndarray:
    lengths = np.asarray(lengths, dtype=np.int64)
    if np.any(lengths < 0):
        raise ValueError("segment lengths must be non-negative")
    return np.concatenate([[0], np.cumsum(lengths)]).astype(np.int64)


@dataclass(frozen=True, eq=False)
class RaggedBatch:
    """Variable-length K/V segments flattened row-wise with prefix-sum boundaries.

    Segment ``i`` occupies rows ``cu_seqlens[i]:cu_seqlens[i+1]``.
    """

    flat_k: np.ndarray
    flat_v: np.ndarray
    cu_seqlens: np.ndarray
    head_dim: int

    @property
    def lengths(self) -> np.ndarray:
        return np.diff(self.cu_seqlens)

    @property
    def num_segments(self) -> int:
        return len(self.cu_seqlens) - 1

    @property
    def total_len(self) -> int:
        return int(self.cu_seqlens[-1])

    def segment(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        a, b = self.cu_seqlens[i], self.cu_seqlens[i + 1]
        return self.flat_k[a:b], self.flat_v[a:b]


def check_offsets(cu: np.ndarray, rows: int, what: str = "cu_seqlens") -> None:
    cu = np.asarray(cu)
    if cu.ndim != 1 or len(cu) < 1 or cu[0] != 0:
        raise CorruptOffsets(f"{what} must start at 0")
    if np.any(np.diff(cu) < 0):
        raise CorruptOffsets(f"{what} must be non-decreasing")
    if cu[-1] != rows:
        raise CorruptOffsets(f"{what} ends at {cu[-1]} but buffer holds {rows} rows")


def pack_ragged(segments: Sequence[tuple[np.ndarray, np.ndarray]], head_dim: Optional[int] = None) -> RaggedBatch:
    """Concatenate per-segment ``(K_i, V_i)`` in order; no padding rows."""
    ks, vs = [], []
    for i, (k, v) in enumerate(segments):
        k = np.asarray(k, dtype=np.float64)
        v = np.asarray(v, dtype=np.float64)
        if k.ndim != 2 or v.shape != k.shape:
            raise ShapeMismatch(f"segment {i}: k {k.shape} and v {v.shape} must be matching (L, D)")
        if head_dim is None:
            head_dim = k.shape[1]
        if k.shape[1] != head_dim:
            raise ShapeMismatch(f"segment {i} has head dim {k.shape[1]}, expected {head_dim}")
        ks.append(k)
        vs.append(v)
    if head_dim is None:
        raise ShapeMismatch("cannot infer head dim from zero segments")
    cu = cu_seqlens_of([len(k) for k in ks])
    flat_k = np.concatenate(ks) if ks else np.empty((0, head_dim))
    flat_v = np.concatenate(vs) if vs else np.empty((0, head_dim))
    return RaggedBatch(flat_k, flat_v, cu, head_dim)


@dataclass(frozen=True, eq=False)
class RaggedQueries:
    flat_q: np.ndarray
    cu_seqlens: np.ndarray

    @classmethod
    def pack(cls, blocks: Sequence[np.ndarray]) -> "RaggedQueries":
        blocks = [np.asarray(b, dtype=np.float64) for b in blocks]
        d = blocks[0].shape[-1] if blocks else 0
        flat = np.concatenate(blocks) if blocks else np.empty((0, d))
        return cls(flat, cu_seqlens_of([len(b) for b in blocks]))

    def segment(self, i: int) -> np.ndarray:
        return self.flat_q[self.cu_seqlens[i] : self.cu_seqlens[i + 1]]


QueryInput = Union[RaggedQueries, Sequence[np.ndarray]]


def _queries(q: QueryInput) -> RaggedQueries:
    return q if isinstance(q, RaggedQueries) else RaggedQueries.pack(q)


def ragged_attention(queries: QueryInput, batch: RaggedBatch) -> np.ndarray:
    """Attention of each query block against its own K/V segment; outputs concatenated.

    ``queries`` is either a list with one ``(Lq_i, D)`` block per segment or a
    packed ``RaggedQueries``.
    """
    rq = _queries(queries)
    check_offsets(batch.cu_seqlens, len(batch.flat_k))
    check_offsets(rq.cu_seqlens, len(rq.flat_q), "query cu_seqlens")
    if len(batch.flat_v) != len(batch.flat_k):
        raise CorruptOffsets("flat_k and flat_v row counts differ")
    if len(rq.cu_seqlens) != len(batch.cu_seqlens):
        raise ShapeMismatch(f"{len(rq.cu_seqlens) - 1} query blocks for {batch.num_segments} segments")
    if rq.flat_q.size and rq.flat_q.shape[1] != batch.head_dim:
        raise ShapeMismatch(f"query dim {rq.flat_q.shape[1]} != head dim {batch.head_dim}")
    _as_f64("queries", rq.flat_q)
    _as_f64("keys", batch.flat_k)
    _as_f64("values", batch.flat_v)
    out = np.empty((len(rq.flat_q), batch.head_dim))
    for i in range(batch.num_segments):
        qa, qb = rq.cu_seqlens[i], rq.cu_seqlens[i + 1]
        if qb == qa:
            continue
        k, v = batch.segment(i)
        if len(k) == 0:
            raise EmptySegment(f"segment {i} has queries but no keys")
        out[qa:qb] = attend(rq.flat_q[qa:qb], k, v)
    return out


@dataclass
class InvocationCounter:
    """Attention launches and scheduling operations (launches plus workspace writes)."""

    attention_calls: int = 0
    scheduling_calls: int = 0

    def reset(self) -> None:
        self.attention_calls = 0
        self.scheduling_calls = 0


def _split(out: np.ndarray, sizes: list[int]) -> list[np.ndarray]:
    return np.split(out, np.cumsum(sizes)[:-1]) if sizes else []


def fused_ragged_call(
    groups: Sequence[tuple[QueryInput, RaggedBatch]], counter: Optional[InvocationCounter] = None
) -> list[np.ndarray]:
    """Run several ragged groups as a single ragged invocation.

    Counts one attention launch and one batched workspace write regardless of
    the number of groups or segments.
    """
    if not groups:
        return []
    dims = {b.head_dim for _, b in groups}
    if len(dims) != 1:
        raise ShapeMismatch(f"groups disagree on head dim: {sorted(dims)}")
    qs = [_queries(q) for q, _ in groups]
    batches = [b for _, b in groups]
    merged = RaggedBatch(
        np.concatenate([b.flat_k for b in batches]),
        np.concatenate([b.flat_v for b in batches]),
        cu_seqlens_of(np.concatenate([b.lengths for b in batches])),
        batches[0].head_dim,
    )
    mq = RaggedQueries(
        np.concatenate([q.flat_q for q in qs]).reshape(-1, merged.head_dim),
        cu_seqlens_of(np.concatenate([np.diff(q.cu_seqlens) for q in qs])),
    )
    out = ragged_attention(mq, merged)
    if counter is not None:
        counter.attention_calls += 1
        counter.scheduling_calls += 2
    return _split(out, [len(q.flat_q) for q in qs])


def unfused_ragged_call(
    groups: Sequence[tuple[QueryInput, RaggedBatch]], counter: Optional[InvocationCounter] = None
) -> list[np.ndarray]:
    """One ragged invocation per group, with a workspace write per segment."""
    outs = []
    for q, b in groups:
        outs.append(ragged_attention(q, b))
        if counter is not None:
            counter.attention_calls += 1
            counter.scheduling_calls += 1 + b.num_segments
    return outs
