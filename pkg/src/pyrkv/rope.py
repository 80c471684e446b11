"""Rotary positional embeddings (interleaved pairs) and the low-frequency period."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

BASE = 10000.0


@dataclass(frozen=True, eq=False)
class RopeTable:
    head_dim: int
    thetas: np.ndarray


@lru_cache(maxsize=32)
def rope_frequencies(d: int) -> RopeTable:
    """``theta_i = 10000 ** (-2i/d)`` for ``i = 0 .. d/2 - 1``."""
    if d < 2 or d % 2:
        raise ValueError(f"head dim must be even and >= 2, got {d}")
    i = np.arange(d // 2, dtype=np.float64)
    thetas = BASE ** (-2.0 * i / d)
    thetas.flags.writeable = False
    return RopeTable(d, thetas)


def _int_positions(position) -> np.ndarray:
    pos = np.asarray(position)
    if pos.dtype.kind == "b":
        raise TypeError("positions must be integers")
    if pos.dtype.kind == "f":
        if not np.all(pos == np.round(pos)):
            raise ValueError("fractional positions are not supported")
        pos = pos.astype(np.int64)
    elif pos.dtype.kind not in "iu":
        raise TypeError(f"positions must be integers, got {pos.dtype}")
    return pos


def apply_rope(x, position, table: RopeTable | None = None) -> np.ndarray:
    """Rotate each pair ``(x[2i], x[2i+1])`` by ``position * theta_i``.

    ``x`` has shape ``(..., D)``; ``position`` is an integer or an integer
    array broadcastable to ``x.shape[:-1]``.
    """
    x = np.asarray(x, dtype=np.float64)
    d = x.shape[-1]
    table = table or rope_frequencies(d)
    if table.head_dim != d:
        raise ValueError(f"vector dim {d} does not match table dim {table.head_dim}")
    pos = _int_positions(position)
    angle = pos[..., None].astype(np.float64) * table.thetas
    cos, sin = np.cos(angle), np.sin(angle)
    even, odd = x[..., 0::2], x[..., 1::2]
    out = np.empty(np.broadcast_shapes(x.shape, angle.shape[:-1] + (d,)))
    out[..., 0::2] = even * cos - odd * sin
    out[..., 1::2] = even * sin + odd * cos
    return out


def dominant_rope_period(d: int = 2) -> float:
    """Period ``2*pi/theta_0`` of the lowest-index rotary component (``theta_0 = 1``)."""
    return 2.0 * math.pi / float(rope_frequencies(d).thetas[0])


def perceived_period(d: int = 2) -> int:
    """Integer period seen under whole-frame sampling."""
    return round(dominant_rope_period(d))


def rope_score_curve(deltas, d: int = 2) -> np.ndarray:
    """``<rope(e0, t), rope(e0, t - delta)>`` for each frame distance ``delta``; equals ``cos(delta)``."""
    deltas = _int_positions(deltas)
    e0 = np.zeros(d)
    e0[0] = 1.0
    t = int(deltas.max()) if deltas.size else 0
    q = apply_rope(e0, t)
    k = apply_rope(np.broadcast_to(e0, deltas.shape + (d,)), t - deltas)
    return k @ q
