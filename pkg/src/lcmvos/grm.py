"""Global retrieval: the space-time memory pool and its pixel-level attention read."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .encoding import FrameEmbedding
from .errors import DimensionError, ParameterError, StateError

# largest query grid (cells) for which the full attention matrix is returned
DEFAULT_ATTENTION_CAP = 64 * 64
READ_BLOCK = 1024


@dataclass(frozen=True)
class MemoryPool:
    """Append-only store of (global key, value) frames; slot 0 is the annotated frame."""

    keys: np.ndarray | None = None     # T x H x W x Ck
    values: np.ndarray | None = None   # T x H x W x Cv
    frame_indices: tuple[int, ...] = field(default_factory=tuple)
    first_frame_slot: int = 0

    @property
    def size(self) -> int:
        return len(self.frame_indices)

    def __len__(self):
        return self.size


def pool_write(pool: MemoryPool, emb: FrameEmbedding, frame_index: int) -> MemoryPool:
    """Return a new pool with ``emb``'s global key and value appended along time."""
    k, v = emb.global_key, emb.value
    if k.shape[:2] != v.shape[:2]:
        raise DimensionError(f"embedding key {k.shape} and value {v.shape} disagree spatially")
    if pool.size == 0:
        return MemoryPool(k[None].copy(), v[None].copy(), (int(frame_index),), 0)
    if k.shape != pool.keys.shape[1:] or v.shape != pool.values.shape[1:]:
        raise DimensionError(
            f"embedding key {k.shape} / value {v.shape} does not match pool "
            f"key {pool.keys.shape[1:]} / value {pool.values.shape[1:]}"
        )
    if frame_index in pool.frame_indices:
        raise StateError(f"frame {frame_index} is already in the memory pool")
    if frame_index < pool.frame_indices[-1]:
        raise StateError(f"frame {frame_index} precedes the newest pooled frame {pool.frame_indices[-1]}")
    return MemoryPool(
        np.concatenate([pool.keys, k[None]], axis=0),
        np.concatenate([pool.values, v[None]], axis=0),
        pool.frame_indices + (int(frame_index),),
        pool.first_frame_slot,
    )


def global_read(pool: MemoryPool, query_key, temperature: float = 1.0,
                attention_cap: int = DEFAULT_ATTENTION_CAP):
    """Attention read of the pool by every query pixel.

    Returns ``(y, s)`` where ``y`` is H x W x Cv and ``s`` is the (THW x HW)
    matrix of softmax weights over memory pixels (rows) per query pixel
    (columns).  ``s`` is ``None`` when the query grid exceeds ``attention_cap``
    cells; the read itself is always computed blockwise over query columns.
    """
    if pool.size == 0:
        raise StateError("cannot read from an empty memory pool")
    if not temperature > 0:
        raise ParameterError(f"temperature must be positive, got {temperature}")
    query_key = np.asarray(query_key, dtype=np.float64)
    ck = pool.keys.shape[-1]
    if query_key.ndim != 3 or query_key.shape[-1] != ck:
        raise DimensionError(f"query key {query_key.shape} does not match pool key width {ck}")
    h, w = query_key.shape[:2]
    mk = pool.keys.reshape(-1, ck)
    mv = pool.values.reshape(-1, pool.values.shape[-1])
    qk = query_key.reshape(-1, ck)
    n_q = qk.shape[0]

    keep = n_q <= attention_cap
    s_full = np.empty((mk.shape[0], n_q)) if keep else None
    y = np.empty((n_q, mv.shape[1]))
    for lo in range(0, n_q, READ_BLOCK):
        hi = min(lo + READ_BLOCK, n_q)
        logits = (mk @ qk[lo:hi].T) / temperature
        logits -= logits.max(axis=0, keepdims=True)
        s = np.exp(logits)
        s /= s.sum(axis=0, keepdims=True)
        y[lo:hi] = s.T @ mv
        if keep:
            s_full[:, lo:hi] = s
    return y.reshape(h, w, -1), s_full


def read_flops(pool_frames: int, h: int, w: int, ck: int, cv: int) -> int:
    """Multiply-add count (x2) of one global_read: similarity plus weighted sum."""
    m, n = pool_frames * h * w, h * w
    return 2 * m * n * ck + 2 * m * n * cv
