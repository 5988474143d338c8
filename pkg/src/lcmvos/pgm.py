"""Position guidance: positional correlation with the previous frame, gated by its mask.

Grids are flattened row-major (y-major) everywhere, so cell (y, x) of an
H x W grid has flat index ``y * W + x``.
"""

from __future__ import annotations

import logging
import threading
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, ParameterError
from .tensor_core import linear, scale_spatial, softmax_axis, topk_mean

log = logging.getLogger(__name__)

DEFAULT_TOPK = 8

_clamp_lock = threading.Lock()
_clamp_count = 0


def gate_clamp_count() -> int:
    """Number of mask-gate inputs clamped into [0, 1] since import (or last reset)."""
    return _clamp_count


def reset_gate_clamp_count() -> None:
    global _clamp_count
    with _clamp_lock:
        _clamp_count = 0


def mask_gate(x):
    """``exp(x) / e``: maps [0, 1] onto [1/e, 1]; inputs outside [0, 1] are clamped."""
    global _clamp_count
    arr = np.asarray(x, dtype=np.float64)
    outside = int(np.count_nonzero((arr < 0.0) | (arr > 1.0)))
    if outside:
        with _clamp_lock:
            _clamp_count += outside
        log.warning("mask_gate: clamped %d value(s) outside [0, 1]", outside)
        arr = np.clip(arr, 0.0, 1.0)
    out = np.exp(arr - 1.0)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class PgmInputs:
    prev_local_key: np.ndarray   # H x W x Ck
    query_local_key: np.ndarray  # H x W x Ck
    prev_mask_soft: np.ndarray   # H x W, in [0, 1]
    query_value: np.ndarray      # H x W x Cv

    def __post_init__(self):
        hw = self.prev_local_key.shape[:2]
        if self.query_local_key.shape != self.prev_local_key.shape:
            raise DimensionError(
                f"local keys disagree: {self.prev_local_key.shape} vs {self.query_local_key.shape}"
            )
        if self.prev_mask_soft.shape != hw or self.query_value.shape[:2] != hw:
            raise DimensionError(
                f"mask {self.prev_mask_soft.shape} / value {self.query_value.shape} "
                f"do not match key grid {hw}"
            )


def positional_embed(local_key, pos, fn) -> np.ndarray:
    """``f_n(local_key + pos)`` flattened to (HW, Ck)."""
    local_key = np.asarray(local_key, dtype=np.float64)
    if pos.shape != local_key.shape:
        raise DimensionError(f"positional encoding {pos.shape} does not match local key {local_key.shape}")
    p = linear(local_key + pos, *fn)
    return p.reshape(-1, p.shape[-1])


def position_correlation(inputs: PgmInputs, pos, fn) -> np.ndarray:
    """HW x HW response ``S``: row i (previous frame) softmaxed over query cells j, times g(mask_i)."""
    pm = positional_embed(inputs.prev_local_key, pos, fn)
    pq = positional_embed(inputs.query_local_key, pos, fn)
    rows = softmax_axis(pm @ pq.T, axis=1)
    gate = mask_gate(inputs.prev_mask_soft.reshape(-1))
    return rows * np.reshape(gate, (-1, 1))


def position_map(S, grid: tuple[int, int], k: int = DEFAULT_TOPK) -> np.ndarray:
    """Mean of the k strongest responses per query cell, reshaped to the grid."""
    S = np.asarray(S, dtype=np.float64)
    h, w = grid
    if S.shape != (h * w, h * w):
        raise DimensionError(f"response matrix {S.shape} does not match grid {h}x{w}")
    if not 1 <= k <= h * w:
        raise ParameterError(f"top-K must lie in [1, {h * w}], got {k}")
    return topk_mean(S, axis=0, k=k).reshape(h, w)


def pgm_apply(pmap, query_value) -> np.ndarray:
    return scale_spatial(pmap, query_value)


def correlation_flops(h: int, w: int, ck: int) -> int:
    n = h * w
    return 2 * n * n * ck + 2 * (2 * n * ck * ck)
