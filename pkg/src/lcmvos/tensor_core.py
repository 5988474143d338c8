"""Dense float64 kernels used by the read branches, plus the LCMT dump format.

Tensors are plain ``numpy.ndarray`` objects of dtype float64 with rank 1..4.
Every kernel checks shapes up front and reports both operands on mismatch.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import DimensionError, NumericError, ParameterError

MAX_RANK = 4
LCMT_MAGIC = b"LCMT"


def as_tensor(x, name: str = "tensor") -> np.ndarray:
    t = np.asarray(x, dtype=np.float64)
    if t.ndim < 1 or t.ndim > MAX_RANK:
        raise DimensionError(f"{name} must have rank 1..{MAX_RANK}, got shape {t.shape}")
    if any(e < 1 for e in t.shape):
        raise DimensionError(f"{name} has an empty extent: shape {t.shape}")
    return t


def matmul(a, b) -> np.ndarray:
    """``c[i, j] = sum_l a[i, l] * b[l, j]`` for 2-D operands."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    return a @ b


def softmax_axis(t, axis: int) -> np.ndarray:
    """Numerically stable softmax along ``axis`` (max-subtracted)."""
    t = np.asarray(t, dtype=np.float64)
    if not -t.ndim <= axis < t.ndim:
        raise DimensionError(f"axis {axis} out of range for shape {t.shape}")
    if not np.all(np.isfinite(t)):
        raise NumericError("softmax input contains non-finite values")
    e = np.exp(t - t.max(axis=axis, keepdims=True))
    return e / e.sum(axis=axis, keepdims=True)


def topk_mean(t, axis: int, k: int) -> np.ndarray:
    """Mean of the ``k`` largest values along ``axis``; the axis is dropped.

    Selection is by value, so duplicated maxima are simply counted as often as
    they occur.
    """
    t = np.asarray(t, dtype=np.float64)
    if not -t.ndim <= axis < t.ndim:
        raise DimensionError(f"axis {axis} out of range for shape {t.shape}")
    n = t.shape[axis]
    if not 1 <= k <= n:
        raise ParameterError(f"k={k} must lie in [1, {n}]")
    top = np.partition(t, n - k, axis=axis)
    top = np.take(top, np.arange(n - k, n), axis=axis)
    # sort the selected block so summation order does not depend on partition internals
    return np.sort(top, axis=axis).mean(axis=axis)


def gap(t) -> np.ndarray:
    """Per-channel mean over every leading (spatial or set) axis."""
    t = np.asarray(t, dtype=np.float64)
    if t.ndim < 2 or t.size == 0:
        raise DimensionError(f"gap needs a nonempty tensor of rank >= 2, got shape {t.shape}")
    return t.reshape(-1, t.shape[-1]).mean(axis=0)


def scale_channels(t, per_channel) -> np.ndarray:
    """Multiply each trailing-axis channel of ``t`` by ``per_channel``."""
    t = np.asarray(t, dtype=np.float64)
    w = np.asarray(per_channel, dtype=np.float64)
    if w.ndim != 1 or w.shape[0] != t.shape[-1]:
        raise DimensionError(f"channel scale {w.shape} does not match tensor {t.shape}")
    return t * w


def scale_spatial(spatial, t) -> np.ndarray:
    """Multiply every channel vector of ``t[..., C]`` by the scalar map ``spatial[...]``."""
    s = np.asarray(spatial, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    if s.shape != t.shape[:-1]:
        raise DimensionError(f"spatial map {s.shape} does not match tensor {t.shape}")
    return s[..., None] * t


def linear(x, weight, bias=None) -> np.ndarray:
    """Per-vector affine map over the trailing axis: ``x @ weight.T + bias``.

    ``weight`` has shape (out, in), like a 1x1 convolution kernel.
    """
    x = np.asarray(x, dtype=np.float64)
    weight = np.asarray(weight, dtype=np.float64)
    if weight.ndim != 2 or x.shape[-1] != weight.shape[1]:
        raise DimensionError(f"linear: input {x.shape} incompatible with weight {weight.shape}")
    y = x @ weight.T
    if bias is not None:
        bias = np.asarray(bias, dtype=np.float64)
        if bias.shape != (weight.shape[0],):
            raise DimensionError(f"linear: bias {bias.shape} does not match weight {weight.shape}")
        y = y + bias
    return y


# --- LCMT debug dump: b"LCMT", u32 rank, rank x u32 extents, f64 data (all little-endian)


def dumps_lcmt(t) -> bytes:
    t = as_tensor(t)
    head = LCMT_MAGIC + struct.pack(f"<I{t.ndim}I", t.ndim, *t.shape)
    return head + np.ascontiguousarray(t, dtype="<f8").tobytes()


def loads_lcmt(buf: bytes) -> np.ndarray:
    if len(buf) < 8 or buf[:4] != LCMT_MAGIC:
        raise ValueError("not an LCMT tensor dump (bad magic)")
    (rank,) = struct.unpack_from("<I", buf, 4)
    if not 1 <= rank <= MAX_RANK:
        raise ValueError(f"LCMT rank {rank} out of range")
    shape = struct.unpack_from(f"<{rank}I", buf, 8)
    offset = 8 + 4 * rank
    count = int(np.prod(shape))
    if len(buf) != offset + 8 * count:
        raise ValueError(f"LCMT payload is {len(buf) - offset} bytes, expected {8 * count}")
    data = np.frombuffer(buf, dtype="<f8", count=count, offset=offset)
    return data.astype(np.float64).reshape(shape)


def save_lcmt(path, t) -> None:
    Path(path).write_bytes(dumps_lcmt(t))


def load_lcmt(path) -> np.ndarray:
    return loads_lcmt(Path(path).read_bytes())
