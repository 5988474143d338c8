"""Positional encodings and the deterministic toy encoder.

The encoder stands in for a learned backbone: each D x D patch becomes a
9-channel descriptor (patch mean RGB, patch RGB standard deviation, mean RGB
of the 3x3 cell neighbourhood), which is mapped to ``width`` channels and then
to the global-key, local-key and value branches.  Visually identical regions
therefore receive bit-identical keys.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .errors import DimensionError, ParameterError
from .tensor_core import linear, load_lcmt, save_lcmt

RAW_CHANNELS = 9


@dataclass(frozen=True)
class EncoderConfig:
    downscale: int = 4
    width: int = 256

    def __post_init__(self):
        if self.downscale < 1:
            raise ParameterError(f"downscale must be >= 1, got {self.downscale}")
        if self.width < 8 or self.width % 8:
            raise ParameterError(f"backbone width must be a positive multiple of 8, got {self.width}")

    @property
    def key_channels(self) -> int:
        return self.width // 8

    @property
    def value_channels(self) -> int:
        return self.width // 2


@dataclass(frozen=True)
class FrameEmbedding:
    global_key: np.ndarray  # H x W x Ck
    local_key: np.ndarray   # H x W x Ck
    value: np.ndarray       # H x W x Cv

    @property
    def grid(self) -> tuple[int, int]:
        return self.value.shape[:2]


def identity_pad(out_dim: int, in_dim: int) -> np.ndarray:
    """(out, in) matrix copying the first min(out, in) inputs; zeros elsewhere."""
    return np.eye(out_dim, in_dim)


@dataclass
class ProjectionWeights:
    """Linear maps for every encoder branch; each entry is (weight[out, in], bias[out])."""

    backbone: tuple[np.ndarray, np.ndarray]
    key_global: tuple[np.ndarray, np.ndarray]
    key_local: tuple[np.ndarray, np.ndarray]
    value: tuple[np.ndarray, np.ndarray]
    fn: tuple[np.ndarray, np.ndarray] = field(default=None)

    @classmethod
    def default(cls, cfg: EncoderConfig) -> "ProjectionWeights":
        c, ck, cv = cfg.width, cfg.key_channels, cfg.value_channels
        return cls(
            backbone=(identity_pad(c, RAW_CHANNELS), np.zeros(c)),
            key_global=(identity_pad(ck, c), np.zeros(ck)),
            key_local=(identity_pad(ck, c), np.zeros(ck)),
            value=(identity_pad(cv, c), np.zeros(cv)),
            fn=(np.eye(ck), np.zeros(ck)),
        )

    def validate(self, cfg: EncoderConfig) -> None:
        c, ck, cv = cfg.width, cfg.key_channels, cfg.value_channels
        expected = {
            "backbone": (c, RAW_CHANNELS),
            "key_global": (ck, c),
            "key_local": (ck, c),
            "value": (cv, c),
            "fn": (ck, ck),
        }
        for name, (rows, cols) in expected.items():
            w, b = getattr(self, name)
            if w.shape != (rows, cols) or b.shape != (rows,):
                raise DimensionError(
                    f"projection '{name}' has weight {w.shape} / bias {b.shape}, "
                    f"expected ({rows}, {cols}) / ({rows},)"
                )

    @classmethod
    def load(cls, directory, cfg: EncoderConfig) -> "ProjectionWeights":
        """Load ``<branch>_w.lcmt`` / ``<branch>_b.lcmt`` files; missing ones keep defaults."""
        weights = cls.default(cfg)
        directory = Path(directory)
        for f in fields(cls):
            w, b = getattr(weights, f.name)
            wp, bp = directory / f"{f.name}_w.lcmt", directory / f"{f.name}_b.lcmt"
            if wp.exists():
                w = load_lcmt(wp)
            if bp.exists():
                b = load_lcmt(bp)
            setattr(weights, f.name, (w, b))
        weights.validate(cfg)
        return weights

    def save(self, directory) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        for f in fields(self):
            w, b = getattr(self, f.name)
            save_lcmt(directory / f"{f.name}_w.lcmt", w)
            save_lcmt(directory / f"{f.name}_b.lcmt", b)


def sinusoidal_pos_2d(h: int, w: int, c: int) -> np.ndarray:
    """Fixed 2-D sine/cosine encoding of shape (h, w, c).

    The first c/2 channels encode the column x as interleaved
    ``sin(w_k x), cos(w_k x)`` pairs, the last c/2 encode the row y the same
    way, with ``w_k = 10000 ** (-4k / c)``.
    """
    if c < 4 or c % 4:
        raise ParameterError(f"positional channels must be a positive multiple of 4, got {c}")
    if h < 1 or w < 1:
        raise ParameterError(f"grid extents must be positive, got {h}x{w}")
    freqs = 10000.0 ** (-4.0 * np.arange(c // 4) / c)

    def axis_code(n):
        phase = np.arange(n, dtype=np.float64)[:, None] * freqs[None, :]
        return np.stack([np.sin(phase), np.cos(phase)], axis=-1).reshape(n, c // 2)

    x_code = np.broadcast_to(axis_code(w)[None, :, :], (h, w, c // 2))
    y_code = np.broadcast_to(axis_code(h)[:, None, :], (h, w, c // 2))
    return np.concatenate([x_code, y_code], axis=-1)


def _check_frame(frame, cfg: EncoderConfig) -> np.ndarray:
    frame = np.asarray(frame, dtype=np.float64)
    if frame.ndim != 3 or frame.shape[2] != 3:
        raise DimensionError(f"frame must be H x W x 3, got {frame.shape}")
    d = cfg.downscale
    if frame.shape[0] % d or frame.shape[1] % d:
        raise ParameterError(f"frame {frame.shape[:2]} is not divisible by downscale factor {d}")
    return frame


def patch_mean(plane, d: int) -> np.ndarray:
    """Mean over non-overlapping d x d patches of a 2-D (or H x W x C) array."""
    plane = np.asarray(plane, dtype=np.float64)
    h, w = plane.shape[0] // d, plane.shape[1] // d
    return plane.reshape(h, d, w, d, *plane.shape[2:]).mean(axis=(1, 3))


def raw_descriptor(frame, cfg: EncoderConfig) -> np.ndarray:
    """H x W x 9 descriptor: patch mean RGB, patch std RGB, 3x3-neighbourhood mean RGB."""
    frame = _check_frame(frame, cfg)
    d = cfg.downscale
    h, w = frame.shape[0] // d, frame.shape[1] // d
    patches = frame.reshape(h, d, w, d, 3)
    mean = patches.mean(axis=(1, 3))
    std = patches.std(axis=(1, 3))
    padded = np.pad(mean, ((1, 1), (1, 1), (0, 0)), mode="edge")
    nbhd = np.zeros_like(mean)
    for dy in range(3):
        for dx in range(3):
            nbhd += padded[dy:dy + h, dx:dx + w]
    nbhd /= 9.0
    return np.concatenate([mean, std, nbhd], axis=-1)


def _embed(frame, indicator, weights: ProjectionWeights, cfg: EncoderConfig) -> FrameEmbedding:
    raw = raw_descriptor(frame, cfg)
    feat = linear(raw, *weights.backbone)
    value = linear(feat, *weights.value)
    value[..., -1] = indicator
    return FrameEmbedding(
        global_key=linear(feat, *weights.key_global),
        local_key=linear(feat, *weights.key_local),
        value=value,
    )


def encode_query(frame, weights: ProjectionWeights, cfg: EncoderConfig) -> FrameEmbedding:
    """Embed a query frame; the value's mask slot is 0 because the mask is unknown."""
    return _embed(frame, 0.0, weights, cfg)


def encode_memory_soft(frame, soft_mask, weights: ProjectionWeights, cfg: EncoderConfig) -> FrameEmbedding:
    """Embed a frame with a full-resolution soft foreground map in [0, 1]."""
    frame = _check_frame(frame, cfg)
    soft_mask = np.asarray(soft_mask, dtype=np.float64)
    if soft_mask.shape != frame.shape[:2]:
        raise DimensionError(f"mask {soft_mask.shape} does not match frame {frame.shape[:2]}")
    indicator = np.clip(patch_mean(soft_mask, cfg.downscale), 0.0, 1.0)
    return _embed(frame, indicator, weights, cfg)


def encode_memory(frame, mask, object_id: int, weights: ProjectionWeights, cfg: EncoderConfig) -> FrameEmbedding:
    """Embed a frame with the binary indicator of ``object_id`` in label map ``mask``."""
    mask = np.asarray(mask)
    if int(object_id) != object_id or object_id < 1:
        raise ParameterError(f"object id must be a positive integer label, got {object_id!r}")
    return encode_memory_soft(frame, (mask == object_id).astype(np.float64), weights, cfg)
