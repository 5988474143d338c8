"""Branch merging, the surrogate readout, and multi-object soft aggregation."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import expit

from .errors import DimensionError, ParameterError
from .tensor_core import load_lcmt


@dataclass(frozen=True)
class ReadoutConfig:
    """Default readout: ``alpha * (2 m - 1) + gamma * (r - tau)``.

    ``m`` is the mask channel retrieved from memory and ``r`` the L1 ratio of
    the merged branch feature to the query value.  With
    ``evidence_norm="max"`` the ratio is divided by its maximum over the frame
    before thresholding, which puts the position map (whose absolute level is
    at most about 1/K) on the same [0, 1] scale as the ablated ratio of 1.
    ``weight``/``bias``, when set, replace the default with a linear readout
    over ``concat(y_grm, merged)``.
    """

    alpha: float = 4.0
    gamma: float = 10.0
    tau: float = 0.6
    epsilon: float = 1e-6
    evidence_norm: str = "max"
    weight: np.ndarray | None = None
    bias: float = 0.0

    def __post_init__(self):
        if not (np.isfinite(self.alpha) and np.isfinite(self.gamma)):
            raise ParameterError("alpha and gamma must be finite")
        if not self.epsilon > 0:
            raise ParameterError(f"epsilon must be positive, got {self.epsilon}")
        if self.evidence_norm not in ("max", "none"):
            raise ParameterError(f"evidence_norm must be 'max' or 'none', got {self.evidence_norm!r}")

    def with_linear(self, directory) -> "ReadoutConfig":
        """Return a copy using ``readout_w.lcmt`` / ``readout_b.lcmt`` from ``directory`` if present."""
        directory = Path(directory)
        wp = directory / "readout_w.lcmt"
        if not wp.exists():
            return self
        bp = directory / "readout_b.lcmt"
        bias = float(load_lcmt(bp).reshape(-1)[0]) if bp.exists() else 0.0
        return ReadoutConfig(self.alpha, self.gamma, self.tau, self.epsilon, self.evidence_norm,
                             load_lcmt(wp).reshape(-1), bias)


def merge_branches(y_pgm, y_orm, enable_pgm: bool, enable_orm: bool, query_value=None,
                   mode: str = "mean") -> np.ndarray:
    """Combine the PGM and ORM outputs; with neither enabled return the query value."""
    if enable_pgm and enable_orm:
        if y_pgm.shape != y_orm.shape:
            raise DimensionError(f"branch outputs differ in shape: {y_pgm.shape} vs {y_orm.shape}")
        if mode == "mean":
            return 0.5 * (y_pgm + y_orm)
        if mode == "sum":
            return y_pgm + y_orm
        raise ParameterError(f"unknown merge mode {mode!r}")
    if enable_pgm:
        return np.asarray(y_pgm, dtype=np.float64)
    if enable_orm:
        return np.asarray(y_orm, dtype=np.float64)
    if query_value is None:
        raise ParameterError("query_value is required when both branches are disabled")
    return np.asarray(query_value, dtype=np.float64)


def evidence_ratio(merged, query_value, epsilon: float) -> np.ndarray:
    num = np.abs(merged).sum(axis=-1)
    den = np.abs(query_value).sum(axis=-1) + epsilon
    return num / den


def readout(y_grm, merged, query_value, cfg: ReadoutConfig = ReadoutConfig()) -> np.ndarray:
    """Per-cell object logit from the retrieved memory value and the merged feature."""
    y_grm = np.asarray(y_grm, dtype=np.float64)
    merged = np.asarray(merged, dtype=np.float64)
    query_value = np.asarray(query_value, dtype=np.float64)
    if not (y_grm.shape == merged.shape == query_value.shape):
        raise DimensionError(
            f"readout inputs disagree: {y_grm.shape}, {merged.shape}, {query_value.shape}"
        )
    if cfg.weight is not None:
        feat = np.concatenate([y_grm, merged], axis=-1)
        if cfg.weight.shape != (feat.shape[-1],):
            raise DimensionError(f"readout weight {cfg.weight.shape} does not match feature width {feat.shape[-1]}")
        return feat @ cfg.weight + cfg.bias
    m_hat = y_grm[..., -1]
    r = evidence_ratio(merged, query_value, cfg.epsilon)
    if cfg.evidence_norm == "max":
        peak = r.max()
        if peak > 0:
            r = r / peak
    return cfg.alpha * (2.0 * m_hat - 1.0) + cfg.gamma * (r - cfg.tau)


def soft_aggregate(logits_per_object, epsilon: float = 1e-6, mode: str = "odds") -> np.ndarray:
    """Combine per-object logits into normalised (M+1) x H x W probabilities; slot 0 is background.

    ``odds``: background is the product of complements, each slot's clamped
    odds are normalised.  ``softmax``: softmax over ``[0, logit_1, ...]``.
    """
    if len(logits_per_object) == 0:
        raise ParameterError("soft_aggregate needs at least one object")
    logits = np.stack([np.asarray(l, dtype=np.float64) for l in logits_per_object])
    if mode == "softmax":
        z = np.concatenate([np.zeros((1,) + logits.shape[1:]), logits])
        z -= z.max(axis=0, keepdims=True)
        e = np.exp(z)
        return e / e.sum(axis=0, keepdims=True)
    if mode != "odds":
        raise ParameterError(f"unknown aggregation mode {mode!r}")
    p = expit(logits)
    bg = np.prod(1.0 - p, axis=0, keepdims=True)
    probs = np.clip(np.concatenate([bg, p]), epsilon, 1.0 - epsilon)
    odds = probs / (1.0 - probs)
    return odds / odds.sum(axis=0, keepdims=True)


def argmax_mask(probs) -> np.ndarray:
    """Label map of the most probable slot; ties go to the lowest label."""
    probs = np.asarray(probs)
    return np.argmax(probs, axis=0).astype(np.int64)


def upsample_nearest(grid_maps, factor: int) -> np.ndarray:
    """Repeat each cell of (..., H, W) maps into a factor x factor block."""
    grid_maps = np.asarray(grid_maps, dtype=np.float64)
    return np.repeat(np.repeat(grid_maps, factor, axis=-2), factor, axis=-1)


def upsample(grid_maps, factor: int, mode: str = "nearest") -> np.ndarray:
    if mode == "nearest":
        return upsample_nearest(grid_maps, factor)
    if mode == "bilinear":
        return upsample_bilinear(grid_maps, factor)
    raise ParameterError(f"unknown upsampling mode {mode!r}")


def upsample_bilinear(grid_maps, factor: int) -> np.ndarray:
    """Bilinearly resize (..., H, W) maps by an integer factor (cell-centre aligned, edge-clamped).

    Each output is a convex combination of inputs, so per-pixel normalisation
    across a leading slot axis is preserved.
    """
    grid_maps = np.asarray(grid_maps, dtype=np.float64)
    h, w = grid_maps.shape[-2:]

    def taps(n):
        u = (np.arange(n * factor) + 0.5) / factor - 0.5
        u = np.clip(u, 0.0, n - 1)
        lo = np.floor(u).astype(np.int64)
        hi = np.minimum(lo + 1, n - 1)
        return lo, hi, u - lo

    y0, y1, fy = taps(h)
    x0, x1, fx = taps(w)
    rows = grid_maps[..., y0, :] * (1 - fy)[:, None] + grid_maps[..., y1, :] * fy[:, None]
    return rows[..., x0] * (1 - fx) + rows[..., x1] * fx

