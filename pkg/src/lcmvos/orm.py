"""Object relation: cross non-local relation with the first frame's foreground values,
residual enhancement and squeeze-excite channel gating."""

from __future__ import annotations

from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np
from scipy.special import expit

from .errors import DimensionError, ObjectAbsentError, ParameterError
from .tensor_core import gap, linear, load_lcmt, save_lcmt, scale_channels


@dataclass(frozen=True)
class ForegroundSet:
    vectors: np.ndarray  # N x Cv
    source: np.ndarray   # N x 2 grid coordinates (y, x) in the first frame

    def __len__(self):
        return self.vectors.shape[0]


@dataclass
class OrmWeights:
    """Value transforms ``g_f``, ``g_q`` and the squeeze-excite pair ``fc1``, ``fc2``.

    Weights are (out, in) matrices, biases 1-D.
    """

    gf_w: np.ndarray
    gf_b: np.ndarray
    gq_w: np.ndarray
    gq_b: np.ndarray
    fc1_w: np.ndarray
    fc1_b: np.ndarray
    fc2_w: np.ndarray
    fc2_b: np.ndarray

    @classmethod
    def default(cls, cv: int, reduction: int = 4) -> "OrmWeights":
        if reduction < 1 or cv % reduction:
            raise ParameterError(f"reduction {reduction} must divide value width {cv}")
        hidden = cv // reduction
        return cls(
            gf_w=np.eye(cv), gf_b=np.zeros(cv),
            gq_w=np.eye(cv), gq_b=np.zeros(cv),
            fc1_w=np.zeros((hidden, cv)), fc1_b=np.zeros(hidden),
            fc2_w=np.zeros((cv, hidden)), fc2_b=np.zeros(cv),
        )

    @property
    def value_channels(self) -> int:
        return self.gf_w.shape[0]

    def validate(self, cv: int) -> None:
        hidden = self.fc1_w.shape[0]
        expected = {
            "gf_w": (cv, cv), "gf_b": (cv,), "gq_w": (cv, cv), "gq_b": (cv,),
            "fc1_w": (hidden, cv), "fc1_b": (hidden,),
            "fc2_w": (cv, hidden), "fc2_b": (cv,),
        }
        for name, shape in expected.items():
            if getattr(self, name).shape != shape:
                raise DimensionError(f"ORM weight '{name}' has shape {getattr(self, name).shape}, expected {shape}")

    @classmethod
    def load(cls, directory, cv: int, reduction: int = 4) -> "OrmWeights":
        """Read ``orm_<name>.lcmt`` files from ``directory``; absent files keep defaults."""
        w = cls.default(cv, reduction)
        directory = Path(directory)
        for f in fields(cls):
            path = directory / f"orm_{f.name}.lcmt"
            if path.exists():
                setattr(w, f.name, load_lcmt(path))
        w.validate(cv)
        return w

    def save(self, directory) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        for f in fields(self):
            save_lcmt(directory / f"orm_{f.name}.lcmt", getattr(self, f.name))


def build_foreground_set(first_value, first_mask_ds, threshold: float = 0.5) -> ForegroundSet:
    """Collect first-frame value vectors at cells whose downscaled mask is strictly above ``threshold``."""
    first_value = np.asarray(first_value, dtype=np.float64)
    first_mask_ds = np.asarray(first_mask_ds, dtype=np.float64)
    if first_mask_ds.shape != first_value.shape[:2]:
        raise DimensionError(f"mask {first_mask_ds.shape} does not match value {first_value.shape}")
    if not 0.0 < threshold < 1.0:
        raise ParameterError(f"foreground threshold must lie in (0, 1), got {threshold}")
    sel = first_mask_ds > threshold
    if not sel.any():
        raise ObjectAbsentError("no first-frame cell exceeds the foreground threshold")
    ys, xs = np.nonzero(sel)
    return ForegroundSet(first_value[ys, xs].copy(), np.stack([ys, xs], axis=1))


def cross_relation(fg: ForegroundSet, query_value, w: OrmWeights, normalize: str = "hw"):
    """Non-local relation features in both directions.

    ``F_q[i] = (1/d) sum_j <f_i, v_j> g_q(v_j)`` and
    ``v_fq[j] = (1/d) sum_i <v_j, f_i> g_f(f_i)``.  ``d`` is H*W for both
    sums by default; ``normalize="n"`` divides by the set size N instead.
    """
    query_value = np.asarray(query_value, dtype=np.float64)
    F = fg.vectors
    if query_value.ndim != 3 or query_value.shape[-1] != F.shape[1]:
        raise DimensionError(f"query value {query_value.shape} does not match foreground width {F.shape}")
    h, w_, cv = query_value.shape
    V = query_value.reshape(-1, cv)
    if normalize == "hw":
        d = float(h * w_)
    elif normalize == "n":
        d = float(F.shape[0])
    else:
        raise ParameterError(f"unknown normalisation {normalize!r}")
    affinity = F @ V.T  # N x HW
    F_q = affinity @ linear(V, w.gq_w, w.gq_b) / d
    v_fq = affinity.T @ linear(F, w.gf_w, w.gf_b) / d
    return F_q, v_fq.reshape(h, w_, cv)


def residual_enhance(fg: ForegroundSet, query_value, F_q, v_fq):
    query_value = np.asarray(query_value, dtype=np.float64)
    if F_q.shape != fg.vectors.shape or v_fq.shape != query_value.shape:
        raise DimensionError(
            f"relation features {F_q.shape}/{v_fq.shape} do not match inputs "
            f"{fg.vectors.shape}/{query_value.shape}"
        )
    return fg.vectors + F_q, query_value + v_fq


def channel_weights(F_enh, w: OrmWeights) -> np.ndarray:
    """Squeeze-excite gate ``sigmoid(fc2(relu(fc1(GAP(F_enh)))))`` in (0, 1)^Cv."""
    hidden = np.maximum(linear(gap(F_enh), w.fc1_w, w.fc1_b), 0.0)
    return expit(linear(hidden, w.fc2_w, w.fc2_b))


def channel_gate(F_enh, v_enh, w: OrmWeights) -> np.ndarray:
    v_enh = np.asarray(v_enh, dtype=np.float64)
    if F_enh.shape[-1] != v_enh.shape[-1]:
        raise DimensionError(f"foreground {F_enh.shape} and query {v_enh.shape} widths differ")
    return scale_channels(v_enh, channel_weights(F_enh, w))


def object_relation(fg: ForegroundSet, query_value, w: OrmWeights, normalize: str = "hw") -> np.ndarray:
    """Full branch: relation, residual enhancement, channel gating."""
    F_q, v_fq = cross_relation(fg, query_value, w, normalize)
    F_enh, v_enh = residual_enhance(fg, query_value, F_q, v_fq)
    return channel_gate(F_enh, v_enh, w)


def relation_flops(n: int, h: int, w: int, cv: int) -> int:
    hw = h * w
    return 2 * n * hw * cv + 2 * (n + hw) * cv * cv + 2 * n * hw * cv * 2
