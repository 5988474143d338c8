"""Region similarity J, boundary measure F, and sequence-level evaluation."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import binary_dilation

from .errors import DimensionError, ParameterError


def _binary(mask, object_id) -> np.ndarray:
    return np.asarray(mask) == object_id


def jaccard(pred, gt, object_id: int) -> float:
    """Intersection over union of the object's masks; 1 when both are empty."""
    pred, gt = np.asarray(pred), np.asarray(gt)
    if pred.shape != gt.shape:
        raise DimensionError(f"prediction {pred.shape} and ground truth {gt.shape} differ")
    p, g = _binary(pred, object_id), _binary(gt, object_id)
    union = np.count_nonzero(p | g)
    if union == 0:
        return 1.0
    return np.count_nonzero(p & g) / union


def boundary(mask: np.ndarray) -> np.ndarray:
    """Mask pixels with at least one 4-neighbour outside the mask (image edges do not count)."""
    padded = np.pad(mask, 1, mode="edge")
    inner = (padded[:-2, 1:-1] & padded[2:, 1:-1] & padded[1:-1, :-2] & padded[1:-1, 2:])
    return mask & ~inner


def default_tolerance(shape) -> int:
    """0.8% of the image diagonal, rounded up."""
    return int(math.ceil(0.008 * math.hypot(*shape)))


def boundary_f(pred, gt, object_id: int, tolerance_px: int | None = None) -> float:
    """F-measure of boundary precision/recall, matching within a square (Chebyshev) tolerance.

    Matching uses dilation of the opposite boundary rather than a one-to-one
    assignment.
    """
    pred, gt = np.asarray(pred), np.asarray(gt)
    if pred.shape != gt.shape:
        raise DimensionError(f"prediction {pred.shape} and ground truth {gt.shape} differ")
    tol = default_tolerance(gt.shape) if tolerance_px is None else int(tolerance_px)
    if tol < 0:
        raise ParameterError(f"tolerance must be >= 0, got {tolerance_px}")
    bp = boundary(_binary(pred, object_id))
    bg = boundary(_binary(gt, object_id))
    n_p, n_g = np.count_nonzero(bp), np.count_nonzero(bg)
    if n_p == 0 and n_g == 0:
        return 1.0
    if n_p == 0 or n_g == 0:
        return 0.0
    if tol:
        se = np.ones((2 * tol + 1, 2 * tol + 1), dtype=bool)
        gd, pd = binary_dilation(bg, se), binary_dilation(bp, se)
    else:
        gd, pd = bg, bp
    precision = np.count_nonzero(bp & gd) / n_p
    recall = np.count_nonzero(bg & pd) / n_g
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


@dataclass
class EvalResult:
    objects: list[int]
    J: np.ndarray  # frames x objects
    F: np.ndarray  # frames x objects

    def _rows(self) -> slice:
        return slice(1, None) if self.J.shape[0] > 1 else slice(0, None)

    @property
    def mean_J(self) -> np.ndarray:
        return self.J[self._rows()].mean(axis=0)

    @property
    def mean_F(self) -> np.ndarray:
        return self.F[self._rows()].mean(axis=0)

    @property
    def overall(self) -> float:
        return float((self.mean_J.mean() + self.mean_F.mean()) / 2.0)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["frame", "object", "J", "F"])
        for t in range(self.J.shape[0]):
            for k, obj in enumerate(self.objects):
                w.writerow([t, obj, f"{self.J[t, k]:.6f}", f"{self.F[t, k]:.6f}"])
        for k, obj in enumerate(self.objects):
            w.writerow(["mean", obj, f"{self.mean_J[k]:.6f}", f"{self.mean_F[k]:.6f}"])
        w.writerow(["overall", "", f"{self.overall:.6f}", ""])
        return buf.getvalue()


def evaluate(preds, gts, tolerance_px: int | None = None) -> EvalResult:
    """Per-frame, per-object J and F; the given first frame is excluded from the means."""
    if len(preds) != len(gts):
        raise ParameterError(f"{len(preds)} predictions for {len(gts)} ground-truth frames")
    if not gts:
        raise ParameterError("nothing to evaluate")
    objects = sorted(int(v) for v in np.unique(gts[0]) if v != 0)
    if not objects:
        raise ParameterError("first ground-truth frame contains no object")
    for t, p in enumerate(preds):
        extra = set(int(v) for v in np.unique(p)) - set(objects) - {0}
        if extra:
            raise ParameterError(f"frame {t}: predicted labels {sorted(extra)} are not ground-truth objects")
    J = np.array([[jaccard(p, g, o) for o in objects] for p, g in zip(preds, gts)])
    F = np.array([[boundary_f(p, g, o, tolerance_px) for o in objects] for p, g in zip(preds, gts)])
    return EvalResult(objects, J, F)
