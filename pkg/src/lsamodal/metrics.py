"""Intersection-over-union evaluation over full and occluded regions.

The occluded-region score restricts prediction and ground truth to the
domain outside the visible mask before intersecting: an instance with no
occluded pixels carries no signal and is excluded from the mean.  When every
instance is excluded the result is the NO_OCCLUSION sentinel (None), which
report writers must render as "n/a" rather than a number.
"""

from __future__ import annotations

from typing import Optional

import numpy as np

from .errors import MetricError, ShapeError
from .sdf import as_mask

NO_OCCLUSION = None


def iou(a: np.ndarray, b: np.ndarray) -> float:
    """|a AND b| / |a OR b|; two empty masks count as a perfect 1.0."""
    a = as_mask(a)
    b = as_mask(b)
    if a.shape != b.shape:
        raise ShapeError(f"mask shapes differ: {a.shape} vs {b.shape}")
    union = int(np.count_nonzero(a | b))
    if union == 0:
        return 1.0
    return int(np.count_nonzero(a & b)) / union


def miou_full(preds, gts) -> float:
    """Unweighted mean IoU against the amodal ground truth."""
    if len(preds) != len(gts):
        raise MetricError(f"list lengths differ: {len(preds)} vs {len(gts)}")
    if not preds:
        raise MetricError("cannot average over an empty instance list")
    return float(np.mean([iou(p, g) for p, g in zip(preds, gts)]))


def occluded_iou(pred: np.ndarray, amodal: np.ndarray, visible: np.ndarray) -> Optional[float]:
    """IoU restricted to the occluded domain; None when nothing is occluded."""
    pred = as_mask(pred)
    amodal = as_mask(amodal)
    visible = as_mask(visible)
    if not pred.shape == amodal.shape == visible.shape:
        raise ShapeError(
            f"mask shapes differ: {pred.shape}, {amodal.shape}, {visible.shape}"
        )
    hidden = ~visible.astype(bool)
    occ_gt = amodal.astype(bool) & hidden
    if not occ_gt.any():
        return NO_OCCLUSION
    occ_pred = pred.astype(bool) & hidden
    union = int(np.count_nonzero(occ_pred | occ_gt))
    return int(np.count_nonzero(occ_pred & occ_gt)) / union


def miou_occ(preds, amodals, visibles) -> Optional[float]:
    """Mean occluded-region IoU; excludes fully visible instances from the mean."""
    if not len(preds) == len(amodals) == len(visibles):
        raise MetricError(
            f"list lengths differ: {len(preds)}, {len(amodals)}, {len(visibles)}"
        )
    if not preds:
        raise MetricError("cannot average over an empty instance list")
    scores = []
    for p, a, v in zip(preds, amodals, visibles):
        s = occluded_iou(p, a, v)
        if s is not None:
            scores.append(s)
    if not scores:
        return NO_OCCLUSION
    return float(np.mean(scores))
