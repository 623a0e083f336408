"""Segmentation and counting evaluation metrics.

Pure functions over masks and series: Dice overlap (hard and soft/loss
form), instance detection matching with precision/recall/F1, percent
counting error, Pearson correlation, and the independent two-sample t-test
(pooled by default, Welch behind a flag).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import betainc

from .errors import (
    DegenerateSeries,
    DimensionMismatch,
    NoDetectionsAndNoTruth,
    ZeroGroundTruth,
)
from .images import BinaryMask, FloatImage, LabelMask

DEFAULT_IOU_THRESHOLD = 0.5


@dataclass(frozen=True)
class DetectionMatch:
    """Instance-level matching outcome between predicted and true cells."""

    tp: int
    fp: int
    fn: int
    pairs: tuple[tuple[int, int, float], ...]  # (pred_label, gt_label, iou)


@dataclass(frozen=True)
class StatResult:
    statistic: float
    p_value: float
    dof: float


def _same_dims(a, b):
    if (a.height, a.width) != (b.height, b.width):
        raise DimensionMismatch(
            f"mask dims differ: {a.width}x{a.height} vs {b.width}x{b.height}"
        )


def dice(pred: BinaryMask, gt: BinaryMask) -> float:
    """2|A∩B| / (|A|+|B|); defined as 1.0 when both masks are empty."""
    _same_dims(pred, gt)
    a = pred.bits
    b = gt.bits
    sa = int(a.sum())
    sb = int(b.sum())
    if sa + sb == 0:
        return 1.0
    return 2.0 * int((a & b).sum()) / (sa + sb)


def dice_loss(pred: FloatImage, gt: BinaryMask, eps: float = 1e-7) -> float:
    """Soft Dice loss, 1 - (2·Σpg + eps) / (Σp + Σg + eps)."""
    _same_dims(pred, gt)
    p = pred.data
    if p.ndim != 2:
        raise DimensionMismatch("dice_loss expects a single-channel probability image")
    g = gt.bits.astype(np.float64)
    inter = float((p * g).sum())
    return 1.0 - (2.0 * inter + eps) / (float(p.sum()) + float(g.sum()) + eps)


def _label_areas(mask: LabelMask) -> np.ndarray:
    return np.bincount(mask.labels.reshape(-1), minlength=mask.n_labels + 1)


def match_detections(
    pred: LabelMask, gt: LabelMask, iou_threshold: float = DEFAULT_IOU_THRESHOLD
) -> DetectionMatch:
    """Greedy one-to-one matching of predicted to true instances by IoU.

    Candidate pairs with IoU >= threshold are accepted in descending IoU
    order (ties broken by label ids for determinism); each instance matches
    at most once.
    """
    _same_dims(pred, gt)
    p = pred.labels.astype(np.int64)
    g = gt.labels.astype(np.int64)
    both = (p > 0) & (g > 0)
    keys = p[both] * (gt.n_labels + 1) + g[both]
    pair_keys, inter = np.unique(keys, return_counts=True)
    pl = pair_keys // (gt.n_labels + 1)
    gl = pair_keys % (gt.n_labels + 1)
    area_p = _label_areas(pred)
    area_g = _label_areas(gt)
    iou = inter / (area_p[pl] + area_g[gl] - inter)

    candidates = [
        (float(s), int(a), int(b))
        for s, a, b in zip(iou, pl, gl)
        if s >= iou_threshold
    ]
    candidates.sort(key=lambda c: (-c[0], c[1], c[2]))
    used_p: set[int] = set()
    used_g: set[int] = set()
    pairs = []
    for score, a, b in candidates:
        if a in used_p or b in used_g:
            continue
        used_p.add(a)
        used_g.add(b)
        pairs.append((a, b, score))
    tp = len(pairs)
    return DetectionMatch(
        tp=tp, fp=pred.n_labels - tp, fn=gt.n_labels - tp, pairs=tuple(pairs)
    )


def precision_recall_f1(m: DetectionMatch) -> tuple[float, float, float]:
    if m.tp + m.fp + m.fn == 0:
        raise NoDetectionsAndNoTruth("no detections and no ground truth to score")
    p = m.tp / (m.tp + m.fp) if m.tp + m.fp else 0.0
    r = m.tp / (m.tp + m.fn) if m.tp + m.fn else 0.0
    f1 = 2 * p * r / (p + r) if p + r else 0.0
    return p, r, f1


def counting_error(pred_total: float, gt_total: float) -> float:
    """Percent counting error, 100·|pred - gt| / gt."""
    if gt_total < 1:
        raise ZeroGroundTruth("ground-truth total must be at least 1")
    return 100.0 * abs(pred_total - gt_total) / gt_total


def pearson(xs: Sequence[float], ys: Sequence[float]) -> tuple[float, float]:
    """Sample Pearson correlation and its square."""
    x = np.asarray(xs, np.float64)
    y = np.asarray(ys, np.float64)
    if x.size != y.size or x.size < 2:
        raise DegenerateSeries("pearson needs two equal-length series of size >= 2")
    xc = x - x.mean()
    yc = y - y.mean()
    denom = math.sqrt(float((xc * xc).sum()) * float((yc * yc).sum()))
    if denom == 0.0:
        raise DegenerateSeries("pearson is undefined for a zero-variance series")
    r = float((xc * yc).sum()) / denom
    return r, r * r


def t_sf_two_sided(t: float, dof: float) -> float:
    """Two-sided tail probability of Student's t via the regularized
    incomplete beta function."""
    if t == 0.0:
        return 1.0
    return float(betainc(dof / 2.0, 0.5, dof / (dof + t * t)))


def ttest_ind(
    a: Sequence[float], b: Sequence[float], welch: bool = False
) -> StatResult:
    """Independent two-sample t-test (pooled variance; Welch with flag)."""
    x = np.asarray(a, np.float64)
    y = np.asarray(b, np.float64)
    if x.size < 2 or y.size < 2:
        raise DegenerateSeries("each sample needs at least 2 observations")
    nx, ny = x.size, y.size
    vx = float(x.var(ddof=1))
    vy = float(y.var(ddof=1))
    diff = float(x.mean() - y.mean())
    if vx == 0.0 and vy == 0.0:
        if diff == 0.0:
            dof = nx + ny - 2 if not welch else float(nx + ny - 2)
            return StatResult(statistic=0.0, p_value=1.0, dof=float(dof))
        raise DegenerateSeries("zero variance in both samples with unequal means")
    if welch:
        sx = vx / nx
        sy = vy / ny
        se = math.sqrt(sx + sy)
        dof = (sx + sy) ** 2 / (sx * sx / (nx - 1) + sy * sy / (ny - 1))
    else:
        dof = nx + ny - 2
        pooled = ((nx - 1) * vx + (ny - 1) * vy) / dof
        se = math.sqrt(pooled * (1.0 / nx + 1.0 / ny))
    t = diff / se
    return StatResult(statistic=t, p_value=t_sf_two_sided(t, dof), dof=float(dof))
