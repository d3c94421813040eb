"""Composite cross-entropy / soft-Jaccard loss and the evaluation metrics.

Label convention: 1 marks a boundary ("black") pixel, 0 the white background.
Losses are evaluated in float64 and return gradients in the prediction dtype.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import ShapeError

CLAMP = 1e-7


@dataclass(frozen=True)
class LossConfig:
    psi: float = 0.5
    smooth_eps: float = 1.0
    threshold: float = 0.5

    def __post_init__(self):
        if not 0.0 <= self.psi <= 1.0:
            raise ValueError(f"psi must lie in [0, 1], got {self.psi}")
        if not self.smooth_eps > 0:
            raise ValueError(f"smooth_eps must be positive, got {self.smooth_eps}")
        if not 0.0 < self.threshold < 1.0:
            raise ValueError(f"threshold must lie in (0, 1), got {self.threshold}")


def clamp_probabilities(p):
    return np.clip(p, CLAMP, 1 - CLAMP)


def _check_pair(pred, target, strict=True):
    pred = np.asarray(pred)
    target = np.asarray(target)
    if pred.shape != target.shape:
        raise ShapeError(f"prediction {pred.shape} and target {target.shape} differ in shape")
    if not np.all((target == 0) | (target == 1)):
        raise ValueError("target must be strictly binary (0 = background, 1 = boundary)")
    if strict and not np.all((pred > 0) & (pred < 1)):
        raise ValueError("predictions must lie strictly inside (0, 1); clamp them first")
    return pred, target


def cross_entropy_loss(pred, target):
    """Mean binary cross-entropy and its gradient w.r.t. ``pred``."""
    pred, target = _check_pair(pred, target)
    p = pred.astype(np.float64)
    y = target.astype(np.float64)
    n = p.size
    # log(1 - p) through log1p keeps precision for p near 0
    loss = -np.sum(y * np.log(p) + (1 - y) * np.log1p(-p)) / n
    grad = (p - y) / (p * (1 - p)) / n
    return float(loss), grad.astype(pred.dtype, copy=False)


def jaccard_loss(pred, target, smooth_eps=1.0):
    """Batch-global soft Jaccard loss ``1 - (I + eps) / (U + eps)``."""
    pred, target = _check_pair(pred, target)
    p = pred.astype(np.float64)
    y = target.astype(np.float64)
    inter = np.sum(p * y)
    union = np.sum(p) + np.sum(y) - inter
    den = union + smooth_eps
    loss = 1.0 - (inter + smooth_eps) / den
    grad = -(y * den - (inter + smooth_eps) * (1 - y)) / den**2
    return float(loss), grad.astype(pred.dtype, copy=False)


def composite_loss(pred, target, cfg=LossConfig()):
    """``psi * CE + (1 - psi) * Jaccard`` with the matching gradient."""
    ce, g_ce = cross_entropy_loss(pred, target)
    jac, g_jac = jaccard_loss(pred, target, cfg.smooth_eps)
    psi = cfg.psi
    return psi * ce + (1 - psi) * jac, psi * g_ce + (1 - psi) * g_jac


def binarize(pred, threshold=0.5):
    return np.asarray(pred) >= threshold


def iou_metric(pred, target, threshold=0.5):
    """IoU of the boundary class after thresholding; 1.0 when both sets are empty."""
    pred, target = _check_pair(pred, target, strict=False)
    p = binarize(pred, threshold)
    t = target.astype(bool)
    union = np.count_nonzero(p | t)
    if union == 0:
        return 1.0
    return np.count_nonzero(p & t) / union


def black_pixel_correctness(pred, target, threshold=0.5):
    """Fraction of true boundary pixels predicted as boundary (recall)."""
    pred, target = _check_pair(pred, target, strict=False)
    t = target.astype(bool)
    total = np.count_nonzero(t)
    if total == 0:
        raise ValueError("black-pixel correctness is undefined for a target with no boundary pixels")
    return np.count_nonzero(binarize(pred, threshold) & t) / total
