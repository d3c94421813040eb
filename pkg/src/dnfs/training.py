"""Mini-batch training and evaluation shared by the estimator and the CLI."""
from __future__ import annotations

import numpy as np

from .graph import backward, forward, optimizer_step
from .losses import (
    black_pixel_correctness,
    clamp_probabilities,
    composite_loss,
    iou_metric,
)


class TrainingError(RuntimeError):
    pass


def center(images):
    """Map [0, 1] amplitudes to [-1, 1]; every network entry point applies this."""
    return images * 2 - 1


def epoch_order(n, seed, epoch):
    """Sample order for ``epoch``; depends only on (seed, epoch) so resumes are exact."""
    return np.random.default_rng([int(seed), int(epoch)]).permutation(n)


def train_step(net, opt, images, masks, cfg):
    pred, cache = forward(net, images, "train")
    loss, grad = composite_loss(clamp_probabilities(pred), masks, cfg)
    if not np.isfinite(loss):
        return loss
    backward(net, cache, grad)
    optimizer_step(net, opt)
    return loss


def train_epoch(net, opt, images, masks, cfg, batch_size, seed, epoch):
    """One pass over the data; returns the mean of the batch losses."""
    order = epoch_order(len(images), seed, epoch)
    losses = []
    for step, start in enumerate(range(0, len(order), batch_size)):
        idx = order[start : start + batch_size]
        loss = train_step(net, opt, center(images[idx]), masks[idx], cfg)
        if not np.isfinite(loss):
            raise TrainingError(f"non-finite loss at epoch {epoch}, step {step}")
        losses.append(loss)
    return float(np.mean(losses))


def predict_proba(net, images, batch_size=32):
    """Boundary probabilities for [0, 1] images."""
    out = [forward(net, center(images[i : i + batch_size]), "eval")[0] for i in range(0, len(images), batch_size)]
    return np.concatenate(out)


def evaluate(net, images, masks, cfg, batch_size=8):
    """Loss plus per-sample-mean IoU and black-pixel recall.

    The loss is the sample-weighted mean of batch losses over consecutive
    batches. Samples without boundary pixels are skipped in the recall mean.
    """
    probs = predict_proba(net, images)
    losses, weights = [], []
    for start in range(0, len(images), batch_size):
        sl = slice(start, start + batch_size)
        loss, _ = composite_loss(clamp_probabilities(probs[sl]), masks[sl], cfg)
        losses.append(loss)
        weights.append(len(probs[sl]))
    ious = [iou_metric(p, m, cfg.threshold) for p, m in zip(probs, masks)]
    recalls = [black_pixel_correctness(p, m, cfg.threshold) for p, m in zip(probs, masks) if m.any()]
    return {
        "loss": float(np.average(losses, weights=weights)),
        "iou": float(np.mean(ious)),
        "black_recall": float(np.mean(recalls)) if recalls else float("nan"),
    }
