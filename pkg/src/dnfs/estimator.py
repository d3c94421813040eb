"""scikit-learn compatible segmenter wrapping the DNFS training engine."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .arch import ArchSpec, build, count_parameters, with_input_size
from .graph import OptimizerState, init_parameters
from .losses import LossConfig, black_pixel_correctness, iou_metric
from .training import evaluate, predict_proba, train_epoch


def check_images(X, multiple=1):
    """Coerce images to float32 ``(n, 1, H, W)``.

    Accepts ``(n, H, W)`` or ``(n, 1, H, W)``; H and W must be multiples of
    ``multiple``.
    """
    X = np.asarray(X)
    if X.ndim == 3:
        X = X[:, None]
    if X.ndim != 4 or X.shape[1] != 1:
        raise ValueError(f"expected images shaped (n, H, W) or (n, 1, H, W), got {X.shape}")
    if X.shape[0] == 0:
        raise ValueError("need at least one image")
    h, w = X.shape[2:]
    if h % multiple or w % multiple:
        raise ValueError(f"image size {h}x{w} must be a multiple of {multiple} in both dimensions")
    X = X.astype(np.float32)
    if not np.all(np.isfinite(X)):
        raise ValueError("images contain non-finite values")
    return X


def check_masks(y, X):
    y = np.asarray(y)
    if y.ndim == 3:
        y = y[:, None]
    if y.shape != X.shape:
        raise ValueError(f"masks {y.shape} must match images {X.shape}")
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("masks must be binary (1 = boundary, 0 = background)")
    return y.astype(np.float32)


class DNFSSegmenter(BaseEstimator):
    """Binary boundary segmenter.

    ``fit(X, y)`` trains on images ``X`` and boundary masks ``y``;
    ``predict_proba`` returns per-pixel boundary probabilities shaped like
    ``X``; ``predict`` thresholds them; ``score`` is the mean per-image IoU.
    """

    def __init__(self, family="dnfs", multiplier=4, depth=3, psi=0.5, smooth_eps=1.0,
                 threshold=0.5, learning_rate=3e-3, batch_size=8, epochs=20,
                 random_state=0, verbose=False):
        self.family = family
        self.multiplier = multiplier
        self.depth = depth
        self.psi = psi
        self.smooth_eps = smooth_eps
        self.threshold = threshold
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.epochs = epochs
        self.random_state = random_state
        self.verbose = verbose

    def _loss_config(self):
        return LossConfig(self.psi, self.smooth_eps, self.threshold)

    def fit(self, X, y, X_val=None, y_val=None):
        spec = ArchSpec(self.family, self.multiplier, self.depth, 1)
        X = check_images(X, spec.size_multiple)
        y = check_masks(y, X)
        if X.shape[2] != X.shape[3]:
            raise ValueError("training images must be square")
        cfg = self._loss_config()
        seed = 0 if self.random_state is None else int(self.random_state)
        net = init_parameters(build(spec, X.shape[2]), seed)
        opt = OptimizerState.for_network(net, lr=self.learning_rate)
        self.history_ = []
        for epoch in range(1, self.epochs + 1):
            row = {"epoch": epoch, "train_loss": train_epoch(net, opt, X, y, cfg, self.batch_size, seed, epoch)}
            if X_val is not None:
                Xv = check_images(X_val, spec.size_multiple)
                row.update({f"val_{k}": v for k, v in evaluate(net, Xv, check_masks(y_val, Xv), cfg).items()})
            if self.verbose:
                print(" ".join(f"{k}={v:.4g}" if isinstance(v, float) else f"{k}={v}" for k, v in row.items()))
            self.history_.append(row)
        self.network_ = net
        self.optimizer_ = opt
        self.n_parameters_ = count_parameters(net)
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "network_")
        X = check_images(X, 2**self.depth)
        net = with_input_size(self.network_, *X.shape[2:])
        return predict_proba(net, X)

    def predict(self, X):
        return (self.predict_proba(X) >= self.threshold).astype(np.uint8)

    def score(self, X, y):
        probs = self.predict_proba(X)
        y = check_masks(y, check_images(X, 2**self.depth))
        return float(np.mean([iou_metric(p, t, self.threshold) for p, t in zip(probs, y)]))

    def black_recall(self, X, y):
        probs = self.predict_proba(X)
        y = check_masks(y, check_images(X, 2**self.depth))
        return float(np.mean([black_pixel_correctness(p, t, self.threshold) for p, t in zip(probs, y) if t.any()]))
