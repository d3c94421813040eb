"""Seismic facies boundary segmentation with a from-scratch encoder-decoder network."""
from .arch import ArchSpec, build, build_dnfs, build_unet_like, count_parameters
from .estimator import DNFSSegmenter
from .graph import Network, OptimizerState, backward, forward, init_parameters, optimizer_step
from .losses import (
    LossConfig,
    black_pixel_correctness,
    composite_loss,
    cross_entropy_loss,
    iou_metric,
    jaccard_loss,
)

__all__ = [
    "ArchSpec",
    "DNFSSegmenter",
    "LossConfig",
    "Network",
    "OptimizerState",
    "backward",
    "black_pixel_correctness",
    "build",
    "build_dnfs",
    "build_unet_like",
    "composite_loss",
    "count_parameters",
    "cross_entropy_loss",
    "forward",
    "init_parameters",
    "iou_metric",
    "jaccard_loss",
    "optimizer_step",
]

__version__ = "0.1.0"
