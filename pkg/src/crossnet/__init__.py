"""Reference-based super-resolution by multi-scale feature warping."""

from .data import LightField, LightFieldDataset, SamplePair, make_lr, synthetic_lightfield
from .estimator import CrossNetSR
from .evaluation import MetricTable, evaluate
from .imaging import DomainError, warp
from .metrics import charbonnier_loss, psnr, ssim
from .model import CrossNet, CrossNetConfig, build_model, count_params, super_resolve
from .tiling import TileSpec, sliding_window_sr
from .training import TrainConfig, train

__version__ = "0.1.0"

__all__ = [
    "CrossNet",
    "CrossNetConfig",
    "CrossNetSR",
    "DomainError",
    "LightField",
    "LightFieldDataset",
    "MetricTable",
    "SamplePair",
    "TileSpec",
    "TrainConfig",
    "build_model",
    "charbonnier_loss",
    "count_params",
    "evaluate",
    "make_lr",
    "psnr",
    "sliding_window_sr",
    "ssim",
    "super_resolve",
    "synthetic_lightfield",
    "train",
    "warp",
]
