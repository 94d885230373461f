"""scikit-learn style wrapper around the network and its training loop.

``X`` is a sequence of ``(lr, ref)`` image pairs and ``y`` the matching HR
images. Images may be ``(3, H, W)`` tensors/arrays or ``(H, W, 3)`` arrays;
predictions come back in the layout of the first input.
"""

from __future__ import annotations

import numpy as np
import torch
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .data import SamplePair
from .imaging import DomainError
from .metrics import psnr
from .model import CrossNet, CrossNetConfig, build_model
from .tiling import TileSpec, sliding_window_sr
from .training import FixedPairSampler, TrainConfig, restore_model, train

__all__ = ["CrossNetSR", "check_image", "check_pairs"]


def check_image(img, name: str = "image") -> tuple[torch.Tensor, bool]:
    """Validate one RGB image; return a float32 ``(3, H, W)`` tensor and whether it was channels-last."""
    t = torch.as_tensor(np.asarray(img) if not isinstance(img, torch.Tensor) else img)
    if t.dim() != 3:
        raise DomainError(f"{name} must be 3-D, got shape {tuple(t.shape)}")
    channels_last = t.shape[0] != 3 and t.shape[-1] == 3
    if channels_last:
        t = t.permute(2, 0, 1)
    if t.shape[0] != 3:
        raise DomainError(f"{name} must have 3 channels, got shape {tuple(t.shape)}")
    t = t.to(torch.float32)
    if not torch.isfinite(t).all():
        raise DomainError(f"{name} contains non-finite values")
    return t.contiguous(), channels_last


def check_pairs(X, y=None, scale: int = 8):
    """Validate ``(lr, ref)`` pairs (and HR targets) against the scale factor."""
    X = list(X)
    if not X:
        raise DomainError("X is empty")
    if y is not None and len(y) != len(X):
        raise DomainError(f"X has {len(X)} pairs but y has {len(y)} targets")
    out = []
    layout = None
    for i, item in enumerate(X):
        if len(item) != 2:
            raise DomainError(f"X[{i}] must be an (lr, ref) pair")
        lr, cl = check_image(item[0], f"X[{i}].lr")
        ref, _ = check_image(item[1], f"X[{i}].ref")
        layout = cl if layout is None else layout
        want = (lr.shape[-2] * scale, lr.shape[-1] * scale)
        if tuple(ref.shape[-2:]) != want:
            raise DomainError(f"X[{i}]: reference {tuple(ref.shape[-2:])} is not {scale}x LR {tuple(lr.shape[-2:])}")
        hr = None
        if y is not None:
            hr, _ = check_image(y[i], f"y[{i}]")
            if hr.shape != ref.shape:
                raise DomainError(f"y[{i}] shape {tuple(hr.shape)} differs from reference {tuple(ref.shape)}")
        out.append((lr, ref, hr))
    return out, layout


class CrossNetSR(BaseEstimator):
    """Reference-based super-resolver with a fit/predict interface.

    Training crops are the full images, so every pair in one ``fit`` call
    must share a size that is a multiple of 32.
    """

    def __init__(
        self,
        scale_factor: int = 8,
        variant: str = "crossnet",
        n_iterations: int = 2000,
        learning_rate: float = 1e-4,
        lr_schedule=(),
        batch_size: int = 1,
        pretrain_flow_iterations: int = 0,
        tile_window: int = 512,
        tile_stride: int = 256,
        tile_context: int = 64,
        random_state: int = 0,
    ):
        self.scale_factor = scale_factor
        self.variant = variant
        self.n_iterations = n_iterations
        self.learning_rate = learning_rate
        self.lr_schedule = lr_schedule
        self.batch_size = batch_size
        self.pretrain_flow_iterations = pretrain_flow_iterations
        self.tile_window = tile_window
        self.tile_stride = tile_stride
        self.tile_context = tile_context
        self.random_state = random_state

    def _train_config(self, crop) -> TrainConfig:
        return TrainConfig(
            total_iterations=self.n_iterations,
            lr_initial=self.learning_rate,
            lr_schedule=tuple(self.lr_schedule),
            batch_size=self.batch_size,
            crop_size=crop,
            scale=self.scale_factor,
            variant=self.variant,
            pretrain_flow_iterations=self.pretrain_flow_iterations,
            seed=self.random_state,
            checkpoint_every=0,
            log_every=max(1, min(100, self.n_iterations)),
        )

    def fit(self, X, y, warm_start_model: CrossNet | None = None):
        data, _ = check_pairs(X, y, self.scale_factor)
        sizes = {tuple(hr.shape[-2:]) for _, _, hr in data}
        if len(sizes) != 1:
            raise DomainError(f"all training images must share one size, got {sorted(sizes)}")
        crop = next(iter(sizes))
        pairs = [SamplePair(lr, ref, hr, (0, 0), (0, 0), self.scale_factor) for lr, ref, hr in data]
        cfg = self._train_config(crop)
        model = warm_start_model or build_model(
            CrossNetConfig(scale_factor=self.scale_factor, variant=self.variant), self.random_state
        )
        result = train(cfg, FixedPairSampler(pairs), model)
        self.model_ = result.model
        self.training_log_ = result.log
        self.n_iter_ = result.iteration
        return self

    @classmethod
    def from_checkpoint(cls, path, **kwargs) -> "CrossNetSR":
        model, meta = restore_model(path)
        est = cls(scale_factor=model.cfg.scale_factor, variant=model.cfg.variant, **kwargs)
        est.model_ = model.eval()
        est.n_iter_ = meta.get("iteration", 0)
        est.training_log_ = []
        return est

    def predict(self, X):
        check_is_fitted(self, "model_")
        data, channels_last = check_pairs(X, None, self.scale_factor)
        tiles = TileSpec(self.tile_window, self.tile_stride, context=self.tile_context)
        self.model_.eval()
        preds = []
        for lr, ref, _ in data:
            out = sliding_window_sr(self.model_, lr, ref, tiles).numpy()
            preds.append(out.transpose(1, 2, 0) if channels_last else out)
        shapes = {p.shape for p in preds}
        return np.stack(preds) if len(shapes) == 1 else preds

    def score(self, X, y) -> float:
        """Mean PSNR (dB) of the clamped predictions against ``y``."""
        preds = self.predict(X)
        scores = []
        for pred, target in zip(preds, y):
            t, _ = check_image(target)
            p, _ = check_image(pred)
            scores.append(psnr(p.clamp(0, 1), t))
        return float(np.mean(scores))
