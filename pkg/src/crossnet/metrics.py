"""Charbonnier training loss and PSNR / SSIM image metrics."""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
import torch.nn.functional as F

from .imaging import DomainError

__all__ = ["LossConfig", "charbonnier_loss", "psnr", "ssim", "PSNR_CAP"]

PSNR_CAP = 100.0


@dataclass(frozen=True)
class LossConfig:
    epsilon: float = 1e-3
    reduction: str = "sum_pixels_mean_batch"

    def __post_init__(self):
        if self.epsilon <= 0:
            raise DomainError("epsilon must be positive")
        if self.reduction not in ("sum_pixels_mean_batch", "mean_all"):
            raise DomainError(f"unknown reduction {self.reduction!r}")


def charbonnier_loss(pred: torch.Tensor, target: torch.Tensor, cfg: LossConfig = LossConfig()) -> torch.Tensor:
    """sqrt(diff^2 + eps^2) summed over pixels and channels, averaged over the batch.

    Unbatched ``(C, H, W)`` inputs count as a batch of one.
    """
    if pred.shape != target.shape:
        raise DomainError(f"shape mismatch: {tuple(pred.shape)} vs {tuple(target.shape)}")
    rho = torch.sqrt((target - pred) ** 2 + cfg.epsilon**2)
    if cfg.reduction == "mean_all":
        return rho.mean()
    if rho.dim() < 4:
        return rho.sum()
    return rho.reshape(rho.shape[0], -1).sum(dim=1).mean()


def _to_tensor(x) -> torch.Tensor:
    return x if isinstance(x, torch.Tensor) else torch.as_tensor(x)


def psnr(pred, target, peak: float = 1.0, cap: float | None = PSNR_CAP) -> float:
    """Peak signal-to-noise ratio in dB over all channels.

    Identical inputs give ``cap`` (``inf`` when ``cap`` is None).
    """
    pred, target = _to_tensor(pred).double(), _to_tensor(target).double()
    if pred.shape != target.shape:
        raise DomainError(f"shape mismatch: {tuple(pred.shape)} vs {tuple(target.shape)}")
    mse = torch.mean((pred - target) ** 2).item()
    if mse == 0:
        return math.inf if cap is None else cap
    value = 10.0 * math.log10(peak**2 / mse)
    return value if cap is None else min(value, cap)


def _gaussian_window(size: int = 11, sigma: float = 1.5, dtype=torch.float64) -> torch.Tensor:
    r = torch.arange(size, dtype=dtype) - (size - 1) / 2
    g = torch.exp(-(r**2) / (2 * sigma**2))
    g = g / g.sum()
    return torch.outer(g, g)


def ssim_maps(pred, target, peak: float = 1.0):
    """Local luminance and contrast-structure SSIM maps, shape ``(C, H-10, W-10)``."""
    x, y = _to_tensor(pred).double(), _to_tensor(target).double()
    if x.shape != y.shape:
        raise DomainError(f"shape mismatch: {tuple(x.shape)} vs {tuple(y.shape)}")
    if x.dim() == 2:
        x, y = x[None], y[None]
    if min(x.shape[-2:]) < 11:
        raise DomainError("ssim needs both image sides >= 11")
    x4, y4 = x.reshape(-1, 1, *x.shape[-2:]), y.reshape(-1, 1, *y.shape[-2:])
    win = _gaussian_window()[None, None]
    c1, c2 = (0.01 * peak) ** 2, (0.03 * peak) ** 2

    def blur(t):
        return F.conv2d(t, win)

    mu_x, mu_y = blur(x4), blur(y4)
    sxx = blur(x4 * x4) - mu_x**2
    syy = blur(y4 * y4) - mu_y**2
    sxy = blur(x4 * y4) - mu_x * mu_y
    lum = (2 * mu_x * mu_y + c1) / (mu_x**2 + mu_y**2 + c1)
    cs = (2 * sxy + c2) / (sxx + syy + c2)
    return lum[:, 0], cs[:, 0]


def ssim(pred, target, peak: float = 1.0) -> float:
    """Mean SSIM (11x11 Gaussian window, sigma 1.5), averaged over channels."""
    lum, cs = ssim_maps(pred, target, peak)
    return float((lum * cs).mean())
