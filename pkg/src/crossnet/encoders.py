"""Four-scale image encoders and the pluggable SISR pre-upsampler."""

from __future__ import annotations

from pathlib import Path
from typing import Protocol

import torch
import torch.nn as nn

from .imaging import DomainError, resize_bicubic

__all__ = [
    "ImageEncoder",
    "SisrUpsampler",
    "BicubicUpsampler",
    "PrecomputedUpsampler",
    "sisr_upsample",
]

FEATURES = 64
NUM_SCALES = 4


class ImageEncoder(nn.Module):
    """5x5 conv + ReLU at stride 1, then three stride-2 5x5 conv + ReLU stages.

    Borders are padded by edge replication, so a flat image yields flat
    features at every level.
    """

    def __init__(self, in_channels: int = 3, features: int = FEATURES):
        super().__init__()
        self.in_channels = in_channels
        self.convs = nn.ModuleList(
            nn.Conv2d(in_channels if i == 0 else features, features, 5, stride=1 if i == 0 else 2, padding=2,
                      padding_mode="replicate")
            for i in range(NUM_SCALES)
        )

    def forward(self, img: torch.Tensor) -> list[torch.Tensor]:
        if img.shape[1] != self.in_channels:
            raise DomainError(f"encoder expects {self.in_channels} channels, got {img.shape[1]}")
        feats = []
        x = img
        for conv in self.convs:
            x = torch.relu(conv(x))
            feats.append(x)
        return feats


class SisrUpsampler(Protocol):
    def __call__(self, lr: torch.Tensor, factor: int, *, sample_id: str | None = None) -> torch.Tensor: ...


class BicubicUpsampler:
    """Default single-image upsampler."""

    def __call__(self, lr, factor, *, sample_id=None):
        return resize_bicubic(lr, factor)

    def __repr__(self):
        return "BicubicUpsampler()"


class PrecomputedUpsampler:
    """Serve upsampled images produced offline by an external SISR model.

    Files live at ``<directory>/<sample_id>.png`` and already have the
    reference resolution.
    """

    def __init__(self, directory):
        self.directory = Path(directory)

    def __call__(self, lr, factor, *, sample_id=None):
        from .data import read_image

        if sample_id is None:
            raise DomainError("PrecomputedUpsampler needs a sample_id")
        img = read_image(self.directory / f"{sample_id}.png")
        return img.to(lr.dtype).unsqueeze(0) if lr.dim() == 4 else img.to(lr.dtype)

    def __repr__(self):
        return f"PrecomputedUpsampler({str(self.directory)!r})"


def sisr_upsample(lr: torch.Tensor, factor: int, impl: SisrUpsampler | None = None, *, sample_id=None):
    """Upsample ``lr`` by ``factor`` and check the result has exactly that size."""
    if factor not in (4, 8):
        raise DomainError(f"scale factor must be 4 or 8, got {factor}")
    impl = impl or BicubicUpsampler()
    out = impl(lr, factor, sample_id=sample_id)
    want = (lr.shape[-2] * factor, lr.shape[-1] * factor)
    if tuple(out.shape[-2:]) != want:
        raise DomainError(f"upsampler returned {tuple(out.shape[-2:])}, expected {want}")
    return out
