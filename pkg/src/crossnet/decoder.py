"""Multi-scale reference feature warping and the U-Net style fusion decoder."""

from __future__ import annotations

import torch
import torch.nn as nn

from .imaging import DomainError, warp

__all__ = ["warp_pyramid", "FusionDecoder"]


def warp_pyramid(ref_feats, flows):
    """Backward-warp each reference feature level by the flow of the same scale."""
    if len(flows) < len(ref_feats):
        raise DomainError(f"{len(ref_feats)} feature levels but only {len(flows)} flows")
    out = []
    for level, (feat, flow) in enumerate(zip(ref_feats, flows)):
        if feat.shape[-2:] != flow.shape[-2:]:
            raise DomainError(
                f"level {level}: features {tuple(feat.shape[-2:])} vs flow {tuple(flow.shape[-2:])}"
            )
        out.append(warp(feat, flow))
    return out


class FusionDecoder(nn.Module):
    """Fuse LR and aligned reference pyramids coarse to fine.

    Stage A deconvolves the scale-3 pair to scale 2; stages B and C each
    deconvolve ``(LR, warped REF, decoder)`` one scale finer. The post-fusion
    head sees the scale-0 decoder features together with both scale-0
    encoder levels, then three 5x5 convs (64, 64, 3) with ReLU produce the
    image.
    """

    def __init__(self, features: int = 64, out_channels: int = 3):
        super().__init__()
        f = features
        self.deconvs = nn.ModuleList(
            [
                nn.ConvTranspose2d(2 * f, f, 4, stride=2, padding=1),
                nn.ConvTranspose2d(3 * f, f, 4, stride=2, padding=1),
                nn.ConvTranspose2d(3 * f, f, 4, stride=2, padding=1),
            ]
        )
        self.fuse1 = nn.Conv2d(3 * f, f, 5, padding=2)
        self.fuse2 = nn.Conv2d(f, f, 5, padding=2)
        self.predict = nn.Conv2d(f, out_channels, 5, padding=2)

    def forward(self, lr_feats, warped_feats) -> torch.Tensor:
        if len(lr_feats) != 4 or len(warped_feats) != 4:
            raise DomainError("decoder needs four-level LR and reference pyramids")
        expected = self.deconvs[0].in_channels // 2
        for level, (a, b) in enumerate(zip(lr_feats, warped_feats)):
            if a.shape != b.shape:
                raise DomainError(f"level {level}: LR {tuple(a.shape)} vs REF {tuple(b.shape)}")
            if a.shape[1] != expected:
                raise DomainError(f"level {level}: expected {expected} channels, got {a.shape[1]}")
        d = torch.relu(self.deconvs[0](torch.cat([lr_feats[3], warped_feats[3]], 1)))
        for stage, level in ((1, 2), (2, 1)):
            d = torch.relu(self.deconvs[stage](torch.cat([lr_feats[level], warped_feats[level], d], 1)))
        x = torch.relu(self.fuse1(torch.cat([d, lr_feats[0], warped_feats[0]], 1)))
        x = torch.relu(self.fuse2(x))
        return torch.relu(self.predict(x))
