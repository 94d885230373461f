"""FlowNetS-style cross-scale flow estimator.

The contracting path follows the usual FlowNetS layer table. The expanding
path refines flow coarse to fine; :class:`FlowNetSPlus` carries the
refinement two extra x2 steps (half and full resolution) instead of ending
with a x4 bilinear upsample at quarter resolution.
"""

from __future__ import annotations

import math

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F
from matplotlib.colors import hsv_to_rgb

from .imaging import DomainError, as_batch

__all__ = [
    "FlowNetS",
    "FlowNetSPlus",
    "upsample_flow",
    "flow_to_color",
    "NUM_FLOW_LEVELS",
    "WARP_LEVELS",
]

NUM_FLOW_LEVELS = 6
WARP_LEVELS = (0, 1, 2, 3)


def upsample_flow(flow: torch.Tensor, scale_index: int | None = None) -> torch.Tensor:
    """Double a flow field's resolution and rescale displacements to the finer grid.

    ``scale_index`` is optional bookkeeping; passing 0 is an error because
    there is no finer level.
    """
    if scale_index is not None and scale_index <= 0:
        raise DomainError("flow is already at full resolution (scale_index 0)")
    flow4, squeeze = as_batch(flow)
    out = 2.0 * F.interpolate(flow4, scale_factor=2, mode="bilinear", align_corners=False)
    return out.squeeze(0) if squeeze else out


def _conv(cin: int, cout: int, kernel: int = 3, stride: int = 1) -> nn.Sequential:
    return nn.Sequential(
        nn.Conv2d(cin, cout, kernel, stride=stride, padding=(kernel - 1) // 2),
        nn.ReLU(inplace=True),
    )


def _deconv(cin: int, cout: int) -> nn.Sequential:
    return nn.Sequential(nn.ConvTranspose2d(cin, cout, 4, stride=2, padding=1), nn.ReLU(inplace=True))


def _predict_flow(cin: int) -> nn.Conv2d:
    return nn.Conv2d(cin, 2, 3, padding=1)


class FlowNetS(nn.Module):
    """FlowNetS on a channel-concatenated image pair.

    Six flow predictions come out at scales 5..2 from the network and, for the
    plain variant, scales 1 and 0 are bilinear upsamplings of scale 2 (the
    x4 step). The deepest stage stays at 1/32 so any input whose sides are
    multiples of 32 is accepted.
    """

    refine_to_full = False

    def __init__(self, in_channels: int = 6):
        super().__init__()
        self.conv1 = _conv(in_channels, 64, 7, 2)
        self.conv2 = _conv(64, 128, 5, 2)
        self.conv3 = _conv(128, 256, 5, 2)
        self.conv3_1 = _conv(256, 256)
        self.conv4 = _conv(256, 512, stride=2)
        self.conv4_1 = _conv(512, 512)
        self.conv5 = _conv(512, 512, stride=2)
        self.conv5_1 = _conv(512, 512)
        self.conv6 = _conv(512, 1024)
        self.conv6_1 = _conv(1024, 1024)

        self.predict_flow5 = _predict_flow(1024)
        self.deconv4 = _deconv(1024, 512)
        self.predict_flow4 = _predict_flow(512 + 512 + 2)
        self.deconv3 = _deconv(1026, 256)
        self.predict_flow3 = _predict_flow(256 + 256 + 2)
        self.deconv2 = _deconv(514, 128)
        self.predict_flow2 = _predict_flow(128 + 128 + 2)
        if self.refine_to_full:
            self.deconv1 = _deconv(258, 128)
            self.predict_flow1 = _predict_flow(128 + 64 + 2)
            self.deconv0 = _deconv(194, 64)
            self.predict_flow0 = _predict_flow(64 + in_channels + 2)

    def forward(self, lr_up: torch.Tensor, ref: torch.Tensor) -> list[torch.Tensor]:
        """Return flows ``[V0, V1, ..., V5]``, finest first."""
        if lr_up.shape != ref.shape:
            raise DomainError(f"flow inputs differ in shape: {tuple(lr_up.shape)} vs {tuple(ref.shape)}")
        h, w = lr_up.shape[-2:]
        if h % 32 or w % 32:
            raise DomainError(f"flow input size {h}x{w} is not a multiple of 32")
        x = torch.cat([lr_up, ref], dim=1)
        c1 = self.conv1(x)
        c2 = self.conv2(c1)
        c3 = self.conv3_1(self.conv3(c2))
        c4 = self.conv4_1(self.conv4(c3))
        c5 = self.conv6_1(self.conv6(self.conv5_1(self.conv5(c4))))

        flow5 = self.predict_flow5(c5)
        cat4 = torch.cat([self.deconv4(c5), c4, upsample_flow(flow5)], 1)
        flow4 = self.predict_flow4(cat4)
        cat3 = torch.cat([self.deconv3(cat4), c3, upsample_flow(flow4)], 1)
        flow3 = self.predict_flow3(cat3)
        cat2 = torch.cat([self.deconv2(cat3), c2, upsample_flow(flow3)], 1)
        flow2 = self.predict_flow2(cat2)
        if self.refine_to_full:
            cat1 = torch.cat([self.deconv1(cat2), c1, upsample_flow(flow2)], 1)
            flow1 = self.predict_flow1(cat1)
            cat0 = torch.cat([self.deconv0(cat1), x, upsample_flow(flow1)], 1)
            flow0 = self.predict_flow0(cat0)
        else:
            flow1 = upsample_flow(flow2)
            flow0 = upsample_flow(flow1)
        return [flow0, flow1, flow2, flow3, flow4, flow5]


class FlowNetSPlus(FlowNetS):
    """FlowNetS with two learned x2 refinement steps down to full resolution.

    The half-resolution step skips from ``conv1``; the full-resolution step
    skips from the raw input pair.
    """

    refine_to_full = True


def flow_to_color(flow, max_magnitude: float) -> np.ndarray:
    """Colour-code a ``(2, H, W)`` flow as an ``(H, W, 3)`` RGB array in [0, 1].

    Hue encodes direction (0 deg = +x, counter-clockwise in image
    coordinates with y down), saturation encodes magnitude relative to
    ``max_magnitude``; value is 1, so zero flow is white.
    """
    if max_magnitude <= 0:
        raise DomainError("max_magnitude must be positive")
    f = flow.detach().cpu().numpy() if isinstance(flow, torch.Tensor) else np.asarray(flow)
    u, v = f[0].astype(np.float64), f[1].astype(np.float64)
    angle = np.arctan2(v, u)
    hue = np.mod(angle / (2 * math.pi), 1.0)
    sat = np.clip(np.hypot(u, v) / max_magnitude, 0.0, 1.0)
    return hsv_to_rgb(np.stack([hue, sat, np.ones_like(hue)], axis=-1))
