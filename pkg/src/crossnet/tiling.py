"""Sliding-window inference for inputs larger than one network window."""

from __future__ import annotations

from dataclasses import dataclass

import torch

from .imaging import DomainError
from .model import CrossNet, predict_padded, super_resolve

__all__ = ["TileSpec", "tile_origins", "tile_windows", "weight_canvas", "sliding_window_sr"]


@dataclass(frozen=True)
class TileSpec:
    """Window layout on the reference-resolution canvas.

    ``context`` extra pixels around each window are fed to the network and
    then discarded, so padding effects at the crop edge stay out of the
    blended output. Zero gives bare-window inference.
    """

    window: int = 512
    stride: int = 256
    blend: str = "average"
    context: int = 64

    def __post_init__(self):
        if self.stride > self.window or self.stride <= 0:
            raise DomainError(f"need 0 < stride <= window, got stride={self.stride}, window={self.window}")
        if self.blend not in ("average", "feather"):
            raise DomainError(f"unknown blend {self.blend!r}")
        if self.context < 0:
            raise DomainError(f"context must be >= 0, got {self.context}")


def tile_origins(length: int, window: int, stride: int) -> list[int]:
    """Window start offsets covering ``[0, length)``; the last window ends flush with the border."""
    if length <= window:
        return [0]
    origins = list(range(0, length - window + 1, stride))
    if origins[-1] + window < length:
        origins.append(length - window)
    return origins


def tile_windows(height: int, width: int, tiles: TileSpec) -> list[tuple[slice, slice]]:
    wh, ww = min(tiles.window, height), min(tiles.window, width)
    return [
        (slice(y, y + wh), slice(x, x + ww))
        for y in tile_origins(height, tiles.window, tiles.stride)
        for x in tile_origins(width, tiles.window, tiles.stride)
    ]


def _context_span(start: int, stop: int, length: int, context: int) -> slice:
    # the context crop starts on the 32-pixel lattice so the network sees
    # the same sub-pixel phase as a full-canvas pass
    lo = max(0, (start - context) // 32 * 32)
    return slice(lo, min(length, stop + context))


def _tile_weight(h: int, w: int, blend: str) -> torch.Tensor:
    if blend == "average":
        return torch.ones(h, w, dtype=torch.float64)
    ry = torch.minimum(torch.arange(h) + 1, h - torch.arange(h)).double()
    rx = torch.minimum(torch.arange(w) + 1, w - torch.arange(w)).double()
    return torch.outer(ry, rx)


def _accumulate(height: int, width: int, tiles: TileSpec):
    total = torch.zeros(height, width, dtype=torch.float64)
    windows = tile_windows(height, width, tiles)
    for ys, xs in windows:
        total[ys, xs] += _tile_weight(ys.stop - ys.start, xs.stop - xs.start, tiles.blend)
    return windows, total


def weight_canvas(height: int, width: int, tiles: TileSpec) -> torch.Tensor:
    """Effective per-pixel blend weight after normalisation (1 wherever covered)."""
    windows, total = _accumulate(height, width, tiles)
    canvas = torch.zeros_like(total)
    for ys, xs in windows:
        canvas[ys, xs] += _tile_weight(ys.stop - ys.start, xs.stop - xs.start, tiles.blend)
    return canvas / total


@torch.no_grad()
def sliding_window_sr(model: CrossNet, lr: torch.Tensor, ref: torch.Tensor, tiles: TileSpec = TileSpec()):
    """Super-resolve ``(3, h, w)`` inputs window by window on the reference-resolution canvas.

    The LR image is upsampled once; each window then runs the network on
    the matching crops of the upsampled LR and the reference, widened by
    ``tiles.context``. Overlaps are blended as a weighted sum divided by the
    accumulated weight.
    Inputs no larger than one window take a single padded pass.
    """
    s = model.cfg.scale_factor
    H, W = ref.shape[-2:]
    if (H, W) != (lr.shape[-2] * s, lr.shape[-1] * s):
        raise DomainError(f"reference {(H, W)} is not {s}x the LR size {tuple(lr.shape[-2:])}")
    if H <= tiles.window and W <= tiles.window:
        return super_resolve(model, lr, ref)[0]
    lr_up = model.upsample(lr.unsqueeze(0))
    windows, total = _accumulate(H, W, tiles)
    acc = torch.zeros(3, H, W, dtype=torch.float64)
    for ys, xs in windows:
        cy = _context_span(ys.start, ys.stop, H, tiles.context)
        cx = _context_span(xs.start, xs.stop, W, tiles.context)
        pred, _ = predict_padded(model, lr_up[..., cy, cx], ref[None, :, cy, cx])
        inner = pred[0, :, ys.start - cy.start : ys.stop - cy.start, xs.start - cx.start : xs.stop - cx.start]
        acc[:, ys, xs] += inner.double() * _tile_weight(ys.stop - ys.start, xs.stop - xs.start, tiles.blend)
    return (acc / total).to(ref.dtype)
