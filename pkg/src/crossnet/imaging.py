"""Pixel- and feature-level primitives shared by every network stage.

Rasters are torch tensors laid out ``(C, H, W)`` or batched ``(B, C, H, W)``.
Flow fields carry two channels, ``(horizontal, vertical)``, in pixels of the
field's own grid, with the origin at the centre of the top-left pixel.
Warping is backward: each output pixel reads the source at
``(x + flow_h, y + flow_v)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import torch
import torch.nn.functional as F

__all__ = [
    "DomainError",
    "CropRecord",
    "as_batch",
    "pixel_grid",
    "bilinear_sample",
    "warp",
    "shift_image",
    "resize_bicubic",
    "pad_to_multiple",
    "unpad",
]


class DomainError(ValueError):
    """Raised when an input violates an operation's domain."""


def as_batch(x: torch.Tensor) -> tuple[torch.Tensor, bool]:
    """Return a 4-D view of ``x`` and whether a batch axis was added."""
    if x.dim() == 3:
        return x.unsqueeze(0), True
    if x.dim() == 4:
        return x, False
    raise DomainError(f"expected a (C,H,W) or (B,C,H,W) tensor, got shape {tuple(x.shape)}")


def pixel_grid(height: int, width: int, *, dtype=torch.float32, device=None) -> torch.Tensor:
    """Absolute pixel coordinates as a ``(2, H, W)`` tensor, channel 0 = x."""
    ys = torch.arange(height, dtype=dtype, device=device)
    xs = torch.arange(width, dtype=dtype, device=device)
    gy, gx = torch.meshgrid(ys, xs, indexing="ij")
    return torch.stack([gx, gy])


def bilinear_sample(src: torch.Tensor, coords: torch.Tensor) -> torch.Tensor:
    """Sample ``src`` bilinearly at absolute pixel positions ``coords``.

    ``coords`` has shape ``(2, H, W)`` (or batched) with x in channel 0.
    Positions outside the source are clamped to the border before
    interpolation. Differentiable in both ``src`` and ``coords``.
    """
    src4, squeeze = as_batch(src)
    coords4, _ = as_batch(coords)
    if coords4.shape[1] != 2:
        raise DomainError("coords must have 2 channels (x, y)")
    if not torch.isfinite(coords4).all():
        raise DomainError("coords contain non-finite values")
    if src4.numel() == 0:
        raise DomainError("empty source raster")
    if coords4.shape[0] != src4.shape[0]:
        coords4 = coords4.expand(src4.shape[0], -1, -1, -1)
    b, c, h, w = src4.shape
    ho, wo = coords4.shape[-2:]
    x = coords4[:, 0].to(src4.dtype).clamp(0, w - 1)
    y = coords4[:, 1].to(src4.dtype).clamp(0, h - 1)
    # lower corner stays one short of the edge so the upper corner is always in range;
    # integer positions then get weights exactly (1, 0) or (0, 1)
    x0 = x.detach().floor().clamp(0, max(w - 2, 0))
    y0 = y.detach().floor().clamp(0, max(h - 2, 0))
    ax = (x - x0).unsqueeze(1)
    ay = (y - y0).unsqueeze(1)
    x0l, y0l = x0.long(), y0.long()
    x1l, y1l = (x0l + 1).clamp(max=w - 1), (y0l + 1).clamp(max=h - 1)
    flat = src4.reshape(b, c, h * w)

    def gather(yy, xx):
        idx = (yy * w + xx).reshape(b, 1, ho * wo).expand(b, c, ho * wo)
        return flat.gather(2, idx).reshape(b, c, ho, wo)

    top = gather(y0l, x0l) * (1 - ax) + gather(y0l, x1l) * ax
    bottom = gather(y1l, x0l) * (1 - ax) + gather(y1l, x1l) * ax
    out = top * (1 - ay) + bottom * ay
    return out.squeeze(0) if squeeze else out


def warp(src: torch.Tensor, flow: torch.Tensor) -> torch.Tensor:
    """Backward-warp ``src`` by ``flow`` (same spatial size)."""
    src4, squeeze = as_batch(src)
    flow4, _ = as_batch(flow)
    if flow4.shape[1] != 2:
        raise DomainError("flow must have 2 channels")
    if src4.shape[-2:] != flow4.shape[-2:]:
        raise DomainError(
            f"resolution mismatch: src {tuple(src4.shape[-2:])} vs flow {tuple(flow4.shape[-2:])}"
        )
    h, w = src4.shape[-2:]
    base = pixel_grid(h, w, dtype=flow4.dtype, device=flow4.device)
    out = bilinear_sample(src4, base.unsqueeze(0) + flow4)
    return out.squeeze(0) if squeeze else out


def shift_image(img: torch.Tensor, dx: int, dy: int) -> torch.Tensor:
    """Translate content by integer ``(dx, dy)`` with edge-clamped fill.

    ``out[y, x] = img[clamp(y - dy), clamp(x - dx)]``, so positive ``dx``
    moves content right and leaves the left columns clamp-filled.
    """
    h, w = img.shape[-2:]
    ys = (torch.arange(h) - dy).clamp(0, h - 1)
    xs = (torch.arange(w) - dx).clamp(0, w - 1)
    return img[..., ys[:, None], xs[None, :]]


def _cubic(x: torch.Tensor, a: float = -0.5) -> torch.Tensor:
    x = x.abs()
    x2, x3 = x * x, x * x * x
    near = (a + 2) * x3 - (a + 3) * x2 + 1
    far = a * x3 - 5 * a * x2 + 8 * a * x - 4 * a
    return torch.where(x <= 1, near, torch.where(x < 2, far, torch.zeros_like(x)))


def _resample_matrix(n_in: int, n_out: int, dtype) -> torch.Tensor:
    """Row-normalised ``(n_out, n_in)`` bicubic weights, antialiased on shrink."""
    scale = n_in / n_out
    stretch = max(scale, 1.0)
    centres = (torch.arange(n_out, dtype=torch.float64) + 0.5) * scale - 0.5
    support = int(math.ceil(2 * stretch)) + 1
    taps = torch.floor(centres).long()[:, None] + torch.arange(-support, support + 1)[None, :]
    wts = _cubic((taps.to(torch.float64) - centres[:, None]) / stretch)
    # taps past the border read the edge pixel (clamp-to-edge)
    mat = torch.zeros(n_out, n_in, dtype=torch.float64)
    mat.scatter_add_(1, taps.clamp(0, n_in - 1), wts)
    mat = mat / mat.sum(dim=1, keepdim=True)
    return mat.to(dtype)


def resize_bicubic(src: torch.Tensor, factor) -> torch.Tensor:
    """Bicubic resize (a = -0.5) by a rational ``factor``.

    Downscaling widens the kernel by the inverse factor so it low-pass
    filters the input. Output size is ``round(size * factor)``.
    """
    factor = Fraction(factor).limit_denominator(1000) if not isinstance(factor, Fraction) else factor
    if factor <= 0:
        raise DomainError(f"resize factor must be positive, got {factor}")
    src4, squeeze = as_batch(src)
    h, w = src4.shape[-2:]
    oh, ow = round(h * factor), round(w * factor)
    if oh < 1 or ow < 1:
        raise DomainError(f"resize of {h}x{w} by {factor} yields an empty image")
    if (oh, ow) == (h, w):
        out = src4.clone()
    else:
        my = _resample_matrix(h, oh, src4.dtype).to(src4.device)
        mx = _resample_matrix(w, ow, src4.dtype).to(src4.device)
        out = torch.einsum("oh,bchw,pw->bcop", my, src4, mx)
    return out.squeeze(0) if squeeze else out


@dataclass(frozen=True)
class CropRecord:
    """Original spatial size of a padded raster."""

    height: int
    width: int
    pad_bottom: int = 0
    pad_right: int = 0

    @property
    def is_empty(self) -> bool:
        return self.pad_bottom == 0 and self.pad_right == 0


def pad_to_multiple(src: torch.Tensor, multiple: int = 32) -> tuple[torch.Tensor, CropRecord]:
    """Reflection-pad right/bottom so both sides are multiples of ``multiple``."""
    src4, squeeze = as_batch(src)
    h, w = src4.shape[-2:]
    pb = -h % multiple
    pr = -w % multiple
    record = CropRecord(h, w, pb, pr)
    if record.is_empty:
        return src, record
    # reflection needs pad < size; tiny rasters fall back to edge replication
    mode = "reflect" if pb < h and pr < w else "replicate"
    out = F.pad(src4, (0, pr, 0, pb), mode=mode)
    return (out.squeeze(0) if squeeze else out), record


def unpad(src: torch.Tensor, record: CropRecord) -> torch.Tensor:
    """Undo :func:`pad_to_multiple`. Works on any raster on the padded grid."""
    return src[..., : record.height, : record.width]
