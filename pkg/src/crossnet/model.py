"""Full CrossNet assembly, ablation variant, and parameter bookkeeping."""

from __future__ import annotations

import math
from collections import OrderedDict
from dataclasses import asdict, dataclass

import torch
import torch.nn as nn

from .decoder import FusionDecoder, warp_pyramid
from .encoders import BicubicUpsampler, ImageEncoder, PrecomputedUpsampler, sisr_upsample
from .flownet import FlowNetS, FlowNetSPlus
from .imaging import DomainError, pad_to_multiple, unpad, warp

__all__ = [
    "CrossNetConfig",
    "CrossNet",
    "init_params",
    "build_model",
    "parameter_store",
    "count_params",
    "flownet_stub_counts",
    "super_resolve",
    "predict_padded",
]

VARIANTS = ("crossnet", "crossnet_iw")


@dataclass
class CrossNetConfig:
    scale_factor: int = 8
    variant: str = "crossnet"
    sisr: str = "bicubic"
    sisr_dir: str | None = None
    # multiplier on the fan-in init of the flow prediction heads
    flow_head_gain: float = 0.1

    def __post_init__(self):
        if self.scale_factor not in (4, 8):
            raise DomainError(f"scale_factor must be 4 or 8, got {self.scale_factor}")
        if self.variant not in VARIANTS:
            raise DomainError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.sisr not in ("bicubic", "precomputed"):
            raise DomainError(f"unknown sisr {self.sisr!r}")
        if self.sisr == "precomputed" and not self.sisr_dir:
            raise DomainError("sisr='precomputed' needs sisr_dir")

    def to_dict(self) -> dict:
        return asdict(self)

    def upsampler(self):
        if self.sisr == "precomputed":
            return PrecomputedUpsampler(self.sisr_dir)
        return BicubicUpsampler()


class CrossNet(nn.Module):
    """Reference-based super-resolution network.

    ``forward`` takes the SISR-upsampled LR image and the reference, both
    ``(B, 3, H, W)`` with ``H, W`` multiples of 32, and returns the
    prediction plus the six-level flow pyramid (finest first).
    """

    def __init__(self, cfg: CrossNetConfig | None = None):
        super().__init__()
        self.cfg = cfg or CrossNetConfig()
        self.flow = FlowNetSPlus()
        self.enc_lr = ImageEncoder()
        self.enc_ref = ImageEncoder()
        self.decoder = FusionDecoder()

    def forward(self, lr_up: torch.Tensor, ref: torch.Tensor):
        if lr_up.shape != ref.shape:
            raise DomainError(f"upsampled LR {tuple(lr_up.shape)} and reference {tuple(ref.shape)} differ")
        flows = self.flow(lr_up, ref)
        lr_feats = self.enc_lr(lr_up)
        if self.cfg.variant == "crossnet_iw":
            aligned = self.enc_ref(warp(ref, flows[0]))
        else:
            aligned = warp_pyramid(self.enc_ref(ref), flows[:4])
        return self.decoder(lr_feats, aligned), flows

    def upsample(self, lr: torch.Tensor, *, sample_id=None) -> torch.Tensor:
        return sisr_upsample(lr, self.cfg.scale_factor, self.cfg.upsampler(), sample_id=sample_id)


def _fan_in_std(module: nn.Module) -> float:
    if isinstance(module, nn.ConvTranspose2d):
        kh, kw = module.kernel_size
        sh, sw = module.stride
        fan_in = module.in_channels * kh * kw / (sh * sw)
    else:
        kh, kw = module.kernel_size
        fan_in = module.in_channels * kh * kw
    return math.sqrt(2.0 / fan_in)


def init_params(model: nn.Module, seed: int) -> nn.Module:
    """Deterministically (re)initialise every conv: fan-in scaled normal weights, zero bias.

    Flow prediction heads get ``flow_head_gain`` times the usual scale so
    training starts near the identity warp. The image head's bias starts at
    0.5 so the final ReLU is live from the first step.
    """
    gen = torch.Generator().manual_seed(int(seed))
    gain = getattr(getattr(model, "cfg", None), "flow_head_gain", 1.0)
    with torch.no_grad():
        for name, mod in model.named_modules():
            if not isinstance(mod, (nn.Conv2d, nn.ConvTranspose2d)):
                continue
            std = _fan_in_std(mod)
            if "predict_flow" in name:
                std *= gain
            mod.weight.copy_(torch.randn(mod.weight.shape, generator=gen) * std)
            if mod.bias is not None:
                mod.bias.zero_()
        decoder = getattr(model, "decoder", None)
        if isinstance(decoder, FusionDecoder):
            decoder.predict.bias.fill_(0.5)
    return model


def build_model(cfg: CrossNetConfig | None = None, seed: int = 0) -> CrossNet:
    torch.manual_seed(seed)
    return init_params(CrossNet(cfg), seed)


def parameter_store(model: nn.Module) -> "OrderedDict[str, torch.Tensor]":
    """Named learnable arrays of ``model`` (detached views)."""
    return OrderedDict((k, v.detach()) for k, v in model.named_parameters())


def count_params(store) -> int:
    """Total element count of a parameter store, module, or iterable of arrays."""
    if isinstance(store, nn.Module):
        store = parameter_store(store)
    values = store.values() if hasattr(store, "values") else store
    return int(sum(math.prod(tuple(v.shape)) for v in values))


def flownet_stub_counts() -> tuple[int, int]:
    """Parameter counts of the plain FlowNetS and the refined estimator."""
    return count_params(FlowNetS()), count_params(FlowNetSPlus())


@torch.no_grad()
def super_resolve(model: CrossNet, lr: torch.Tensor, ref: torch.Tensor, *, lr_up=None, sample_id=None):
    """Inference on arbitrary-sized inputs: pad to multiples of 32, predict, crop.

    Accepts ``(3, h, w)`` or batched inputs. Returns ``(prediction, flows)``;
    flows stay on the padded grid.
    """
    squeeze = lr.dim() == 3
    if squeeze:
        lr, ref = lr.unsqueeze(0), ref.unsqueeze(0)
        lr_up = None if lr_up is None else lr_up.unsqueeze(0)
    s = model.cfg.scale_factor
    if (ref.shape[-2], ref.shape[-1]) != (lr.shape[-2] * s, lr.shape[-1] * s):
        raise DomainError(
            f"reference {tuple(ref.shape[-2:])} is not {s}x the LR size {tuple(lr.shape[-2:])}"
        )
    if lr_up is None:
        lr_up = model.upsample(lr, sample_id=sample_id)
    pred, flows = predict_padded(model, lr_up, ref)
    if squeeze:
        pred = pred.squeeze(0)
        flows = [f.squeeze(0) for f in flows]
    return pred, flows


@torch.no_grad()
def predict_padded(model: CrossNet, lr_up: torch.Tensor, ref: torch.Tensor):
    """Run ``model`` on batched same-size inputs of any size via pad-to-32 and crop."""
    lr_up_p, record = pad_to_multiple(lr_up, 32)
    ref_p, _ = pad_to_multiple(ref, 32)
    pred, flows = model(lr_up_p, ref_p)
    return unpad(pred, record), flows
