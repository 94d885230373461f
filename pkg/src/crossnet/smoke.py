"""Desk-scale overfit run on the synthetic light-field fixture.

Eight view pairs from a 3x3 grid whose views are the same texture
shifted by 2 px per angular step, so every pair is related by a known
uniform flow of magnitude 2 or 4. The references sit on all four sides
of the LR view: with a single direction the decoder can absorb a fixed
shift and the flow is no longer pinned down. Each step trains on all
eight pairs at once. Training results are cached on
disk keyed by the run config and the package source, since one run takes
tens of minutes on a CPU.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import time
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import torch

from .checkpoint import load_checkpoint, save_checkpoint
from .data import SamplePair, make_lr, synthetic_lightfield
from .imaging import resize_bicubic
from .metrics import psnr
from .model import CrossNet, CrossNetConfig, build_model, parameter_store, super_resolve
from .training import FixedPairSampler, TrainConfig, train

__all__ = [
    "SMOKE_PAIRS",
    "SmokeConfig",
    "SmokeRun",
    "smoke_fixture",
    "expected_flow",
    "smoothed",
    "run_smoke",
    "smoke_metrics",
]

log = logging.getLogger(__name__)

SIZE, GRID, DISPARITY, SCALE = 96, 3, 2, 4

# (lr view, ref view): right, left, below, above at one step, then at two steps
SMOKE_PAIRS = (
    ((1, 1), (1, 2)),
    ((1, 1), (1, 0)),
    ((1, 1), (2, 1)),
    ((1, 1), (0, 1)),
    ((0, 0), (0, 2)),
    ((2, 2), (2, 0)),
    ((0, 0), (2, 0)),
    ((2, 2), (0, 2)),
)


def smoke_fixture(seed: int = 0) -> list[SamplePair]:
    lf = synthetic_lightfield(SIZE, grid=GRID, disparity=DISPARITY, seed=seed, scene_id="smoke")
    pairs = []
    for lr_pos, ref_pos in SMOKE_PAIRS:
        hr = lf.view(lr_pos)
        pairs.append(SamplePair(make_lr(hr, SCALE), lf.view(ref_pos), hr, lr_pos, ref_pos, SCALE, lf.scene_id))
    return pairs


def expected_flow(pair: SamplePair) -> tuple[float, float]:
    """Backward flow that aligns the reference with the LR view."""
    return (
        float(DISPARITY * (pair.ref_pos[1] - pair.lr_pos[1])),
        float(DISPARITY * (pair.ref_pos[0] - pair.lr_pos[0])),
    )


@dataclass(frozen=True)
class SmokeConfig:
    iterations: int = 2000
    lr: float = 1e-4
    batch_size: int = 8
    seed: int = 0
    flow_head_gain: float = 0.1

    def train_config(self, checkpoint_every: int = 0) -> TrainConfig:
        return TrainConfig(
            total_iterations=self.iterations, lr_initial=self.lr, lr_schedule=(), batch_size=self.batch_size,
            crop_size=(SIZE, SIZE), scale=SCALE, seed=self.seed, checkpoint_every=checkpoint_every, log_every=1,
        )


@dataclass
class SmokeRun:
    model: CrossNet
    losses: list
    seconds: float
    cached: bool


def _source_digest() -> str:
    h = hashlib.sha256()
    for path in sorted(Path(__file__).parent.glob("*.py")):
        h.update(path.name.encode())
        h.update(path.read_bytes())
    return h.hexdigest()


def _cache_dir() -> Path:
    return Path(os.environ.get("CROSSNET_CACHE", Path.home() / ".cache" / "crossnet"))


def smoothed(values, window: int = 50) -> np.ndarray:
    """Trailing moving average; entry ``t`` averages ``values[max(0, t-window+1) : t+1]``."""
    v = np.asarray(values, dtype=np.float64)
    c = np.concatenate([[0.0], np.cumsum(v)])
    idx = np.arange(1, len(v) + 1)
    lo = np.maximum(0, idx - window)
    return (c[idx] - c[lo]) / (idx - lo)


def run_smoke(cfg: SmokeConfig = SmokeConfig(), *, cache: bool = True, checkpoint_dir=None) -> SmokeRun:
    """Train on the fixture (or load the cached result of an identical run).

    ``checkpoint_dir`` keeps a checkpoint every 250 iterations for
    inspection; it does not change the trajectory.
    """
    key = hashlib.sha256(json.dumps([asdict(cfg), _source_digest()], sort_keys=True).encode()).hexdigest()[:16]
    path = _cache_dir() / f"smoke_{key}.npz"
    mcfg = CrossNetConfig(scale_factor=SCALE, flow_head_gain=cfg.flow_head_gain)
    if cache and path.exists():
        ckpt = load_checkpoint(path)
        model = CrossNet(mcfg)
        model.load_state_dict(ckpt["params"], strict=True)
        meta = ckpt["meta"]
        return SmokeRun(model.eval(), meta["losses"], meta["seconds"], True)
    torch.manual_seed(cfg.seed)
    model = build_model(mcfg, cfg.seed)
    t0 = time.perf_counter()
    every = 250 if checkpoint_dir is not None else 0
    result = train(cfg.train_config(every), FixedPairSampler(smoke_fixture(cfg.seed)), model, out_dir=checkpoint_dir)
    seconds = time.perf_counter() - t0
    losses = [row["loss"] for row in result.log]
    if cache:
        save_checkpoint(path, parameter_store(result.model), meta={"losses": losses, "seconds": seconds,
                                                                   "config": asdict(cfg)})
        log.info("cached smoke run at %s", path)
    return SmokeRun(result.model.eval(), losses, seconds, False)


@torch.no_grad()
def smoke_metrics(model: CrossNet, pairs) -> dict:
    """Training-set metrics of a smoke model.

    ``psnr``: with the paired reference; ``bicubic``: the upsampling baseline;
    ``ref_hr``: with the ground truth as reference; ``ref_zero``: with a
    zeroed reference; ``flows``: per-pair median of V0 over the central half
    of the image, alongside the expected flow.
    """
    out = {"psnr": [], "bicubic": [], "ref_hr": [], "ref_zero": [], "flows": []}
    model.eval()
    for p in pairs:
        pred, flows = super_resolve(model, p.lr, p.ref)
        out["psnr"].append(psnr(pred.clamp(0, 1), p.hr))
        out["bicubic"].append(psnr(resize_bicubic(p.lr, p.scale).clamp(0, 1), p.hr))
        out["ref_hr"].append(psnr(super_resolve(model, p.lr, p.hr)[0].clamp(0, 1), p.hr))
        out["ref_zero"].append(psnr(super_resolve(model, p.lr, torch.zeros_like(p.ref))[0].clamp(0, 1), p.hr))
        h, w = p.hr.shape[-2:]
        centre = flows[0][:, h // 4 : h - h // 4, w // 4 : w - w // 4].reshape(2, -1)
        median = tuple(float(v) for v in centre.median(dim=1).values)
        out["flows"].append((median, expected_flow(p)))
    for k in ("psnr", "bicubic", "ref_hr", "ref_zero"):
        out[k] = float(np.mean(out[k]))
    return out
