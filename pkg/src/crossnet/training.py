"""Optimisation loop, learning-rate schedules, Adam, and checkpoint/resume."""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
import torch
from torch.optim.adam import adam as _functional_adam

from .checkpoint import load_checkpoint, save_checkpoint
from .data import augment_parallax, sample_training_pair
from .imaging import DomainError, warp
from .metrics import LossConfig, charbonnier_loss, psnr
from .model import CrossNet, CrossNetConfig, build_model, parameter_store

__all__ = [
    "TrainConfig",
    "AdamState",
    "adam_step",
    "lr_at",
    "PairSampler",
    "FixedPairSampler",
    "TrainingDiverged",
    "TrainResult",
    "train",
    "restore_model",
    "FLOWER_SCHEDULE",
    "GENERALIZATION_SCHEDULE",
]

log = logging.getLogger(__name__)

# (iteration, multiplier of the initial rate)
FLOWER_SCHEDULE = ((150_000, 0.1),)
GENERALIZATION_SCHEDULE = ((50_000, 0.5), (100_000, 0.2), (150_000, 0.1))


@dataclass
class TrainConfig:
    total_iterations: int = 200_000
    lr_initial: float = 1e-4
    lr_schedule: tuple = FLOWER_SCHEDULE
    betas: tuple = (0.9, 0.999)
    eps: float = 1e-8
    batch_size: int = 4
    crop_size: tuple = (160, 160)
    scale: int = 8
    variant: str = "crossnet"
    dataset: str = ""
    pretrain_flow_iterations: int = 0
    parallax_augment: bool = False
    seed: int = 0
    checkpoint_every: int = 5_000
    log_every: int = 100

    def __post_init__(self):
        self.lr_schedule = tuple((int(i), float(m)) for i, m in self.lr_schedule)
        self.betas = tuple(float(b) for b in self.betas)
        self.crop_size = tuple(int(c) for c in self.crop_size)
        its = [i for i, _ in self.lr_schedule]
        if any(b <= a for a, b in zip(its, its[1:])):
            raise DomainError("lr_schedule iterations must be strictly increasing")
        if its and its[-1] >= self.total_iterations:
            raise DomainError("lr_schedule iterations must be below total_iterations")
        if any(c % 32 for c in self.crop_size):
            raise DomainError("crop_size must be a multiple of 32")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["lr_schedule"] = [list(e) for e in self.lr_schedule]
        d["betas"] = list(self.betas)
        d["crop_size"] = list(self.crop_size)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise DomainError(f"unknown TrainConfig keys: {sorted(unknown)}")
        return cls(**d)


def lr_at(cfg: TrainConfig, iteration: int) -> float:
    """Learning rate at ``iteration``: initial rate times the latest schedule multiplier."""
    mult = 1.0
    for start, m in cfg.lr_schedule:
        if iteration >= start:
            mult = m
    return cfg.lr_initial * mult


@dataclass
class AdamState:
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


@torch.no_grad()
def adam_step(params, grads, state: AdamState, lr: float, betas=(0.9, 0.999), eps: float = 1e-8) -> AdamState:
    """One bias-corrected Adam update, applied to ``params`` in place.

    ``params`` and ``grads`` map names to tensors; missing grads count as zero.
    """
    names = list(params)
    plist, glist, mlist, vlist = [], [], [], []
    for name in names:
        p = params[name]
        g = grads.get(name)
        if g is None:
            g = torch.zeros_like(p)
        if g.shape != p.shape:
            raise DomainError(f"gradient shape {tuple(g.shape)} != parameter shape {tuple(p.shape)} for {name}")
        if name not in state.m:
            state.m[name] = torch.zeros_like(p)
            state.v[name] = torch.zeros_like(p)
        plist.append(p)
        glist.append(g)
        mlist.append(state.m[name])
        vlist.append(state.v[name])
    # one step counter per tensor; the kernel increments them before use
    steps = [torch.tensor(float(state.step)) for _ in names]
    _functional_adam(
        plist, glist, mlist, vlist, [], steps, fused=True,
        amsgrad=False, beta1=betas[0], beta2=betas[1], lr=lr, weight_decay=0.0, eps=eps, maximize=False,
    )
    state.step += 1
    return state


def _stack(pairs):
    return (
        torch.stack([p.lr for p in pairs]),
        torch.stack([p.ref for p in pairs]),
        torch.stack([p.hr for p in pairs]),
    )


class PairSampler:
    """Random training batches from a light-field dataset.

    Each sample picks a scene uniformly, then LR and reference views
    uniformly from its angular grid, optionally offsets the reference, and
    crops the same window from all three images (aligned to the scale so the
    LR crop matches exactly).
    """

    def __init__(self, dataset, scale: int, crop_size=(160, 160), parallax_augment: bool = False):
        self.dataset = dataset
        self.scale = scale
        self.crop_size = tuple(crop_size)
        self.parallax_augment = parallax_augment

    def __call__(self, rng: np.random.Generator, batch: int):
        out = []
        ch, cw = self.crop_size
        s = self.scale
        for _ in range(batch):
            scene = self.dataset.scene_ids[int(rng.integers(len(self.dataset)))]
            pair = sample_training_pair(self.dataset.load(scene), s, rng)
            if self.parallax_augment:
                pair = augment_parallax(pair, rng)
            h, w = pair.hr.shape[-2:]
            ch_, cw_ = min(ch, h), min(cw, w)
            top = s * int(rng.integers((h - ch_) // s + 1))
            left = s * int(rng.integers((w - cw_) // s + 1))
            win = (slice(top, top + ch_), slice(left, left + cw_))
            lwin = (slice(top // s, (top + ch_) // s), slice(left // s, (left + cw_) // s))
            out.append(
                type(pair)(pair.lr[:, lwin[0], lwin[1]], pair.ref[:, win[0], win[1]], pair.hr[:, win[0], win[1]],
                           pair.lr_pos, pair.ref_pos, s, pair.scene_id)
            )
        return _stack(out)


class FixedPairSampler:
    """Batches drawn without replacement from a fixed list of pairs."""

    def __init__(self, pairs):
        self.pairs = list(pairs)

    def __call__(self, rng: np.random.Generator, batch: int):
        idx = rng.choice(len(self.pairs), size=min(batch, len(self.pairs)), replace=False)
        return _stack([self.pairs[int(i)] for i in idx])


class TrainingDiverged(RuntimeError):
    def __init__(self, iteration: int, last_checkpoint):
        super().__init__(f"non-finite loss at iteration {iteration}; last good checkpoint: {last_checkpoint}")
        self.iteration = iteration
        self.last_checkpoint = last_checkpoint


@dataclass
class TrainResult:
    model: CrossNet
    log: list
    iteration: int
    phase: str
    last_checkpoint: Path | None = None
    adam: AdamState | None = None


LOG_FIELDS = ("iteration", "lr", "loss", "train_psnr", "wall_time")


def _model_cfg(cfg: TrainConfig, model_cfg: CrossNetConfig | None) -> CrossNetConfig:
    return model_cfg or CrossNetConfig(scale_factor=cfg.scale, variant=cfg.variant)


def restore_model(path) -> tuple[CrossNet, dict]:
    """Build a model from a checkpoint file; returns ``(model, meta)``."""
    ckpt = load_checkpoint(path)
    mcfg = CrossNetConfig(**ckpt["meta"]["model_config"])
    model = CrossNet(mcfg)
    model.load_state_dict(ckpt["params"], strict=True)
    return model, ckpt["meta"]


def train(
    cfg: TrainConfig,
    sampler,
    model: CrossNet | None = None,
    *,
    model_cfg: CrossNetConfig | None = None,
    resume_from=None,
    out_dir=None,
    stop_after: int | None = None,
    loss_cfg: LossConfig = LossConfig(),
) -> TrainResult:
    """Run the training schedule.

    The optional flow pre-training phase optimises only the flow estimator
    on ``charbonnier(warp(ref, V0), hr)``; the joint phase then restarts the
    learning-rate schedule and trains everything on the synthesis loss.
    ``stop_after`` halts after that many iterations of this call (used to
    simulate interruptions); a checkpoint is written there when ``out_dir``
    is set.
    """
    rng = np.random.default_rng(cfg.seed)
    adam = AdamState()
    phase, start = ("pretrain", 0) if cfg.pretrain_flow_iterations > 0 else ("joint", 0)
    if resume_from is not None:
        ckpt = load_checkpoint(resume_from)
        meta = ckpt["meta"]
        model = CrossNet(CrossNetConfig(**meta["model_config"]))
        model.load_state_dict(ckpt["params"], strict=True)
        adam = AdamState(meta["adam_step"], ckpt["adam_m"], ckpt["adam_v"])
        rng.bit_generator.state = meta["rng_state"]
        phase, start = meta["phase"], meta["iteration"]
    elif model is None:
        model = build_model(_model_cfg(cfg, model_cfg), cfg.seed)
    model.train()
    out_dir = Path(out_dir) if out_dir else None
    log_rows: list[dict] = []
    log_file = None
    if out_dir:
        out_dir.mkdir(parents=True, exist_ok=True)
        log_path = out_dir / "train_log.csv"
        new = not log_path.exists() or resume_from is None
        log_file = open(log_path, "w" if new else "a", newline="")
        writer = csv.DictWriter(log_file, fieldnames=("phase",) + LOG_FIELDS)
        if new:
            writer.writeheader()
    last_ckpt = Path(resume_from) if resume_from else None
    t0 = time.perf_counter()
    done = 0

    def checkpoint(phase_, iteration):
        nonlocal last_ckpt
        if out_dir is None:
            return
        meta = {
            "model_config": model.cfg.to_dict(),
            "train_config": cfg.to_dict(),
            "iteration": iteration,
            "phase": phase_,
            "adam_step": adam.step,
            "rng_state": rng.bit_generator.state,
        }
        last_ckpt = save_checkpoint(
            out_dir / f"ckpt_{phase_}_{iteration:07d}.npz", parameter_store(model), meta=meta,
            adam_m=adam.m, adam_v=adam.v,
        )

    try:
        while True:
            total = cfg.pretrain_flow_iterations if phase == "pretrain" else cfg.total_iterations
            if start >= total:
                if phase == "pretrain":
                    phase, start, adam = "joint", 0, AdamState()
                    continue
                break
            if stop_after is not None and done >= stop_after:
                checkpoint(phase, start)
                break
            it = start
            lr = lr_at(cfg, it)
            lr_img, ref, hr = sampler(rng, cfg.batch_size)
            lr_up = model.upsample(lr_img)
            if phase == "pretrain":
                named = {k: v for k, v in model.named_parameters() if k.startswith("flow.")}
                flows = model.flow(lr_up, ref)
                pred = warp(ref, flows[0])
            else:
                named = dict(model.named_parameters())
                pred, _ = model(lr_up, ref)
            loss = charbonnier_loss(pred, hr, loss_cfg)
            if not torch.isfinite(loss):
                raise TrainingDiverged(it, last_ckpt)
            model.zero_grad(set_to_none=True)
            loss.backward()
            grads = {k: p.grad for k, p in named.items() if p.grad is not None}
            adam_step(named, grads, adam, lr, cfg.betas, cfg.eps)
            start = it + 1
            done += 1
            if start % cfg.log_every == 0 or start == total:
                row = {
                    "iteration": start,
                    "lr": lr,
                    "loss": loss.item(),
                    "train_psnr": psnr(pred.detach().clamp(0, 1), hr),
                    "wall_time": round(time.perf_counter() - t0, 3),
                }
                log_rows.append(dict(row, phase=phase))
                if log_file:
                    writer.writerow(dict(row, phase=phase))
                    log_file.flush()
                log.info("%s it=%d loss=%.4f psnr=%.2f", phase, start, row["loss"], row["train_psnr"])
            if cfg.checkpoint_every and start % cfg.checkpoint_every == 0:
                checkpoint(phase, start)
    finally:
        if log_file:
            log_file.close()
    model.eval()
    return TrainResult(model, log_rows, start, phase, last_ckpt, adam)
