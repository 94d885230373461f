"""Checkpoint container.

A checkpoint is an uncompressed NumPy ``.npz`` archive holding:

``meta``
    UTF-8 JSON as a ``uint8`` array: ``format_version``, ``model_config``,
    ``train_config``, ``iteration``, ``phase``, ``adam_step``, ``rng_state``.
``param/<name>``
    float32 array for every learnable parameter, keyed by its dotted name.
``adam_m/<name>``, ``adam_v/<name>``
    optimiser moments (only present for training checkpoints).

Array names and the meta keys above are frozen for ``format_version`` 1.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import torch

__all__ = ["FORMAT_VERSION", "save_checkpoint", "load_checkpoint", "Checkpoint"]

FORMAT_VERSION = 1


class Checkpoint(dict):
    """Loaded checkpoint: ``meta`` dict plus ``params``/``adam_m``/``adam_v`` name->tensor maps."""

    @property
    def iteration(self) -> int:
        return self["meta"].get("iteration", 0)


def save_checkpoint(path, params, *, meta=None, adam_m=None, adam_v=None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    meta = dict(meta or {})
    meta["format_version"] = FORMAT_VERSION
    arrays = {"meta": np.frombuffer(json.dumps(meta, sort_keys=True).encode("utf-8"), dtype=np.uint8)}
    for prefix, store in (("param", params), ("adam_m", adam_m), ("adam_v", adam_v)):
        for name, value in (store or {}).items():
            arrays[f"{prefix}/{name}"] = value.detach().cpu().numpy()
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        np.savez(fh, **arrays)
    tmp.replace(path)
    return path


def load_checkpoint(path) -> Checkpoint:
    ckpt = Checkpoint(params={}, adam_m={}, adam_v={})
    with np.load(Path(path), allow_pickle=False) as data:
        meta = json.loads(bytes(data["meta"]).decode("utf-8"))
        if meta.get("format_version") != FORMAT_VERSION:
            raise ValueError(f"unsupported checkpoint format {meta.get('format_version')!r}")
        ckpt["meta"] = meta
        for key in data.files:
            if key == "meta":
                continue
            prefix, name = key.split("/", 1)
            key_map = {"param": "params", "adam_m": "adam_m", "adam_v": "adam_v"}
            ckpt[key_map[prefix]][name] = torch.from_numpy(data[key].copy())
    return ckpt
