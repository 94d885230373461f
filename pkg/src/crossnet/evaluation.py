"""Evaluation sweeps over angular positions and the metric table they produce."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .data import protocol_pairs
from .metrics import psnr, ssim
from .model import CrossNet, super_resolve
from .tiling import TileSpec, sliding_window_sr

__all__ = ["MetricTable", "evaluate", "CSV_COLUMNS"]

CSV_COLUMNS = ("scene", "lr_pos", "ref_pos", "scale", "psnr", "ssim")


def _pos_str(pos) -> str:
    return f"({pos[0]},{pos[1]})" if isinstance(pos, (tuple, list)) else str(pos)


@dataclass
class MetricTable:
    """Per-(scene, position) metric rows for one method."""

    method: str = "crossnet"
    dataset: str = ""
    scale: int = 8
    rows: list = field(default_factory=list)

    def add(self, scene, lr_pos, ref_pos, psnr_db, ssim_val):
        self.rows.append(
            {"scene": scene, "lr_pos": tuple(lr_pos), "ref_pos": tuple(ref_pos), "scale": self.scale,
             "psnr": float(psnr_db), "ssim": float(ssim_val)}
        )

    def positions(self) -> list:
        seen = []
        for r in self.rows:
            if r["lr_pos"] not in seen:
                seen.append(r["lr_pos"])
        return seen

    def position_means(self) -> list[dict]:
        out = []
        for pos in self.positions():
            sel = [r for r in self.rows if r["lr_pos"] == pos]
            out.append({"lr_pos": pos, "psnr": float(np.mean([r["psnr"] for r in sel])),
                        "ssim": float(np.mean([r["ssim"] for r in sel]))})
        return out

    def mean(self) -> dict:
        return {"psnr": float(np.mean([r["psnr"] for r in self.rows])),
                "ssim": float(np.mean([r["ssim"] for r in self.rows]))}

    def csv_rows(self) -> list[dict]:
        """Per-scene rows followed by one overall mean row."""
        rows = [dict(r, lr_pos=_pos_str(r["lr_pos"]), ref_pos=_pos_str(r["ref_pos"])) for r in self.rows]
        if self.rows:
            ref_positions = {r["ref_pos"] for r in self.rows}
            ref = _pos_str(next(iter(ref_positions))) if len(ref_positions) == 1 else "mixed"
            rows.append({"scene": "mean", "lr_pos": "all", "ref_pos": ref, "scale": self.scale, **self.mean()})
        return rows

    def to_csv(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=CSV_COLUMNS)
            writer.writeheader()
            for row in self.csv_rows():
                writer.writerow({k: (f"{v:.6f}" if isinstance(v, float) else v) for k, v in row.items()})
        return path

    @classmethod
    def from_csv(cls, path, method: str | None = None, dataset: str = "") -> "MetricTable":
        path = Path(path)
        table = cls(method=method or path.stem, dataset=dataset)
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                if row["scene"] == "mean":
                    continue
                table.scale = int(row["scale"])
                table.add(row["scene"], _parse_pos(row["lr_pos"]), _parse_pos(row["ref_pos"]),
                          float(row["psnr"]), float(row["ssim"]))
        return table


def _parse_pos(text: str):
    return tuple(int(v) for v in text.strip("()").split(","))


@torch.no_grad()
def evaluate(
    model: CrossNet,
    dataset,
    positions=None,
    *,
    tiles: TileSpec | None = None,
    method: str = "crossnet",
) -> MetricTable:
    """Run the test protocol (reference (0,0), LR at (i,i)) over every scene of ``dataset``.

    ``dataset`` is anything iterable over :class:`~crossnet.data.LightField`.
    ``tiles`` switches to sliding-window inference.
    """
    model.eval()
    scale = model.cfg.scale_factor
    table = MetricTable(method=method, dataset=getattr(dataset, "split", ""), scale=scale)
    for lf in dataset:
        for pair in protocol_pairs(lf, scale, positions):
            if tiles is not None:
                pred = sliding_window_sr(model, pair.lr, pair.ref, tiles)
            else:
                pred, _ = super_resolve(model, pair.lr, pair.ref)
            pred = pred.clamp(0, 1)
            table.add(lf.scene_id, pair.lr_pos, pair.ref_pos, psnr(pred, pair.hr), ssim(pred, pair.hr))
    return table
