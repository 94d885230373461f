"""CSV tables and PSNR-vs-angular-position plots."""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .evaluation import MetricTable  # noqa: E402

__all__ = ["config_hash", "emit_report"]


def config_hash(config: dict | None) -> str:
    blob = json.dumps(config or {}, sort_keys=True, default=str).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()[:12]


def emit_report(tables: list[MetricTable], out_dir, *, config: dict | None = None) -> list[Path]:
    """Write one CSV per table and one plot per (dataset, scale) group.

    Files are named ``<method>_<dataset>_x<scale>.csv`` and
    ``psnr_<dataset>_x<scale>.png``; the plot title carries the config hash.
    """
    if not tables or any(not t.rows for t in tables):
        raise ValueError("cannot report an empty metric table")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    digest = config_hash(config)
    written = []
    groups: dict[tuple[str, int], list[MetricTable]] = {}
    for t in tables:
        written.append(t.to_csv(out_dir / f"{t.method}_{t.dataset or 'data'}_x{t.scale}.csv"))
        groups.setdefault((t.dataset or "data", t.scale), []).append(t)
    for (dataset, scale), group in sorted(groups.items()):
        fig, ax = plt.subplots(figsize=(5, 3.5))
        for t in group:
            means = t.position_means()
            labels = [f"({p['lr_pos'][0]},{p['lr_pos'][1]})" for p in means]
            ax.plot(range(len(means)), [p["psnr"] for p in means], marker="o", label=t.method)
            ax.set_xticks(range(len(means)), labels)
        ax.set_xlabel("LR angular position")
        ax.set_ylabel("PSNR (dB)")
        ax.set_title(f"{dataset} x{scale}  [cfg {digest}]", fontsize=9)
        ax.legend()
        ax.grid(alpha=0.3)
        fig.tight_layout()
        path = out_dir / f"psnr_{dataset}_x{scale}.png"
        fig.savefig(path, dpi=100)
        plt.close(fig)
        written.append(path)
    return written
