"""Light-field ingestion, (LR, REF, HR) pair generation, and augmentation.

On-disk layout::

    <root>/manifest.txt
    <root>/<split>/<scene_id>/view_<row>_<col>.png

``manifest.txt`` lists scene ids under ``[train]`` / ``[test]`` section
headers and may carry ``key = value`` lines before the first section
(``grid``, ``crop``, ``split_seed``).
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import torch
from PIL import Image

from .imaging import DomainError, resize_bicubic, shift_image

__all__ = [
    "LightField",
    "SamplePair",
    "Manifest",
    "LightFieldDataset",
    "read_image",
    "write_image",
    "read_manifest",
    "write_manifest",
    "load_lightfield",
    "save_lightfield",
    "make_lr",
    "sample_training_pair",
    "protocol_pairs",
    "augment_parallax",
    "synthetic_texture",
    "synthetic_lightfield",
]

LYTRO_CROP = (320, 512)
_VIEW_RE = re.compile(r"view_(\d+)_(\d+)\.png$")


def read_image(path) -> torch.Tensor:
    """Read an 8-bit image as a float32 ``(3, H, W)`` tensor in [0, 1]."""
    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.float32) / 255.0
    return torch.from_numpy(arr.transpose(2, 0, 1).copy())


def write_image(path, img) -> None:
    """Write a ``(3, H, W)`` or ``(H, W, 3)`` image in [0, 1] as 8-bit PNG (clamped)."""
    arr = img.detach().cpu().numpy() if isinstance(img, torch.Tensor) else np.asarray(img)
    if arr.ndim == 3 and arr.shape[0] in (1, 3) and arr.shape[-1] not in (1, 3):
        arr = arr.transpose(1, 2, 0)
    arr = np.clip(np.rint(np.clip(arr, 0.0, 1.0) * 255.0), 0, 255).astype(np.uint8)
    if arr.ndim == 3 and arr.shape[-1] == 1:
        arr = arr[..., 0]
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(arr).save(path)


@dataclass
class LightField:
    """Square angular grid of same-sized views, ``views[row][col]`` is ``(3, H, W)``."""

    scene_id: str
    views: torch.Tensor  # (G, G, 3, H, W)

    def __post_init__(self):
        if self.views.dim() != 5 or self.views.shape[0] != self.views.shape[1]:
            raise DomainError(f"views must be (G, G, C, H, W), got {tuple(self.views.shape)}")

    @property
    def grid(self) -> int:
        return self.views.shape[0]

    @property
    def size(self) -> tuple[int, int]:
        return tuple(self.views.shape[-2:])

    def view(self, pos) -> torch.Tensor:
        r, c = pos
        return self.views[r, c]


@dataclass
class SamplePair:
    lr: torch.Tensor
    ref: torch.Tensor
    hr: torch.Tensor
    lr_pos: tuple[int, int]
    ref_pos: tuple[int, int]
    scale: int
    scene_id: str = ""

    def __post_init__(self):
        if self.hr.shape != self.ref.shape:
            raise DomainError("hr and ref must share a size")
        h, w = self.hr.shape[-2:]
        if (self.lr.shape[-2] * self.scale, self.lr.shape[-1] * self.scale) != (h, w):
            raise DomainError(f"lr {tuple(self.lr.shape[-2:])} x{self.scale} != hr {(h, w)}")


@dataclass
class Manifest:
    splits: dict[str, list[str]] = field(default_factory=dict)
    grid: int = 8
    crop: tuple[int, int] | None = LYTRO_CROP
    split_seed: int | None = None


def read_manifest(path) -> Manifest:
    m = Manifest()
    section = None
    for raw in Path(path).read_text(encoding="utf-8").splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            m.splits.setdefault(section, [])
        elif section is None and "=" in line:
            key, value = (s.strip() for s in line.split("=", 1))
            if key == "grid":
                m.grid = int(value)
            elif key == "crop":
                m.crop = None if value in ("none", "auto") else tuple(int(v) for v in value.split("x"))
            elif key == "split_seed":
                m.split_seed = int(value)
            else:
                raise DomainError(f"unknown manifest key {key!r}")
        elif section is None:
            raise DomainError(f"scene id {line!r} outside a [split] section")
        else:
            m.splits[section].append(line)
    return m


def write_manifest(path, manifest: Manifest) -> None:
    lines = [f"grid = {manifest.grid}"]
    lines.append("crop = auto" if manifest.crop is None else f"crop = {manifest.crop[0]}x{manifest.crop[1]}")
    if manifest.split_seed is not None:
        lines.append(f"split_seed = {manifest.split_seed}")
    for name, scenes in manifest.splits.items():
        lines.append(f"[{name}]")
        lines.extend(scenes)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _center_crop(views: torch.Tensor, crop) -> torch.Tensor:
    h, w = views.shape[-2:]
    if crop is None or crop[0] > h or crop[1] > w:
        ch, cw = h - h % 32, w - w % 32
    else:
        ch, cw = crop
    if ch < 32 or cw < 32:
        raise DomainError(f"views of {h}x{w} are too small for a 32-aligned crop")
    top, left = (h - ch) // 2, (w - cw) // 2
    return views[..., top : top + ch, left : left + cw]


def load_lightfield(scene_dir, scene_id: str | None = None, *, grid: int = 8, crop=LYTRO_CROP) -> LightField:
    """Load a scene directory of ``view_<r>_<c>.png`` files.

    A larger complete grid is reduced to its central ``grid x grid`` block.
    Views are centre-cropped to ``crop`` (or, when the views are smaller, to
    the largest multiple-of-32 size).
    """
    scene_dir = Path(scene_dir)
    scene_id = scene_id or scene_dir.name
    found = set()
    for p in scene_dir.glob("view_*_*.png"):
        m = _VIEW_RE.search(p.name)
        if m:
            found.add((int(m.group(1)), int(m.group(2))))
    if found:
        k = max(max(r, c) for r, c in found) + 1
        if k < grid and len(found) == k * k:
            raise DomainError(f"scene {scene_id!r} has a {k}x{k} angular grid, expected {grid}x{grid}")
        offset = (k - grid) // 2 if len(found) == k * k and k > grid else 0
    else:
        offset = 0
    rows = []
    for r in range(grid):
        row = []
        for c in range(grid):
            rr, cc = r + offset, c + offset
            path = scene_dir / f"view_{rr}_{cc}.png"
            if not path.exists():
                raise FileNotFoundError(f"scene {scene_id!r}: missing view ({rr}, {cc}) at {path}")
            row.append(read_image(path))
        rows.append(torch.stack(row))
    views = torch.stack(rows)
    return LightField(scene_id, _center_crop(views, crop))


def save_lightfield(lf: LightField, scene_dir) -> None:
    scene_dir = Path(scene_dir)
    scene_dir.mkdir(parents=True, exist_ok=True)
    for r in range(lf.grid):
        for c in range(lf.grid):
            write_image(scene_dir / f"view_{r}_{c}.png", lf.views[r, c])


class LightFieldDataset:
    """Scenes of one split under a dataset root, loaded on demand.

    Every scene read is appended to :attr:`access_log` as ``(split, scene_id)``.
    """

    def __init__(self, root, split: str = "train", *, cache: bool = True):
        self.root = Path(root)
        self.split = split
        self.manifest = read_manifest(self.root / "manifest.txt")
        if split not in self.manifest.splits:
            raise DomainError(f"split {split!r} not in manifest (have {sorted(self.manifest.splits)})")
        self.scene_ids = list(self.manifest.splits[split])
        self.access_log: list[tuple[str, str]] = []
        self._cache = {} if cache else None

    def __len__(self):
        return len(self.scene_ids)

    def load(self, scene_id: str) -> LightField:
        if scene_id not in self.scene_ids:
            raise DomainError(f"scene {scene_id!r} is not in split {self.split!r}")
        self.access_log.append((self.split, scene_id))
        if self._cache is not None and scene_id in self._cache:
            return self._cache[scene_id]
        lf = load_lightfield(
            self.root / self.split / scene_id, scene_id, grid=self.manifest.grid, crop=self.manifest.crop
        )
        if self._cache is not None:
            self._cache[scene_id] = lf
        return lf

    def __iter__(self):
        for sid in self.scene_ids:
            yield self.load(sid)


def make_lr(hr: torch.Tensor, scale: int) -> torch.Tensor:
    """Bicubic, antialiased downsampling by an integer ``scale``."""
    h, w = hr.shape[-2:]
    if h % scale or w % scale:
        raise DomainError(f"{h}x{w} is not divisible by scale {scale}")
    return resize_bicubic(hr, 1 / scale)


def sample_training_pair(lf: LightField, scale: int, rng: np.random.Generator) -> SamplePair:
    g = lf.grid
    lr_pos = (int(rng.integers(g)), int(rng.integers(g)))
    ref_pos = (int(rng.integers(g)), int(rng.integers(g)))
    hr = lf.view(lr_pos)
    return SamplePair(make_lr(hr, scale), lf.view(ref_pos), hr, lr_pos, ref_pos, scale, lf.scene_id)


def protocol_pairs(lf: LightField, scale: int, positions=None) -> list[SamplePair]:
    """Evaluation pairs: reference at (0, 0), LR at (i, i) for i = 1..grid-1."""
    positions = positions or [(i, i) for i in range(1, lf.grid)]
    ref = lf.view((0, 0))
    out = []
    for pos in positions:
        hr = lf.view(pos)
        out.append(SamplePair(make_lr(hr, scale), ref, hr, tuple(pos), (0, 0), scale, lf.scene_id))
    return out


def augment_parallax(pair: SamplePair, rng: np.random.Generator, max_offset: int = 15, *, offset=None) -> SamplePair:
    """Translate the reference by a random integer offset in [-max_offset, max_offset]^2."""
    if offset is None:
        dx, dy = (int(v) for v in rng.integers(-max_offset, max_offset + 1, size=2))
    else:
        dx, dy = offset
    return replace(pair, ref=shift_image(pair.ref, dx, dy))


def synthetic_texture(size: int = 96, seed: int = 0, channels: int = 3) -> torch.Tensor:
    """Band-limited random colour texture in [0, 1], periodic so shifts stay in-distribution."""
    rng = np.random.default_rng(seed)
    fy = np.fft.fftfreq(size)[:, None]
    fx = np.fft.fftfreq(size)[None, :]
    radius = np.hypot(fy, fx)
    envelope = 1.0 / np.maximum(radius, 1.0 / size) ** 1.2
    envelope[radius > 0.35] = 0.0
    out = []
    for _ in range(channels):
        phase = rng.uniform(0, 2 * np.pi, (size, size))
        field_ = np.real(np.fft.ifft2(envelope * np.exp(1j * phase)))
        field_ = (field_ - field_.mean()) / (field_.std() + 1e-12)
        out.append(0.5 + 0.17 * field_)
    return torch.from_numpy(np.clip(np.stack(out), 0.0, 1.0).astype(np.float32))


def synthetic_lightfield(
    size: int = 96, grid: int = 3, disparity: int = 1, seed: int = 0, scene_id: str | None = None
) -> LightField:
    """Fronto-parallel scene: view (r, c) is the base texture rolled by ``disparity * (c, r)``."""
    base = synthetic_texture(size + 2 * disparity * grid, seed)
    views = torch.empty(grid, grid, 3, size, size)
    for r in range(grid):
        for c in range(grid):
            shifted = torch.roll(base, shifts=(disparity * r, disparity * c), dims=(-2, -1))
            views[r, c] = shifted[..., :size, :size]
    return LightField(scene_id or f"synthetic{seed}", views)
