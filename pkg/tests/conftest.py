import pytest
import torch

from crossnet.checkpoint import save_checkpoint
from crossnet.data import Manifest, save_lightfield, synthetic_lightfield, write_manifest
from crossnet.model import CrossNetConfig, build_model, parameter_store

torch.set_num_threads(max(1, torch.get_num_threads()))


@pytest.fixture(scope="session")
def lf_root(tmp_path_factory):
    """Two 8x8-grid synthetic scenes (64x64 views) in the on-disk dataset layout."""
    root = tmp_path_factory.mktemp("lfdata")
    write_manifest(root / "manifest.txt", Manifest({"train": ["s0"], "test": ["s1", "s2"]}, grid=8, crop=None))
    save_lightfield(synthetic_lightfield(64, grid=8, disparity=1, seed=0, scene_id="s0"), root / "train" / "s0")
    for i, sid in enumerate(("s1", "s2"), start=1):
        save_lightfield(synthetic_lightfield(64, grid=8, disparity=1, seed=i, scene_id=sid), root / "test" / sid)
    return root


@pytest.fixture(scope="session")
def x8_checkpoint(tmp_path_factory):
    model = build_model(CrossNetConfig(scale_factor=8), seed=0)
    path = tmp_path_factory.mktemp("ckpt") / "x8.npz"
    return save_checkpoint(path, parameter_store(model), meta={"model_config": model.cfg.to_dict(), "iteration": 0})
