import os

import numpy as np
import pytest

from config import RunConfig
from data.splits import save_split
from data.synth import synth_dataset


def tiny_config(root: str) -> RunConfig:
    """A run small enough to train in seconds: 8x8 images, two stages, 2-way 1-shot episodes."""
    cfg = RunConfig()
    cfg.out_dir = os.path.join(root, "runs")
    cfg.data.root = os.path.join(root, "data")
    cfg.data.train_manifest = os.path.join(root, "data", "train", "manifest.json")
    cfg.data.val_manifest = os.path.join(root, "data", "val", "manifest.json")
    cfg.data.test_manifest = os.path.join(root, "data", "test", "manifest.json")
    cfg.data.synth_classes = 4
    cfg.data.synth_val_classes = 3
    cfg.data.synth_novel_classes = 4
    cfg.data.synth_per_class = 6
    cfg.data.synth_image_size = 8

    cfg.backbone.stage_channels = [4, 8]
    cfg.backbone.input_size = [8, 8]
    cfg.heads.proj_dim = 8

    cfg.episode.ways = 2
    cfg.episode.shots = 1
    cfg.episode.queries = 2

    cfg.pretrain.epochs = 1
    cfg.pretrain.batch_size = 4
    cfg.pretrain.steps_per_epoch = 2
    cfg.pretrain.warmup_epochs = 0

    cfg.metatrain.epochs = 1
    cfg.metatrain.episodes_per_epoch = 2
    cfg.metatrain.val_episodes = 2

    cfg.metatest.episodes = 4
    cfg.metatest.ways = 2
    cfg.metatest.shots = 1
    cfg.metatest.queries = 2
    return cfg


def write_synth_splits(cfg: RunConfig) -> None:
    d = cfg.data
    blocks = [("train", d.synth_classes, 0), ("val", d.synth_val_classes, d.synth_classes),
              ("test", d.synth_novel_classes, d.synth_classes + d.synth_val_classes)]
    for role, n_classes, offset in blocks:
        split = synth_dataset(n_classes, d.synth_per_class, d.synth_image_size, d.synth_difficulty,
                              seed=cfg.seed + offset, class_offset=offset, role=role)
        save_split(split, os.path.join(d.root, role))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_cfg(tmp_path):
    return tiny_config(str(tmp_path))


@pytest.fixture
def synth_cfg(tiny_cfg):
    """tiny_cfg with train/val/test splits already on disk."""
    write_synth_splits(tiny_cfg)
    return tiny_cfg
