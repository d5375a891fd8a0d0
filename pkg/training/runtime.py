"""Shared pieces of the training and evaluation loops."""

import logging
import os
from typing import Optional, Tuple

import numpy as np

from autograd import Tensor
from config import RunConfig
from data.augment import derive_seed
from data.episodes import ImageEpisode, ImageView
from errors import NumericAbort
from losses.contrastive import LossBreakdown
from losses.episodic import EpisodeView, ViewedEpisode
from models.attention import AttnModule
from models.encoder import FewShotModel
from training.checkpoint import Checkpoint, load_checkpoint

logger = logging.getLogger(__name__)


def build_model(cfg: RunConfig, n_base_classes: int, with_attention: bool) -> FewShotModel:
    init_seed = derive_seed(cfg.seed, "init", 0, 0, 0)
    model = FewShotModel(cfg.backbone, cfg.heads, n_base_classes, seed=init_seed)
    if with_attention:
        rng = np.random.default_rng(derive_seed(cfg.seed, "init-attention", 0, 0, 0))
        model.attention = AttnModule(model.channels, rng, ffn_width=cfg.meta.ffn_width)
    return model


def restore_model(model: FewShotModel, ckpt: Checkpoint, strict: bool) -> None:
    loaded = model.load_state_dict(ckpt.model_state(), strict=strict)
    logger.info(f"Restored {len(loaded)} tensors into the model")


def model_from_checkpoint(cfg: RunConfig, directory: str) -> Tuple[FewShotModel, Checkpoint]:
    """Rebuild a model with the shapes recorded in a checkpoint and load it."""
    ckpt = load_checkpoint(directory)
    n_classes = int(ckpt.metadata.get("n_base_classes", 0)) or ckpt.params["classifier.fc.bias"].shape[0]
    has_attention = any(name.startswith("attention.") for name in ckpt.params)
    model = build_model(cfg, n_classes, with_attention=has_attention)
    restore_model(model, ckpt, strict=True)
    return model, ckpt


def check_finite(breakdown: LossBreakdown, step: int) -> None:
    bad = breakdown.first_non_finite()
    if bad is not None:
        value = breakdown.as_floats()[bad]
        logger.error(f"Non-finite loss term '{bad}'={value} at step {step}")
        raise NumericAbort(bad, value, step)


def embed_images(model: FewShotModel, images: np.ndarray) -> Tuple[Tensor, Tensor, Tensor]:
    """(maps, h, z) for a raw image batch."""
    maps, h = model.encode(Tensor(images))
    return maps, h, model.project(h)


def embed_episode(model: FewShotModel, episode: ImageEpisode, with_z: bool = True) -> ViewedEpisode:
    """One forward pass over both views' support and query images."""
    views = episode.views
    sizes = [len(views[0].support), len(views[0].query), len(views[1].support), len(views[1].query)]
    images = np.concatenate([views[0].support, views[0].query, views[1].support, views[1].query])
    maps, h = model.encode(Tensor(images))
    z = model.project(h) if with_z else None

    bounds = np.cumsum([0] + sizes)
    parts_h = [h[bounds[i]:bounds[i + 1]] for i in range(4)]
    parts_z = [z[bounds[i]:bounds[i + 1]] if z is not None else None for i in range(4)]
    base = episode.episode
    embedded = tuple(
        EpisodeView(
            support_h=parts_h[2 * v],
            support_labels=base.support_labels,
            query_h=parts_h[2 * v + 1],
            query_labels=base.query_labels,
            support_z=parts_z[2 * v],
            query_z=parts_z[2 * v + 1],
        )
        for v in range(2)
    )
    return ViewedEpisode(views=embedded, ways=episode.ways)


def embed_view(model: FewShotModel, view: ImageView, support_labels, query_labels) -> EpisodeView:
    images = np.concatenate([view.support, view.query])
    _, h = model.encode(Tensor(images))
    n_support = len(view.support)
    return EpisodeView(
        support_h=h[:n_support],
        support_labels=support_labels,
        query_h=h[n_support:],
        query_labels=query_labels,
    )


def optional_split_path(path: str) -> Optional[str]:
    return path if path and os.path.exists(path) else None
