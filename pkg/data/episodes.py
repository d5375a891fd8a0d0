"""
M-way K-shot episode sampling and two-view episode construction.

Support and query slots are class-major: slot k*K + j holds the j-th support
image of episode class k, and likewise for queries with Q per class.
"""

import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from config import EpisodeSpec
from data.augment import AugmentationPolicy, augment_batch, derive_seed
from data.splits import DatasetSplit
from errors import InsufficientSamplesError

logger = logging.getLogger(__name__)


@dataclass
class Episode:
    classes: np.ndarray
    support_idx: np.ndarray
    query_idx: np.ndarray
    support_labels: np.ndarray
    query_labels: np.ndarray

    @property
    def ways(self) -> int:
        return len(self.classes)


@dataclass
class ImageView:
    support: np.ndarray
    query: np.ndarray


@dataclass
class ImageEpisode:
    """Two augmented views of one base episode; both share indices and labels slot for slot."""

    episode: Episode
    views: Tuple[ImageView, ImageView]

    @property
    def ways(self) -> int:
        return self.episode.ways


def sample_episode(split: DatasetSplit, spec: EpisodeSpec, seed: Optional[int] = None) -> Episode:
    ways, shots, queries = spec.ways, spec.shots, spec.queries
    if ways > split.n_classes:
        raise InsufficientSamplesError(f"{ways}-way episode needs {ways} classes, split has {split.n_classes}")
    needed = shots + queries
    counts = split.counts()
    eligible = np.flatnonzero(counts >= needed)
    if len(eligible) < ways:
        raise InsufficientSamplesError(
            f"{ways}-way episode needs {ways} classes with >= {needed} images, split has {len(eligible)}"
        )

    rng = np.random.default_rng(spec.seed if seed is None else seed)
    classes = rng.choice(eligible, size=ways, replace=False)
    support, query = [], []
    for label in classes:
        picked = rng.permutation(split.class_indices(int(label)))[:needed]
        support.append(picked[:shots])
        query.append(picked[shots:])
    return Episode(
        classes=classes,
        support_idx=np.concatenate(support),
        query_idx=np.concatenate(query),
        support_labels=np.repeat(np.arange(ways), shots),
        query_labels=np.repeat(np.arange(ways), queries),
    )


def episode_images(split: DatasetSplit, episode: Episode) -> ImageView:
    return ImageView(support=split.images[episode.support_idx], query=split.images[episode.query_idx])


def view_images(split: DatasetSplit, episode: Episode, policy: AugmentationPolicy, seed: int, view: int) -> ImageView:
    n_support = len(episode.support_idx)
    support_seeds = [derive_seed(seed, "episode", 0, slot, view) for slot in range(n_support)]
    query_seeds = [
        derive_seed(seed, "episode", 0, n_support + slot, view) for slot in range(len(episode.query_idx))
    ]
    return ImageView(
        support=augment_batch(split.images[episode.support_idx], policy, support_seeds),
        query=augment_batch(split.images[episode.query_idx], policy, query_seeds),
    )


def make_viewed_episode(
    split: DatasetSplit,
    spec: EpisodeSpec,
    policy_a: AugmentationPolicy,
    policy_b: AugmentationPolicy,
    seed: int,
    episode: Optional[Episode] = None,
) -> ImageEpisode:
    """Sample one base episode (unless given) and augment it independently per view."""
    if episode is None:
        episode = sample_episode(split, spec, seed)
    views = (
        view_images(split, episode, policy_a, seed, view=0),
        view_images(split, episode, policy_b, seed, view=1),
    )
    logger.debug(f"viewed episode seed={seed} classes={episode.classes.tolist()}")
    return ImageEpisode(episode=episode, views=views)
