from data.splits import DatasetSplit, load_split, save_split
from data.synth import synth_dataset
from data.augment import AugmentationPolicy, augment, augment_batch, derive_seed
from data.episodes import Episode, ImageEpisode, ImageView, episode_images, make_viewed_episode, sample_episode

__all__ = [
    "DatasetSplit",
    "load_split",
    "save_split",
    "synth_dataset",
    "AugmentationPolicy",
    "augment",
    "augment_batch",
    "derive_seed",
    "Episode",
    "ImageEpisode",
    "ImageView",
    "episode_images",
    "make_viewed_episode",
    "sample_episode",
]
