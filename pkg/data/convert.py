"""
Offline conversion of an image folder into a split.

    root/
        <class name>/
            <image>.png | .jpg | ...

Every image is converted to RGB, resized with bilinear interpolation and
scaled to [0, 1]. Unreadable files are skipped with a warning.
"""

import logging
import os
from typing import List, Tuple

import numpy as np
from PIL import Image

from data.splits import DatasetSplit, save_split
from errors import EmptySplitError, MissingFileError

logger = logging.getLogger(__name__)

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".bmp", ".gif", ".webp")


def load_image(path: str, size: Tuple[int, int]) -> np.ndarray:
    """Read one image as a 3 x H x W float array; size is (H, W)."""
    with Image.open(path) as image:
        if image.mode != "RGB":
            image = image.convert("RGB")
        image = image.resize((size[1], size[0]), Image.BILINEAR)
        array = np.asarray(image, dtype=np.float64) / 255.0
    return array.transpose(2, 0, 1)


def convert_folder(src_root: str, out_dir: str, size: Tuple[int, int], role: str = "train") -> str:
    """Convert src_root/<class>/<image> into a split directory; returns the manifest path."""
    if not os.path.isdir(src_root):
        raise MissingFileError(f"image folder not found: {src_root}")

    class_names = sorted(d for d in os.listdir(src_root) if os.path.isdir(os.path.join(src_root, d)))
    images: List[np.ndarray] = []
    labels: List[int] = []
    kept: List[str] = []
    for name in class_names:
        folder = os.path.join(src_root, name)
        files = sorted(f for f in os.listdir(folder) if f.lower().endswith(IMAGE_SUFFIXES))
        loaded = []
        for file_name in files:
            try:
                loaded.append(load_image(os.path.join(folder, file_name), size))
            except (OSError, ValueError) as e:
                logger.warning(f"Skipping unreadable image {file_name} in {name}: {e}")
        if not loaded:
            logger.warning(f"Class folder '{name}' has no readable images, skipped")
            continue
        images.extend(loaded)
        labels.extend([len(kept)] * len(loaded))
        kept.append(name)

    if not kept:
        raise EmptySplitError(f"no class folders with images under {src_root}")
    split = DatasetSplit(images=np.stack(images), labels=np.array(labels), class_names=kept, role=role)
    return save_split(split, out_dir)
