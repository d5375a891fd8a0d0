"""
Procedural class-conditional images.

Each class is one colored shape on a dark background; the class fixes hue and
shape, and `difficulty` scales instance-level jitter in position and size plus
additive pixel noise. difficulty = 0 makes every image of a class identical.
"""

import colorsys
import logging

import numpy as np

from data.splits import DatasetSplit

logger = logging.getLogger(__name__)

SHAPES = ("disc", "square", "diamond", "ring", "cross", "bars")
BACKGROUND = 0.1
GOLDEN_ANGLE = 0.381966


def class_color(label: int) -> np.ndarray:
    hue = (label * GOLDEN_ANGLE) % 1.0
    value = 0.95 if (label // len(SHAPES)) % 2 == 0 else 0.7
    return np.array(colorsys.hsv_to_rgb(hue, 0.85, value))


def shape_mask(shape: str, dx: np.ndarray, dy: np.ndarray, r: float) -> np.ndarray:
    ax, ay = np.abs(dx), np.abs(dy)
    if shape == "disc":
        return dx ** 2 + dy ** 2 < r ** 2
    if shape == "square":
        return np.maximum(ax, ay) < 0.85 * r
    if shape == "diamond":
        return ax + ay < 1.1 * r
    if shape == "ring":
        dist = np.sqrt(dx ** 2 + dy ** 2)
        return (dist < r) & (dist > 0.55 * r)
    if shape == "cross":
        return ((ax < 0.3 * r) & (ay < r)) | ((ay < 0.3 * r) & (ax < r))
    if shape == "bars":
        band = np.floor((dy + r) / (0.5 * r)).astype(int) % 2 == 0
        return (ax < r) & (ay < r) & band
    raise ValueError(f"unknown shape '{shape}'")


def render(label: int, image_size: int, difficulty: float, rng: np.random.Generator) -> np.ndarray:
    coords = (np.arange(image_size) + 0.5) / image_size * 2.0 - 1.0
    yy, xx = np.meshgrid(coords, coords, indexing="ij")
    cx, cy = rng.uniform(-1.0, 1.0, size=2) * 0.25 * difficulty
    radius = 0.5 * (1.0 + rng.uniform(-1.0, 1.0) * 0.3 * difficulty)
    mask = shape_mask(SHAPES[label % len(SHAPES)], xx - cx, yy - cy, radius)

    image = np.full((3, image_size, image_size), BACKGROUND)
    image[:, mask] = class_color(label)[:, None]
    if difficulty > 0:
        image = image + rng.normal(0.0, 0.1 * difficulty, size=image.shape)
    return np.clip(image, 0.0, 1.0)


def synth_dataset(
    n_classes: int,
    per_class: int,
    image_size: int,
    difficulty: float,
    seed: int,
    class_offset: int = 0,
    role: str = "train",
) -> DatasetSplit:
    """n_classes x per_class images; class_offset selects a disjoint block of class identities."""
    rng = np.random.default_rng(seed)
    images = np.empty((n_classes * per_class, 3, image_size, image_size))
    labels = np.repeat(np.arange(n_classes), per_class)
    for i, label in enumerate(labels):
        images[i] = render(int(label) + class_offset, image_size, difficulty, rng)
    names = [f"class_{label + class_offset:03d}" for label in range(n_classes)]
    logger.info(
        f"Synthesized {role} split: {n_classes} classes x {per_class} images, "
        f"{image_size}px, difficulty {difficulty}, seed {seed}"
    )
    return DatasetSplit(images=images, labels=labels, class_names=names, role=role)
