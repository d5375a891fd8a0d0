"""
Image augmentation on float rasters (ch x H x W in [0, 1]).

Two strategies share one transform chain with different parameters:

    standard  random-resized-crop, color jitter, horizontal flip
    simclr    random-resized-crop, horizontal flip, color jitter (p=0.8), grayscale

augment() is a pure function of (image, policy, seed).
"""

import hashlib
import logging
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from config import AugmentConfig

logger = logging.getLogger(__name__)

LUMA = np.array([0.299, 0.587, 0.114])
CROP_ATTEMPTS = 10


def derive_seed(master: int, stream: str, epoch: int, index: int, view: int) -> int:
    """63-bit seed for one item of one named random stream (fits a signed 64-bit field)."""
    key = f"{master}|{stream}|{epoch}|{index}|{view}".encode("utf-8")
    return int.from_bytes(hashlib.blake2b(key, digest_size=8).digest(), "little") >> 1


@dataclass(frozen=True)
class AugmentationPolicy:
    strategy: str
    crop_scale: Tuple[float, float] = (1.0, 1.0)
    crop_ratio: Tuple[float, float] = (1.0, 1.0)
    flip_p: float = 0.0
    jitter_strength: float = 0.0
    jitter_p: float = 0.0
    grayscale_p: float = 0.0

    @classmethod
    def identity(cls) -> "AugmentationPolicy":
        return cls(strategy="identity")

    @classmethod
    def standard(cls, cfg: AugmentConfig) -> "AugmentationPolicy":
        return cls(
            strategy="standard",
            crop_scale=tuple(cfg.crop_scale_standard),
            crop_ratio=tuple(cfg.crop_ratio),
            flip_p=cfg.flip_p,
            jitter_strength=cfg.jitter_strength,
            jitter_p=cfg.jitter_p_standard,
        )

    @classmethod
    def simclr(cls, cfg: AugmentConfig) -> "AugmentationPolicy":
        return cls(
            strategy="simclr",
            crop_scale=tuple(cfg.crop_scale_simclr),
            crop_ratio=tuple(cfg.crop_ratio),
            flip_p=cfg.flip_p,
            jitter_strength=cfg.jitter_strength,
            jitter_p=cfg.jitter_p_simclr,
            grayscale_p=cfg.grayscale_p,
        )

    @classmethod
    def from_name(cls, name: str, cfg: AugmentConfig) -> "AugmentationPolicy":
        if name == "standard":
            return cls.standard(cfg)
        if name == "simclr":
            return cls.simclr(cfg)
        if name == "identity":
            return cls.identity()
        raise ValueError(f"unknown augmentation strategy '{name}'")


# ============================================================
# Transforms
# ============================================================

def crop_box(height: int, width: int, policy: AugmentationPolicy, rng: np.random.Generator) -> Tuple[float, float, float, float]:
    """(top, left, h, w) of a random area/aspect crop; falls back to the whole image."""
    area = height * width
    log_lo, log_hi = np.log(policy.crop_ratio[0]), np.log(policy.crop_ratio[1])
    for _ in range(CROP_ATTEMPTS):
        target = area * rng.uniform(*policy.crop_scale)
        ratio = np.exp(rng.uniform(log_lo, log_hi))
        w = int(round(np.sqrt(target * ratio)))
        h = int(round(np.sqrt(target / ratio)))
        if 0 < w <= width and 0 < h <= height:
            top = int(rng.integers(0, height - h + 1))
            left = int(rng.integers(0, width - w + 1))
            return top, left, h, w
    logger.debug("random crop fell back to the full image")
    return 0, 0, height, width


def resize_bilinear(image: np.ndarray, top: float, left: float, h: float, w: float, out_h: int, out_w: int) -> np.ndarray:
    """Sample the (top, left, h, w) box onto an out_h x out_w grid with pixel-center alignment."""
    _, height, width = image.shape
    ys = top + (np.arange(out_h) + 0.5) * h / out_h - 0.5
    xs = left + (np.arange(out_w) + 0.5) * w / out_w - 0.5
    ys = np.clip(ys, 0.0, height - 1.0)
    xs = np.clip(xs, 0.0, width - 1.0)
    y0 = np.floor(ys).astype(int)
    x0 = np.floor(xs).astype(int)
    y1 = np.minimum(y0 + 1, height - 1)
    x1 = np.minimum(x0 + 1, width - 1)
    wy = (ys - y0)[:, None]
    wx = (xs - x0)[None, :]
    top_row = image[:, y0][:, :, x0] * (1 - wx) + image[:, y0][:, :, x1] * wx
    bottom_row = image[:, y1][:, :, x0] * (1 - wx) + image[:, y1][:, :, x1] * wx
    return top_row * (1 - wy) + bottom_row * wy


def luminance(image: np.ndarray) -> np.ndarray:
    if image.shape[0] != 3:
        return image.mean(axis=0)
    return np.tensordot(LUMA, image, axes=1)


def color_jitter(image: np.ndarray, strength: float, rng: np.random.Generator) -> np.ndarray:
    """Brightness, contrast and saturation in that order; factors drawn from [1 - s, 1 + s]."""
    lo, hi = max(0.0, 1.0 - strength), 1.0 + strength
    brightness, contrast, saturation = rng.uniform(lo, hi, size=3)
    out = np.clip(image * brightness, 0.0, 1.0)
    mean = luminance(out).mean()
    out = np.clip((out - mean) * contrast + mean, 0.0, 1.0)
    if out.shape[0] == 3:
        gray = luminance(out)[None]
        out = np.clip(gray + (out - gray) * saturation, 0.0, 1.0)
    return out


def grayscale(image: np.ndarray) -> np.ndarray:
    return np.repeat(luminance(image)[None], image.shape[0], axis=0)


def augment(image: np.ndarray, policy: AugmentationPolicy, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    _, height, width = image.shape
    top, left, h, w = crop_box(height, width, policy, rng)
    out = resize_bilinear(image, top, left, h, w, height, width)
    if rng.random() < policy.flip_p:
        out = out[:, :, ::-1]
    if rng.random() < policy.jitter_p:
        out = color_jitter(out, policy.jitter_strength, rng)
    if rng.random() < policy.grayscale_p:
        out = grayscale(out)
    return np.ascontiguousarray(np.clip(out, 0.0, 1.0))


def augment_batch(images: np.ndarray, policy: AugmentationPolicy, seeds) -> np.ndarray:
    return np.stack([augment(image, policy, seed) for image, seed in zip(images, seeds)])
