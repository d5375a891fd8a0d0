"""
Dataset splits on disk.

A split directory holds manifest.json plus one tensor file per class:

    {
      "split": "train",
      "image_shape": [3, 32, 32],
      "classes": [{"name": "class_000", "label": 0, "file": "class_000.epct", "count": 60}, ...]
    }

Each class file is a count x ch x H x W tensor with values in [0, 1].
"""

import logging
import os
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from autograd.serialization import load_tensor, save_tensor
from errors import ClassTooSmallError, DataError, EmptySplitError, LabelGapError, MissingFileError
from schemas import ClassEntry, SplitManifest, read_record, write_record

logger = logging.getLogger(__name__)

SPLIT_ROLES = ("train", "val", "test")
MANIFEST_NAME = "manifest.json"


@dataclass
class DatasetSplit:
    images: np.ndarray
    labels: np.ndarray
    class_names: List[str]
    role: str = "train"
    _by_class: List[np.ndarray] = field(default_factory=list, repr=False)

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.images.ndim != 4 or len(self.images) != len(self.labels):
            raise DataError(f"split images must be n x ch x H x W with one label each, got {self.images.shape}")
        self._by_class = [np.flatnonzero(self.labels == k) for k in range(len(self.class_names))]

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def n_classes(self) -> int:
        return len(self.class_names)

    @property
    def image_shape(self):
        return tuple(self.images.shape[1:])

    def class_indices(self, label: int) -> np.ndarray:
        return self._by_class[label]

    def counts(self) -> np.ndarray:
        return np.array([len(idx) for idx in self._by_class])


def save_split(split: DatasetSplit, directory: str) -> str:
    """Write class tensors and the manifest; returns the manifest path."""
    os.makedirs(directory, exist_ok=True)
    classes = []
    for label, name in enumerate(split.class_names):
        file_name = f"{name}.epct"
        images = split.images[split.class_indices(label)]
        save_tensor(os.path.join(directory, file_name), images)
        classes.append(ClassEntry(name=name, label=label, file=file_name, count=int(len(images))))
    manifest = SplitManifest(split=split.role, image_shape=list(split.image_shape), classes=classes)
    path = os.path.join(directory, MANIFEST_NAME)
    write_record(path, manifest)
    logger.info(f"Saved {split.role} split: {split.n_classes} classes, {len(split)} images -> {directory}")
    return path


def load_split(manifest_path: str, min_per_class: Optional[int] = None) -> DatasetSplit:
    """Read and validate a split; min_per_class is usually K + Q."""
    if os.path.isdir(manifest_path):
        manifest_path = os.path.join(manifest_path, MANIFEST_NAME)
    if not os.path.exists(manifest_path):
        raise MissingFileError(f"split manifest not found: {manifest_path}")
    manifest = read_record(manifest_path, SplitManifest)

    entries = manifest.classes
    if not entries:
        raise EmptySplitError(f"split manifest {manifest_path} lists no classes")

    labels_declared = [i if entry.label is None else entry.label for i, entry in enumerate(entries)]
    if sorted(labels_declared) != list(range(len(entries))):
        raise LabelGapError(f"{manifest_path}: class labels must be 0..{len(entries) - 1}, got {sorted(labels_declared)}")

    base = os.path.dirname(manifest_path)
    image_shape = tuple(manifest.image_shape)
    names: List[str] = [""] * len(entries)
    images, labels = [], []
    for entry, label in zip(entries, labels_declared):
        path = os.path.join(base, entry.file)
        if not os.path.exists(path):
            raise MissingFileError(f"class '{entry.name}' tensor file not found: {path}")
        block = load_tensor(path)
        if block.ndim != 4 or (image_shape and tuple(block.shape[1:]) != image_shape):
            raise DataError(f"{path}: expected count x {image_shape}, got {block.shape}")
        if entry.count is not None and len(block) != entry.count:
            raise DataError(f"{path}: manifest says {entry.count} images, file holds {len(block)}")
        if min_per_class is not None and len(block) < min_per_class:
            raise ClassTooSmallError(entry.name, len(block), min_per_class)
        names[label] = entry.name
        images.append(block)
        labels.append(np.full(len(block), label, dtype=np.int64))

    split = DatasetSplit(
        images=np.concatenate(images),
        labels=np.concatenate(labels),
        class_names=names,
        role=manifest.split,
    )
    logger.info(f"Loaded {split.role} split from {manifest_path}: {split.n_classes} classes, {len(split)} images")
    return split
