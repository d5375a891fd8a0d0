"""
Golden augmentation outputs.

write_goldens() renders a fixed synthetic image, augments it with both
strategies under fixed seeds and stores the results with their checksums.
check_goldens() re-derives every output and compares bitwise.
"""

import logging
import os
from typing import Dict, Tuple

import numpy as np

from autograd.serialization import file_sha256, load_tensor, save_tensor
from config import AugmentConfig
from data.augment import AugmentationPolicy, augment
from data.synth import synth_dataset
from errors import ChecksumError, FixtureError
from schemas import GoldenEntry, GoldenIndex, read_record, write_record

logger = logging.getLogger(__name__)

GOLDEN_SEEDS = (0, 1, 2)
GOLDEN_STRATEGIES = ("standard", "simclr")
INDEX_NAME = "goldens.json"


def golden_source() -> np.ndarray:
    return synth_dataset(n_classes=1, per_class=1, image_size=16, difficulty=0.2, seed=7).images[0]


def golden_outputs(cfg: AugmentConfig) -> Dict[Tuple[str, int], np.ndarray]:
    image = golden_source()
    return {
        (strategy, seed): augment(image, AugmentationPolicy.from_name(strategy, cfg), seed)
        for strategy in GOLDEN_STRATEGIES
        for seed in GOLDEN_SEEDS
    }


def write_goldens(directory: str, cfg: AugmentConfig = None) -> str:
    cfg = cfg or AugmentConfig()
    os.makedirs(directory, exist_ok=True)
    entries = []
    for (strategy, seed), output in golden_outputs(cfg).items():
        file_name = f"golden_{strategy}_{seed}.epct"
        digest = save_tensor(os.path.join(directory, file_name), output)
        entries.append(GoldenEntry(strategy=strategy, seed=seed, file=file_name, sha256=digest))
    path = os.path.join(directory, INDEX_NAME)
    write_record(path, GoldenIndex(goldens=entries))
    logger.info(f"Wrote {len(entries)} golden augmentation outputs to {directory}")
    return path


def check_goldens(directory: str, cfg: AugmentConfig = None) -> Dict[str, bool]:
    """Map of file name -> bitwise match of the re-derived output."""
    cfg = cfg or AugmentConfig()
    path = os.path.join(directory, INDEX_NAME)
    if not os.path.exists(path):
        raise FixtureError(f"no golden index in {directory}")
    entries = read_record(path, GoldenIndex, FixtureError).goldens
    if not entries:
        raise FixtureError(f"golden index {path} is empty")

    fresh = golden_outputs(cfg)
    results = {}
    for entry in entries:
        file_path = os.path.join(directory, entry.file)
        if not os.path.exists(file_path):
            raise FixtureError(f"golden file missing: {file_path}")
        if file_sha256(file_path) != entry.sha256:
            raise ChecksumError(f"golden file {entry.file} does not match its recorded checksum")
        stored = load_tensor(file_path)
        expected = fresh[(entry.strategy, entry.seed)]
        results[entry.file] = stored.shape == expected.shape and stored.tobytes() == expected.tobytes()
    mismatched = [name for name, ok in results.items() if not ok]
    if mismatched:
        logger.warning(f"Golden mismatch: {', '.join(mismatched)}")
    return results
