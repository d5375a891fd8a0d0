"""
Checkpoint directories.

    <dir>/manifest.json   {"metadata": {...}, "tensors": [{name, shape, role, file, sha256}, ...]}
    <dir>/<role>__<name>.epct

Roles: "param" (trainable weights), "buffer" (batch-norm running stats) and
"optimizer" (momentum buffers, keyed by parameter name).
"""

import logging
import os
import shutil
from dataclasses import dataclass, field
from typing import Any, Dict, Optional

import numpy as np

from autograd.serialization import file_sha256, load_tensor, save_tensor
from errors import ChecksumError, MissingFileError
from schemas import CheckpointManifest, TensorEntry, read_record, write_record

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"


@dataclass
class Checkpoint:
    params: Dict[str, np.ndarray] = field(default_factory=dict)
    buffers: Dict[str, np.ndarray] = field(default_factory=dict)
    optimizer: Dict[str, np.ndarray] = field(default_factory=dict)
    metadata: Dict[str, Any] = field(default_factory=dict)

    def model_state(self) -> Dict[str, np.ndarray]:
        return {**self.params, **self.buffers}


def save_checkpoint(directory: str, model, optimizer=None, metadata: Optional[Dict[str, Any]] = None) -> str:
    os.makedirs(directory, exist_ok=True)
    buffer_names = {name for name, _ in model.named_buffers()}
    sections = [("param" if name not in buffer_names else "buffer", name, value)
                for name, value in model.state_dict().items()]
    if optimizer is not None:
        sections += [("optimizer", name, value) for name, value in optimizer.state_dict().items()]

    entries = []
    for role, name, value in sections:
        file_name = f"{role}__{name}.epct"
        digest = save_tensor(os.path.join(directory, file_name), value)
        entries.append(TensorEntry(name=name, shape=list(value.shape), role=role, file=file_name, sha256=digest))

    write_record(os.path.join(directory, MANIFEST_NAME), CheckpointManifest(metadata=metadata or {}, tensors=entries))
    logger.debug(f"Saved checkpoint with {len(entries)} tensors to {directory}")
    return directory


def load_checkpoint(directory: str, verify: bool = True) -> Checkpoint:
    path = os.path.join(directory, MANIFEST_NAME)
    if not os.path.exists(path):
        raise MissingFileError(f"checkpoint manifest not found: {path}")
    manifest = read_record(path, CheckpointManifest)

    ckpt = Checkpoint(metadata=manifest.metadata)
    by_role = {"param": ckpt.params, "buffer": ckpt.buffers, "optimizer": ckpt.optimizer}
    for entry in manifest.tensors:
        file_path = os.path.join(directory, entry.file)
        if not os.path.exists(file_path):
            raise MissingFileError(f"checkpoint tensor not found: {file_path}")
        if verify and file_sha256(file_path) != entry.sha256:
            raise ChecksumError(f"checkpoint tensor {entry.file} does not match its recorded checksum")
        by_role[entry.role][entry.name] = load_tensor(file_path)
    return ckpt


def copy_checkpoint(src: str, dst: str) -> None:
    if os.path.exists(dst):
        shutil.rmtree(dst)
    shutil.copytree(src, dst)


def resolve_checkpoint(path: str) -> str:
    """A run directory resolves to best/, then the latest epoch checkpoint; a checkpoint directory to itself."""
    best = os.path.join(path, "best")
    if os.path.exists(os.path.join(best, MANIFEST_NAME)):
        return best
    if os.path.exists(os.path.join(path, MANIFEST_NAME)):
        return path
    epochs_dir = os.path.join(path, "checkpoints")
    if os.path.isdir(epochs_dir):
        epochs = sorted(d for d in os.listdir(epochs_dir) if d.startswith("epoch_"))
        if epochs:
            return os.path.join(epochs_dir, epochs[-1])
    raise MissingFileError(f"no checkpoint found under {path}")
