"""
Record models for every JSON file the pipeline reads back: split manifests,
checkpoint manifests, metrics lines, meta-test reports and the fixture and
golden indexes.

read_record() loads a file and validates it; schema problems surface as a
DataError subclass so the CLI exits with the data-error code.
"""

import json
import math
import os
from typing import Any, Dict, List, Literal, Optional, Type, TypeVar

from pydantic import BaseModel, ValidationError

from errors import DataError, ManifestError, MissingFileError

M = TypeVar("M", bound=BaseModel)


# ============================================================
# Dataset splits
# ============================================================

class ClassEntry(BaseModel):
    name: str
    file: str
    label: Optional[int] = None
    count: Optional[int] = None


class SplitManifest(BaseModel):
    split: str = "train"
    image_shape: List[int] = []
    classes: List[ClassEntry] = []


# ============================================================
# Checkpoints
# ============================================================

class TensorEntry(BaseModel):
    name: str
    shape: List[int]
    role: Literal["param", "buffer", "optimizer"]
    file: str
    sha256: str


class CheckpointManifest(BaseModel):
    metadata: Dict[str, Any] = {}
    tensors: List[TensorEntry] = []


# ============================================================
# Training records
# ============================================================

class MetricsRecord(BaseModel):
    step: int
    epoch: int
    stage: str
    lr: float
    losses: Dict[str, float] = {}
    wall_ms: float = 0.0
    seed: int = 0

    def is_finite(self) -> bool:
        return math.isfinite(self.lr) and all(math.isfinite(v) for v in self.losses.values())


class AccuracyReport(BaseModel):
    mean: float
    ci95: float
    episodes: int
    ways: int
    shots: int
    queries: int
    checkpoint: str = ""
    accuracies: List[float] = []

    def summary(self) -> str:
        return f"{self.ways}-way {self.shots}-shot: {100 * self.mean:.2f} +- {100 * self.ci95:.2f} % over {self.episodes} episodes"


# ============================================================
# Fixture and golden indexes
# ============================================================

class FixtureFile(BaseModel):
    name: str
    file: str
    sha256: str


class FixtureIndex(BaseModel):
    seed: int = 0
    taus: Dict[str, float]
    ways: int
    files: List[FixtureFile] = []


class GoldenEntry(BaseModel):
    strategy: str
    seed: int
    file: str
    sha256: str


class GoldenIndex(BaseModel):
    goldens: List[GoldenEntry] = []


def describe(exc: ValidationError) -> str:
    """One line per problem: `classes.0.file: Field required`."""
    return "; ".join(
        f"{'.'.join(str(part) for part in err['loc']) or '<root>'}: {err['msg']}" for err in exc.errors()
    )


def parse_record(model: Type[M], payload: Any, source: str, error: Type[DataError] = ManifestError) -> M:
    try:
        return model.model_validate(payload)
    except ValidationError as e:
        raise error(f"{source}: malformed {model.__name__} ({describe(e)})") from e


def read_record(path: str, model: Type[M], error: Type[DataError] = ManifestError) -> M:
    if not os.path.exists(path):
        raise MissingFileError(f"{model.__name__} file not found: {path}")
    with open(path, "r", encoding="utf-8") as f:
        try:
            payload = json.load(f)
        except json.JSONDecodeError as e:
            raise error(f"{path}: invalid JSON ({e})") from e
    return parse_record(model, payload, path, error)


def write_record(path: str, record: BaseModel, indent: Optional[int] = 2) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(record.model_dump(), f, indent=indent, sort_keys=True)
