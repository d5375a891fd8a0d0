"""
Centralized configuration for the contrastive few-shot pipeline.

This module consolidates all settings in one place. Every stage (pretrain,
metatrain, metatest) reads one RunConfig; defaults follow the published
training recipe where it states a value and are declared desk-scale choices
otherwise (see CONFIG.md for per-key provenance).

Config files are plain key-value text:

    # comment
    meta.beta = 0.1
    loss.use_map_map = false
    augment.meta_views = ["standard", "simclr"]

Values are JSON literals; bare words are read as strings.
"""

import copy
import dataclasses
import json
import logging
import os
from dataclasses import dataclass, field
from typing import Any, Dict, Iterable, List, Tuple

from errors import ConfigError

logger = logging.getLogger(__name__)

STAGES = ("pretrain", "metatrain", "metatest")
VIEW_STRATEGIES = ("standard", "simclr")
SCHEDULE_KINDS = ("cosine_with_warmup", "step")


# ============================================================
# Model Settings
# ============================================================

@dataclass
class BackboneConfig:
    """Desk-scale ConvNet standing in for ResNet-12."""

    stage_channels: List[int] = field(default_factory=lambda: [16, 32, 64])
    blocks_per_stage: int = 1
    input_size: List[int] = field(default_factory=lambda: [32, 32])
    in_channels: int = 3
    norm: bool = True
    bn_momentum: float = 0.9


@dataclass
class HeadConfig:
    # D: width of every z-space vector and of the spatial / vector-map heads
    proj_dim: int = 64
    # 0 means 2 * C (C = last backbone stage width)
    proj_hidden: int = 0
    init_scale: float = 1.0


# ============================================================
# Data Settings
# ============================================================

@dataclass
class AugmentConfig:
    crop_scale_standard: List[float] = field(default_factory=lambda: [0.5, 1.0])
    crop_scale_simclr: List[float] = field(default_factory=lambda: [0.2, 1.0])
    crop_ratio: List[float] = field(default_factory=lambda: [3.0 / 4.0, 4.0 / 3.0])
    flip_p: float = 0.5
    jitter_strength: float = 0.4
    jitter_p_standard: float = 1.0
    jitter_p_simclr: float = 0.8
    grayscale_p: float = 0.2
    # view pairs: which strategy builds view 1 and view 2
    pretrain_views: List[str] = field(default_factory=lambda: ["simclr", "simclr"])
    meta_views: List[str] = field(default_factory=lambda: ["standard", "simclr"])


@dataclass
class EpisodeSpec:
    """M-way K-shot episode shape with Q queries per class."""

    ways: int = 5
    shots: int = 1
    queries: int = 15
    seed: int = 0


@dataclass
class DataConfig:
    root: str = "data"
    train_manifest: str = "data/train/manifest.json"
    val_manifest: str = "data/val/manifest.json"
    test_manifest: str = "data/test/manifest.json"
    # synth generator
    synth_classes: int = 8
    synth_novel_classes: int = 8
    # 0 disables the validation split (and best-epoch selection)
    synth_val_classes: int = 5
    synth_per_class: int = 60
    synth_image_size: int = 32
    synth_difficulty: float = 0.2


# ============================================================
# Loss Settings
# ============================================================

@dataclass
class PretrainLossWeights:
    tau1: float = 0.1
    tau2: float = 0.1
    tau3: float = 0.1
    tau4: float = 0.1
    alpha1: float = 1.0
    alpha2: float = 1.0
    alpha3: float = 1.0
    use_ce: bool = True
    use_global_ss: bool = True
    use_local_ss: bool = True
    use_vec_map: bool = True
    use_map_map: bool = True
    use_global_sup: bool = True
    # "sum" follows the written anchor sums; "mean" divides by 2N
    loss_reduction: str = "sum"


@dataclass
class MetaLossConfig:
    tau5: float = 0.1
    beta: float = 0.01
    use_cvet: bool = True
    use_info: bool = True
    bypass_attention: bool = False
    squared_distance: bool = False
    # 0 means FFN width = C
    ffn_width: int = 0


# ============================================================
# Optimization Settings
# ============================================================

@dataclass
class OptimizerConfig:
    momentum: float = 0.9
    weight_decay: float = 5e-4


@dataclass
class ScheduleSpec:
    """Learning-rate schedule.

    cosine_with_warmup counts optimizer steps; step counts epochs.
    warmup_steps / total_steps of 0 are resolved by the training loop.
    """

    kind: str = "cosine_with_warmup"
    base_lr: float = 0.1
    warmup_steps: int = 0
    total_steps: int = 0
    step_size: int = 40
    gamma: float = 0.5


@dataclass
class PretrainConfig:
    epochs: int = 30
    batch_size: int = 32
    warmup_epochs: int = 5
    # 0 means floor(train images / batch_size)
    steps_per_epoch: int = 0
    schedule: ScheduleSpec = field(default_factory=ScheduleSpec)


@dataclass
class MetaTrainConfig:
    epochs: int = 20
    episodes_per_epoch: int = 100
    val_episodes: int = 50
    schedule: ScheduleSpec = field(
        default_factory=lambda: ScheduleSpec(kind="step", base_lr=0.01, step_size=40, gamma=0.5)
    )


@dataclass
class MetaTestConfig:
    episodes: int = 2000
    ways: int = 5
    shots: int = 1
    queries: int = 15
    workers: int = 1


@dataclass
class TrainConfig:
    # checkpoint directory to continue from (same stage)
    resume_from: str = ""
    # checkpoint directory providing encoder + projection head (metatrain / metatest)
    init_checkpoint: str = ""


# ============================================================
# Run Settings
# ============================================================

@dataclass
class RunConfig:
    """Full experiment configuration."""

    stage: str = "pretrain"
    seed: int = 0
    out_dir: str = "runs"

    backbone: BackboneConfig = field(default_factory=BackboneConfig)
    heads: HeadConfig = field(default_factory=HeadConfig)
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    episode: EpisodeSpec = field(default_factory=EpisodeSpec)
    data: DataConfig = field(default_factory=DataConfig)
    loss: PretrainLossWeights = field(default_factory=PretrainLossWeights)
    meta: MetaLossConfig = field(default_factory=MetaLossConfig)
    optim: OptimizerConfig = field(default_factory=OptimizerConfig)
    pretrain: PretrainConfig = field(default_factory=PretrainConfig)
    metatrain: MetaTrainConfig = field(default_factory=MetaTrainConfig)
    metatest: MetaTestConfig = field(default_factory=MetaTestConfig)
    train: TrainConfig = field(default_factory=TrainConfig)

    # ============================================================
    # Helper Methods
    # ============================================================

    def for_shots(self, shots: int) -> "RunConfig":
        """Apply the shot-dependent meta-training defaults (beta and StepLR size)."""
        cfg = copy.deepcopy(self)
        cfg.episode.shots = shots
        cfg.metatest.shots = shots
        cfg.meta.beta = 0.01 if shots == 1 else 0.1
        cfg.metatrain.schedule.step_size = 40 if shots == 1 else 50
        return cfg

    def validate(self, check_files: bool = False) -> None:
        if self.stage not in STAGES:
            raise ConfigError(f"stage must be one of {STAGES}, got '{self.stage}'")
        for key in ("tau1", "tau2", "tau3", "tau4"):
            if getattr(self.loss, key) <= 0:
                raise ConfigError(f"loss.{key} must be > 0")
        for key in ("alpha1", "alpha2", "alpha3"):
            if getattr(self.loss, key) < 0:
                raise ConfigError(f"loss.{key} must be >= 0")
        if self.loss.loss_reduction not in ("sum", "mean"):
            raise ConfigError(f"loss.loss_reduction must be 'sum' or 'mean', got '{self.loss.loss_reduction}'")
        if self.meta.tau5 <= 0:
            raise ConfigError("meta.tau5 must be > 0")
        if self.meta.beta < 0:
            raise ConfigError("meta.beta must be >= 0")
        for section in ("pretrain", "metatrain"):
            schedule = getattr(self, section).schedule
            if schedule.kind not in SCHEDULE_KINDS:
                raise ConfigError(f"{section}.schedule.kind must be one of {SCHEDULE_KINDS}")
            if schedule.base_lr <= 0:
                raise ConfigError(f"{section}.schedule.base_lr must be > 0")
        for key in ("pretrain_views", "meta_views"):
            views = getattr(self.augment, key)
            if len(views) != 2 or any(v not in VIEW_STRATEGIES for v in views):
                raise ConfigError(f"augment.{key} must name two strategies from {VIEW_STRATEGIES}")
        if self.episode.ways < 1 or self.episode.shots < 1 or self.episode.queries < 1:
            raise ConfigError("episode.ways, episode.shots and episode.queries must be >= 1")
        if self.pretrain.batch_size < 1:
            raise ConfigError("pretrain.batch_size must be >= 1")
        if min(self.backbone.input_size) < 2 ** len(self.backbone.stage_channels) * 2:
            raise ConfigError("backbone.input_size too small: final feature map must be at least 2x2")
        if check_files:
            required = {
                "pretrain": ["data.train_manifest"],
                "metatrain": ["data.train_manifest"],
                "metatest": ["data.test_manifest"],
            }[self.stage]
            for key in required:
                path = get_value(self, key)
                if not os.path.exists(path):
                    raise ConfigError(f"{key} points to a missing file: {path}")


# ============================================================
# Key-value I/O
# ============================================================

def iter_items(obj: Any, prefix: str = "") -> Iterable[Tuple[str, Any]]:
    for f in dataclasses.fields(obj):
        value = getattr(obj, f.name)
        key = f"{prefix}{f.name}"
        if dataclasses.is_dataclass(value):
            yield from iter_items(value, key + ".")
        else:
            yield key, value


def to_dict(cfg: RunConfig) -> Dict[str, Any]:
    return dict(iter_items(cfg))


def dumps(cfg: RunConfig) -> str:
    return "".join(f"{key} = {json.dumps(value)}\n" for key, value in iter_items(cfg))


def save_config(cfg: RunConfig, path: str) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write(dumps(cfg))


def _resolve(cfg: RunConfig, key: str) -> Tuple[Any, str]:
    parts = key.split(".")
    target = cfg
    for part in parts[:-1]:
        if not dataclasses.is_dataclass(target) or not hasattr(target, part):
            raise ConfigError(f"unknown config key '{key}'")
        target = getattr(target, part)
    leaf = parts[-1]
    names = {f.name for f in dataclasses.fields(target)} if dataclasses.is_dataclass(target) else set()
    if leaf not in names or dataclasses.is_dataclass(getattr(target, leaf)):
        raise ConfigError(f"unknown config key '{key}'")
    return target, leaf


def get_value(cfg: RunConfig, key: str) -> Any:
    target, leaf = _resolve(cfg, key)
    return getattr(target, leaf)


def _parse_literal(text: str) -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _coerce(key: str, current: Any, raw: Any) -> Any:
    if isinstance(current, bool):
        if isinstance(raw, bool):
            return raw
        if isinstance(raw, str) and raw.lower() in ("true", "false", "1", "0", "yes", "no"):
            return raw.lower() in ("true", "1", "yes")
        raise ConfigError(f"config key '{key}' expects a boolean, got {raw!r}")
    if isinstance(current, int):
        if isinstance(raw, bool) or not isinstance(raw, (int, float)) or float(raw) != int(raw):
            raise ConfigError(f"config key '{key}' expects an integer, got {raw!r}")
        return int(raw)
    if isinstance(current, float):
        if isinstance(raw, bool) or not isinstance(raw, (int, float)):
            raise ConfigError(f"config key '{key}' expects a number, got {raw!r}")
        return float(raw)
    if isinstance(current, list):
        if not isinstance(raw, list):
            raise ConfigError(f"config key '{key}' expects a list, got {raw!r}")
        return list(raw)
    return str(raw)


def set_value(cfg: RunConfig, key: str, raw: Any) -> None:
    target, leaf = _resolve(cfg, key)
    setattr(target, leaf, _coerce(key, getattr(target, leaf), raw))


def apply_overrides(cfg: RunConfig, overrides: Iterable[str]) -> RunConfig:
    """Apply `key=value` strings (dotted keys) in order."""
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override must look like key=value, got '{item}'")
        key, text = item.split("=", 1)
        set_value(cfg, key.strip(), _parse_literal(text.strip()))
    return cfg


def loads(text: str, base: RunConfig = None) -> RunConfig:
    cfg = base if base is not None else RunConfig()
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected 'key = value', got '{stripped}'")
        key, text_value = stripped.split("=", 1)
        set_value(cfg, key.strip(), _parse_literal(text_value.strip()))
    return cfg


def load_config(path: str, base: RunConfig = None) -> RunConfig:
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    with open(path, "r", encoding="utf-8") as f:
        cfg = loads(f.read(), base)
    logger.info(f"Loaded config from {path}")
    return cfg


# Global config instance
config = RunConfig()
