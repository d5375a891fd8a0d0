"""
Feature extractor and the heads that read its output.

The backbone is a small ConvNet (conv3x3 -> batch-norm -> ReLU per block,
2x2 max-pool after each stage). Heads operate either on the pooled global
vector (B x C) or position-wise on the flattened map (B x HW x C).
"""

import logging
from typing import Optional, Tuple

import numpy as np

from autograd import Tensor, global_avg_pool, max_pool2d
from config import BackboneConfig, HeadConfig
from errors import ShapeError
from models.layers import BatchNorm2d, Conv2d, Linear, Module

logger = logging.getLogger(__name__)


def flatten_positions(maps: Tensor) -> Tensor:
    """B x C x H x W -> B x HW x C (row-major over positions)."""
    batch, channels, height, width = maps.shape
    return maps.reshape(batch, channels, height * width).transpose(0, 2, 1)


class ConvBlock(Module):
    def __init__(self, in_ch: int, out_ch: int, rng: np.random.Generator, norm: bool, momentum: float):
        super().__init__()
        self.conv = Conv2d(in_ch, out_ch, 3, rng, pad=1)
        self.bn = BatchNorm2d(out_ch, momentum=momentum) if norm else None

    def forward(self, x: Tensor) -> Tensor:
        out = self.conv(x)
        if self.bn is not None:
            out = self.bn(out)
        return out.relu()


class Backbone(Module):
    """f_phi: images -> feature maps."""

    def __init__(self, cfg: BackboneConfig, rng: np.random.Generator):
        super().__init__()
        self.cfg = cfg
        blocks = []
        in_ch = cfg.in_channels
        for width in cfg.stage_channels:
            for _ in range(cfg.blocks_per_stage):
                blocks.append(ConvBlock(in_ch, width, rng, cfg.norm, cfg.bn_momentum))
                in_ch = width
        self.blocks = blocks
        self.out_channels = in_ch

        height, width = cfg.input_size
        for _ in cfg.stage_channels:
            height, width = height // 2, width // 2
        if height * width < 2:
            raise ShapeError(
                f"input size {tuple(cfg.input_size)} with {len(cfg.stage_channels)} stages leaves a "
                f"{height}x{width} map; local losses need at least two positions"
            )
        self.map_size = (height, width)

    def forward(self, x: Tensor) -> Tensor:
        expected = (self.cfg.in_channels, *self.cfg.input_size)
        if x.ndim != 4 or tuple(x.shape[1:]) != tuple(expected):
            raise ShapeError(f"backbone expects B x {expected[0]} x {expected[1]} x {expected[2]}, got {x.shape}")
        out = x
        per_stage = self.cfg.blocks_per_stage
        for i, block in enumerate(self.blocks):
            out = block(out)
            if (i + 1) % per_stage == 0:
                out = max_pool2d(out, 2)
        return out

    def encode(self, x: Tensor) -> Tuple[Tensor, Tensor]:
        """Returns (feature maps B x C x h x w, global vectors B x C)."""
        maps = self.forward(x)
        return maps, global_avg_pool(maps)


class ProjectionHead(Module):
    """proj: C -> hidden -> D, ReLU between the two affine layers."""

    def __init__(self, in_dim: int, hidden: int, out_dim: int, rng: np.random.Generator, scale: float = 1.0):
        super().__init__()
        self.fc1 = Linear(in_dim, hidden, rng, scale=scale)
        self.fc2 = Linear(hidden, out_dim, rng, scale=scale)

    def forward(self, h: Tensor) -> Tensor:
        return self.fc2(self.fc1(h).relu())


class SpatialHeads(Module):
    """Position-wise f_q, f_k, f_v: C -> D, shared by both maps of a pair."""

    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator, scale: float = 1.0):
        super().__init__()
        self.f_q = Linear(in_dim, out_dim, rng, scale=scale)
        self.f_k = Linear(in_dim, out_dim, rng, scale=scale)
        self.f_v = Linear(in_dim, out_dim, rng, scale=scale)
        self.dim = out_dim

    @property
    def scale(self) -> float:
        return float(np.sqrt(self.dim))

    def forward(self, positions: Tensor) -> Tuple[Tensor, Tensor, Tensor]:
        """positions: ... x HW x C -> (q, k, v) each ... x HW x D."""
        return self.f_q(positions), self.f_k(positions), self.f_v(positions)


class VecMapHead(Module):
    """g(x) = ReLU(W x) applied at every position; output ... x HW x D."""

    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator, scale: float = 1.0):
        super().__init__()
        self.fc = Linear(in_dim, out_dim, rng, scale=scale)

    def forward(self, positions: Tensor) -> Tensor:
        return self.fc(positions).relu()


class ClassifierHead(Module):
    def __init__(self, in_dim: int, n_classes: int, rng: np.random.Generator):
        super().__init__()
        self.fc = Linear(in_dim, n_classes, rng)
        self.n_classes = n_classes

    def forward(self, h: Tensor) -> Tensor:
        return self.fc(h)


class FewShotModel(Module):
    """Backbone plus every head used by pre-training; meta-training adds the attention module."""

    def __init__(
        self,
        backbone_cfg: BackboneConfig,
        head_cfg: HeadConfig,
        n_base_classes: int,
        seed: int = 0,
        attention: Optional[Module] = None,
    ):
        super().__init__()
        rng = np.random.default_rng(seed)
        self.backbone = Backbone(backbone_cfg, rng)
        channels = self.backbone.out_channels
        hidden = head_cfg.proj_hidden or 2 * channels
        scale = head_cfg.init_scale
        self.proj = ProjectionHead(channels, hidden, head_cfg.proj_dim, rng, scale)
        self.spatial = SpatialHeads(channels, head_cfg.proj_dim, rng, scale)
        self.vecmap = VecMapHead(channels, head_cfg.proj_dim, rng, scale)
        self.classifier = ClassifierHead(channels, n_base_classes, rng)
        self.attention = attention
        logger.debug(
            f"model: C={channels} D={head_cfg.proj_dim} hidden={hidden} classes={n_base_classes} "
            f"map={self.backbone.map_size} params={sum(p.size for p in self.parameters())}"
        )

    @property
    def channels(self) -> int:
        return self.backbone.out_channels

    def encode(self, x: Tensor) -> Tuple[Tensor, Tensor]:
        return self.backbone.encode(x)

    def project(self, h: Tensor) -> Tensor:
        return self.proj(h)

    def classify(self, h: Tensor) -> Tensor:
        return self.classifier(h)
