from models.layers import BatchNorm2d, Conv2d, LayerNorm, Linear, Module
from models.encoder import (
    Backbone,
    ClassifierHead,
    FewShotModel,
    ProjectionHead,
    SpatialHeads,
    VecMapHead,
    flatten_positions,
)
from models.attention import AttnModule

__all__ = [
    "Module",
    "Linear",
    "Conv2d",
    "BatchNorm2d",
    "LayerNorm",
    "Backbone",
    "ProjectionHead",
    "SpatialHeads",
    "VecMapHead",
    "ClassifierHead",
    "FewShotModel",
    "AttnModule",
    "flatten_positions",
]
