"""
Task-specific self-attention over a set of class prototypes.

One transformer block with a single head:

    a   = softmax(Q K^T / sqrt(C)) V        Q, K, V = x W_Q, x W_K, x W_V
    y   = LayerNorm(x + a W_O)
    out = LayerNorm(y + FFN(y))             FFN = Linear -> ReLU -> Linear

Dropout is 0, so the block is a deterministic function of its input.
"""

import logging
from typing import Tuple

import numpy as np

from autograd import Tensor, softmax
from errors import ShapeError
from models.layers import LayerNorm, Linear, Module, parameter

logger = logging.getLogger(__name__)


class AttnModule(Module):
    def __init__(self, dim: int, rng: np.random.Generator, ffn_width: int = 0):
        super().__init__()
        self.dim = dim
        std = np.sqrt(2.0 / (dim + dim))
        self.w_q = parameter(rng.normal(0.0, std, size=(dim, dim)), "w_q")
        self.w_k = parameter(rng.normal(0.0, std, size=(dim, dim)), "w_k")
        self.w_v = parameter(rng.normal(0.0, std, size=(dim, dim)), "w_v")
        self.out = Linear(dim, dim, rng)
        self.norm1 = LayerNorm(dim)
        width = ffn_width or dim
        self.ffn_in = Linear(dim, width, rng)
        self.ffn_out = Linear(width, dim, rng)
        self.norm2 = LayerNorm(dim)

    def weights(self, x: Tensor) -> Tensor:
        """Row-stochastic M x M attention matrix."""
        q = x @ self.w_q
        k = x @ self.w_k
        return softmax((q @ k.T) / np.sqrt(self.dim), axis=-1)

    def attend(self, x: Tensor) -> Tuple[Tensor, Tensor]:
        if x.ndim != 2 or x.shape[1] != self.dim:
            raise ShapeError(f"attention expects M x {self.dim} prototypes, got {x.shape}")
        attn = self.weights(x)
        mixed = attn @ (x @ self.w_v)
        hidden = self.norm1(x + self.out(mixed))
        return self.norm2(hidden + self.ffn_out(self.ffn_in(hidden).relu())), attn

    def forward(self, x: Tensor) -> Tensor:
        return self.attend(x)[0]
