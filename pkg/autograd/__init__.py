"""
Minimal dense tensor engine with reverse-mode automatic differentiation.
Float64 everywhere, numpy underneath, one dynamic tape per backward().
"""

from autograd.tensor import Tensor, concat, is_grad_enabled, no_grad, stack, tensor
from autograd.functional import (
    batch_norm,
    conv2d,
    cosine_similarity,
    cross_entropy,
    euclidean_distance,
    global_avg_pool,
    l2_normalize,
    layer_norm,
    linear,
    log_softmax,
    logsumexp,
    max_pool2d,
    pairwise_distance,
    safe_sqrt,
    softmax,
)
from autograd.serialization import load_tensor, save_tensor

__all__ = [
    "Tensor",
    "tensor",
    "concat",
    "stack",
    "no_grad",
    "is_grad_enabled",
    "batch_norm",
    "conv2d",
    "cosine_similarity",
    "cross_entropy",
    "euclidean_distance",
    "global_avg_pool",
    "l2_normalize",
    "layer_norm",
    "linear",
    "log_softmax",
    "logsumexp",
    "max_pool2d",
    "pairwise_distance",
    "safe_sqrt",
    "softmax",
    "load_tensor",
    "save_tensor",
]
