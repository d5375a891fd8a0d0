"""
Numeric primitives built on the Tensor tape.

Ops whose gradient is cheaper or more stable written by hand (softmax family,
l2_normalize, conv2d, max_pool2d, safe_sqrt) are primitives with their own
backward closure. The normalization layers and distances are compositions of
primitives and get their gradients from the tape.
"""

from __future__ import annotations

import logging
from typing import Optional, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from autograd.tensor import ArrayLike, Tensor
from errors import LabelRangeError, ShapeError

logger = logging.getLogger(__name__)

L2_EPS = 1e-12


# ============================================================
# Softmax family
# ============================================================

def softmax(x: Tensor, axis: int = -1) -> Tensor:
    """Max-subtracted softmax along `axis`."""
    assert np.isfinite(x.data).all(), "softmax input must be finite"
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return Tensor.from_op(out, (x,), backward, "softmax")


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    assert np.isfinite(x.data).all(), "log_softmax input must be finite"
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    out = shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))

    def backward(g):
        return (g - np.exp(out) * g.sum(axis=axis, keepdims=True),)

    return Tensor.from_op(out, (x,), backward, "log_softmax")


def logsumexp(x: Tensor, axis: int = -1, keepdims: bool = False) -> Tensor:
    peak = x.data.max(axis=axis, keepdims=True)
    e = np.exp(x.data - peak)
    total = e.sum(axis=axis, keepdims=True)
    out = peak + np.log(total)
    weights = e / total

    def backward(g):
        if not keepdims:
            g = np.expand_dims(g, axis)
        return (g * weights,)

    value = out if keepdims else np.squeeze(out, axis=axis)
    return Tensor.from_op(value, (x,), backward, "logsumexp")


# ============================================================
# Norms and distances
# ============================================================

def l2_normalize(x: Tensor, axis: int = -1, eps: float = L2_EPS) -> Tensor:
    """Scale each slice along `axis` to unit length; slices shorter than eps are divided by eps."""
    norm = np.sqrt((x.data * x.data).sum(axis=axis, keepdims=True))
    small = norm < eps
    denom = np.where(small, eps, norm)
    out = x.data / denom

    def backward(g):
        projected = (g - out * (g * out).sum(axis=axis, keepdims=True)) / denom
        return (np.where(small, g / eps, projected),)

    return Tensor.from_op(out, (x,), backward, "l2_normalize")


def safe_sqrt(x: Tensor) -> Tensor:
    """sqrt with a zero subgradient at 0 (distance of a point to itself)."""
    out = np.sqrt(np.maximum(x.data, 0.0))
    positive = out > 0

    def backward(g):
        return (np.where(positive, g * 0.5 / np.where(positive, out, 1.0), 0.0),)

    return Tensor.from_op(out, (x,), backward, "safe_sqrt")


def squared_distance(a: Tensor, b: Tensor, axis: int = -1) -> Tensor:
    diff = a - b
    return (diff * diff).sum(axis=axis)


def euclidean_distance(a: Tensor, b: Tensor, axis: int = -1) -> Tensor:
    """||a - b||_2 along `axis`, with numpy broadcasting between a and b."""
    return safe_sqrt(squared_distance(Tensor.wrap(a), Tensor.wrap(b), axis=axis))


def pairwise_distance(a: Tensor, b: Tensor, squared: bool = False) -> Tensor:
    """Distance matrix between rows of a (m×c) and rows of b (n×c)."""
    if a.shape[-1] != b.shape[-1]:
        raise ShapeError(f"feature width mismatch: {a.shape} vs {b.shape}")
    m, c = a.shape
    n = b.shape[0]
    sq = squared_distance(a.reshape(m, 1, c), b.reshape(1, n, c))
    return sq if squared else safe_sqrt(sq)


def cosine_similarity(a: Tensor, b: Tensor, axis: int = -1, eps: float = L2_EPS) -> Tensor:
    return (l2_normalize(Tensor.wrap(a), axis, eps) * l2_normalize(Tensor.wrap(b), axis, eps)).sum(axis=axis)


# ============================================================
# Layers
# ============================================================

def linear(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    """Affine map over the last axis; weight is (in, out)."""
    if x.shape[-1] != weight.shape[0]:
        raise ShapeError(f"linear input width {x.shape[-1]} does not match weight {weight.shape}")
    out = x @ weight if x.ndim >= 2 else (x.reshape(1, -1) @ weight).reshape(-1)
    return out + bias if bias is not None else out


def conv2d(
    x: Tensor,
    weight: Tensor,
    bias: Optional[Tensor] = None,
    stride: int = 1,
    pad: int = 0,
) -> Tensor:
    """Cross-correlation of x (B×C×H×W) with weight (F×C×kh×kw) via im2col."""
    if x.ndim != 4 or weight.ndim != 4:
        raise ShapeError(f"conv2d expects 4-D input and weight, got {x.shape} and {weight.shape}")
    batch, channels, height, width = x.shape
    filters, w_channels, kh, kw = weight.shape
    if channels != w_channels:
        raise ShapeError(f"conv2d channel mismatch: input {channels}, weight {w_channels}")

    padded = np.pad(x.data, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    if padded.shape[2] < kh or padded.shape[3] < kw:
        raise ShapeError(f"conv2d kernel {kh}x{kw} larger than padded input {padded.shape[2:]}")
    windows = sliding_window_view(padded, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
    out_h, out_w = windows.shape[2], windows.shape[3]
    cols = windows.transpose(0, 2, 3, 1, 4, 5).reshape(batch * out_h * out_w, channels * kh * kw)
    w_flat = weight.data.reshape(filters, -1)

    out = (cols @ w_flat.T).reshape(batch, out_h, out_w, filters).transpose(0, 3, 1, 2)
    if bias is not None:
        out = out + bias.data.reshape(1, filters, 1, 1)

    def backward(g):
        g_flat = g.transpose(0, 2, 3, 1).reshape(-1, filters)
        grad_w = (g_flat.T @ cols).reshape(weight.shape)
        d_cols = (g_flat @ w_flat).reshape(batch, out_h, out_w, channels, kh, kw)
        grad_padded = np.zeros_like(padded)
        for i in range(kh):
            for j in range(kw):
                grad_padded[
                    :, :, i : i + stride * out_h : stride, j : j + stride * out_w : stride
                ] += d_cols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
        grad_x = grad_padded[:, :, pad : pad + height, pad : pad + width]
        grads = [grad_x, grad_w]
        if bias is not None:
            grads.append(g.sum(axis=(0, 2, 3)))
        return tuple(grads)

    parents = (x, weight) if bias is None else (x, weight, bias)
    return Tensor.from_op(out, parents, backward, "conv2d")


def max_pool2d(x: Tensor, kernel: int = 2) -> Tensor:
    """Non-overlapping max pooling; trailing rows/columns that do not fill a window are dropped."""
    batch, channels, height, width = x.shape
    out_h, out_w = height // kernel, width // kernel
    if out_h == 0 or out_w == 0:
        raise ShapeError(f"max_pool2d kernel {kernel} larger than input {x.shape[2:]}")
    cropped = x.data[:, :, : out_h * kernel, : out_w * kernel]
    blocks = cropped.reshape(batch, channels, out_h, kernel, out_w, kernel).transpose(0, 1, 2, 4, 3, 5)
    blocks = blocks.reshape(batch, channels, out_h, out_w, kernel * kernel)
    winner = blocks.argmax(axis=-1)[..., None]
    out = np.take_along_axis(blocks, winner, axis=-1)[..., 0]

    def backward(g):
        grad_blocks = np.zeros_like(blocks)
        np.put_along_axis(grad_blocks, winner, g[..., None], axis=-1)
        grad = grad_blocks.reshape(batch, channels, out_h, out_w, kernel, kernel)
        grad = grad.transpose(0, 1, 2, 4, 3, 5).reshape(batch, channels, out_h * kernel, out_w * kernel)
        full = np.zeros(x.shape)
        full[:, :, : out_h * kernel, : out_w * kernel] = grad
        return (full,)

    return Tensor.from_op(out, (x,), backward, "max_pool2d")


def global_avg_pool(x: Tensor) -> Tensor:
    """B×C×H×W → B×C (or C×H×W → C)."""
    return x.mean(axis=(-2, -1))


def batch_norm(
    x: Tensor,
    gamma: Tensor,
    beta: Tensor,
    running_mean: np.ndarray,
    running_var: np.ndarray,
    training: bool,
    momentum: float = 0.9,
    eps: float = 1e-5,
) -> Tensor:
    """Per-channel normalization of B×C×H×W.

    Training mode normalizes with batch statistics and updates the running
    buffers in place as running = momentum * running + (1 - momentum) * batch.
    Eval mode uses the running buffers as constants.
    """
    shape = (1, x.shape[1], 1, 1)
    if training:
        mu = x.mean(axis=(0, 2, 3), keepdims=True)
        centered = x - mu
        var = (centered * centered).mean(axis=(0, 2, 3), keepdims=True)
        running_mean *= momentum
        running_mean += (1.0 - momentum) * mu.data.reshape(-1)
        running_var *= momentum
        running_var += (1.0 - momentum) * var.data.reshape(-1)
        normed = centered / (var + eps).sqrt()
    else:
        normed = (x - running_mean.reshape(shape)) / np.sqrt(running_var.reshape(shape) + eps)
    return normed * gamma.reshape(shape) + beta.reshape(shape)


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    mu = x.mean(axis=-1, keepdims=True)
    centered = x - mu
    var = (centered * centered).mean(axis=-1, keepdims=True)
    return centered / (var + eps).sqrt() * gamma + beta


# ============================================================
# Classification
# ============================================================

def cross_entropy(logits: Tensor, labels: Sequence[int]) -> Tensor:
    """Mean over the batch of -log softmax(logits)[label]."""
    labels = np.asarray(labels, dtype=np.int64)
    batch, classes = logits.shape
    if labels.shape != (batch,):
        raise ShapeError(f"expected {batch} labels, got shape {labels.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= classes):
        raise LabelRangeError(f"labels must lie in [0, {classes}), got range [{labels.min()}, {labels.max()}]")
    log_probs = log_softmax(logits, axis=-1)
    return -log_probs[np.arange(batch), labels].mean()


def as_tensor(value: ArrayLike) -> Tensor:
    return Tensor.wrap(value)
