"""
Pre-training objectives.

All contrastive terms share one shape: for anchor i with positive set P(i)
and candidate set {j != i},

    loss_i = logsumexp_{j != i}(s_ij / tau) - mean_{p in P(i)} s_ip / tau

summed over the 2N anchors (or averaged, with loss_reduction = "mean").
The similarities differ per term:

    global_ss   s_ij = <n(z_i), n(z_j)>,               P(i) = {i'}
    global_sup  same s,                                 P(i) = same label, minus i
    map_map     s_ij = sim1(maps_i, maps_j)             P(i) = {i'}
    vec_map     s_ij = sim2(maps_i -> z_i, maps_j)      P(i) = {i'}

where n() is l2 normalization.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, Optional

import numpy as np

from autograd import Tensor, concat, cross_entropy, l2_normalize, logsumexp, softmax
from config import PretrainLossWeights
from errors import DegenerateBatchError, InvariantViolation, ShapeError
from models.encoder import SpatialHeads, VecMapHead, flatten_positions

logger = logging.getLogger(__name__)


@dataclass
class AugmentedBatch:
    """2N views: z (2N x D), maps (2N x C x h x w), labels, pair_index (i <-> i')."""

    z: Tensor
    maps: Tensor
    labels: np.ndarray
    pair_index: np.ndarray
    logits: Optional[Tensor] = None

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.pair_index = np.asarray(self.pair_index, dtype=np.int64)
        n = self.size
        if n < 2:
            raise DegenerateBatchError(f"contrastive batch needs at least 2 views, got {n}")
        if self.maps.shape[0] != n or self.labels.shape != (n,) or self.pair_index.shape != (n,):
            raise ShapeError(
                f"batch parts disagree: z {self.z.shape}, maps {self.maps.shape}, "
                f"labels {self.labels.shape}, pair_index {self.pair_index.shape}"
            )
        idx = np.arange(n)
        if (self.pair_index[self.pair_index] != idx).any() or (self.pair_index == idx).any():
            raise InvariantViolation("pair_index must be an involution without fixed points")
        if (self.labels[self.pair_index] != self.labels).any():
            raise InvariantViolation("paired views must share a label")

    @property
    def size(self) -> int:
        return self.z.shape[0]

    @classmethod
    def from_views(
        cls,
        z_a: Tensor,
        z_b: Tensor,
        maps_a: Tensor,
        maps_b: Tensor,
        labels: np.ndarray,
        logits_a: Optional[Tensor] = None,
        logits_b: Optional[Tensor] = None,
    ) -> "AugmentedBatch":
        """Stack two views of N samples; view b of sample i sits at i + N."""
        n = z_a.shape[0]
        labels = np.asarray(labels, dtype=np.int64)
        pair_index = np.concatenate([np.arange(n, 2 * n), np.arange(n)])
        logits = None
        if logits_a is not None and logits_b is not None:
            logits = concat([logits_a, logits_b], axis=0)
        return cls(
            z=concat([z_a, z_b], axis=0),
            maps=concat([maps_a, maps_b], axis=0),
            labels=np.concatenate([labels, labels]),
            pair_index=pair_index,
            logits=logits,
        )

    def permuted(self, order: np.ndarray) -> "AugmentedBatch":
        """Reorder views; the pairing follows the samples."""
        order = np.asarray(order, dtype=np.int64)
        inverse = np.argsort(order)
        return AugmentedBatch(
            z=self.z[order],
            maps=self.maps[order],
            labels=self.labels[order],
            pair_index=inverse[self.pair_index[order]],
            logits=self.logits[order] if self.logits is not None else None,
        )


# ============================================================
# Shared InfoNCE kernel
# ============================================================

def _candidates(n: int) -> np.ndarray:
    """n x (n-1) column indices of every j != i."""
    grid = np.tile(np.arange(n), (n, 1))
    return grid[~np.eye(n, dtype=bool)].reshape(n, n - 1)


def info_nce(sim: Tensor, positives: np.ndarray, tau: float) -> Tensor:
    """Per-anchor loss vector for an n x n similarity matrix and boolean positive mask."""
    n = sim.shape[0]
    if n < 2:
        raise DegenerateBatchError(f"contrastive loss needs at least 2 anchors, got {n}")
    positives = np.asarray(positives, dtype=bool) & ~np.eye(n, dtype=bool)
    counts = positives.sum(axis=1)
    if (counts == 0).any():
        raise InvariantViolation(f"anchor {int(np.argmin(counts))} has no positive")
    logits = sim / tau
    rows = np.arange(n)[:, None]
    denominator = logsumexp(logits[rows, _candidates(n)], axis=1)
    weights = positives / counts[:, None]
    return denominator - (logits * weights).sum(axis=1)


def reduce_anchors(per_anchor: Tensor, reduction: str = "sum") -> Tensor:
    if reduction == "sum":
        return per_anchor.sum()
    if reduction == "mean":
        return per_anchor.mean()
    raise ValueError(f"unknown loss reduction '{reduction}'")


def _pair_mask(pair_index: np.ndarray) -> np.ndarray:
    n = len(pair_index)
    mask = np.zeros((n, n), dtype=bool)
    mask[np.arange(n), pair_index] = True
    return mask


# ============================================================
# Similarities
# ============================================================

def cosine_matrix(z: Tensor) -> Tensor:
    normed = l2_normalize(z, axis=-1)
    return normed @ normed.T


def map_map_matrix(maps_a: Tensor, maps_b: Tensor, heads: SpatialHeads) -> Tensor:
    """sim1 for every (a, b) with a from maps_a and b from maps_b; returns A x B.

    v'_{a|b} = softmax(q_b k_a^T / sqrt(D)) v_a and sim1 averages the
    per-position inner products of n(v'_{a|b}) and n(v'_{b|a}).
    """
    if maps_a.shape[1:] != maps_b.shape[1:]:
        raise ShapeError(f"feature maps differ in shape: {maps_a.shape[1:]} vs {maps_b.shape[1:]}")
    q_a, k_a, v_a = heads(flatten_positions(maps_a))
    q_b, k_b, v_b = heads(flatten_positions(maps_b))
    n_a, hw, d = q_a.shape
    n_b = q_b.shape[0]
    scale = heads.scale

    # (A, B, HW, HW) attention logits; the query side is the map being aligned to
    a_given_b = softmax(
        q_b.reshape(1, n_b, hw, d) @ k_a.transpose(0, 2, 1).reshape(n_a, 1, d, hw) / scale, axis=-1
    ) @ v_a.reshape(n_a, 1, hw, d)
    b_given_a = softmax(
        q_a.reshape(n_a, 1, hw, d) @ k_b.transpose(0, 2, 1).reshape(1, n_b, d, hw) / scale, axis=-1
    ) @ v_b.reshape(1, n_b, hw, d)

    agreement = l2_normalize(a_given_b, axis=-1) * l2_normalize(b_given_a, axis=-1)
    return agreement.sum(axis=-1).mean(axis=-1)


def map_map_similarity(map_a: Tensor, map_b: Tensor, heads: SpatialHeads) -> Tensor:
    """sim1 of a single pair of C x H x W maps."""
    c, h, w = map_a.shape
    return map_map_matrix(map_a.reshape(1, c, h, w), map_b.reshape(1, *map_b.shape), heads).reshape(())


def vec_map_matrix(z_a: Tensor, maps_b: Tensor, vmhead: VecMapHead) -> Tensor:
    """sim2[a, b] = mean over positions of <n(u_b[pos]), n(z_a)>; returns A x B."""
    u = l2_normalize(vmhead(flatten_positions(maps_b)), axis=-1)
    n_b, hw, d = u.shape
    if z_a.shape[-1] != d:
        raise ShapeError(f"projected vector width {z_a.shape[-1]} does not match vec-map width {d}")
    z_n = l2_normalize(z_a, axis=-1)
    per_position = (u.reshape(n_b * hw, d) @ z_n.T).reshape(n_b, hw, z_a.shape[0])
    return per_position.mean(axis=1).T


def vec_map_similarity(map_a: Tensor, map_b: Tensor, vmhead: VecMapHead, proj) -> Tensor:
    """sim2 of a single pair: z_a = proj(GAP(map_a)) against g(map_b)."""
    z_a = proj(map_a.mean(axis=(-2, -1)).reshape(1, -1))
    return vec_map_matrix(z_a, map_b.reshape(1, *map_b.shape), vmhead).reshape(())


# ============================================================
# Loss terms
# ============================================================

def global_ss_loss(batch: AugmentedBatch, tau: float, reduction: str = "sum") -> Tensor:
    per_anchor = info_nce(cosine_matrix(batch.z), _pair_mask(batch.pair_index), tau)
    return reduce_anchors(per_anchor, reduction)


def map_map_loss(batch: AugmentedBatch, heads: SpatialHeads, tau: float, reduction: str = "sum") -> Tensor:
    sim = map_map_matrix(batch.maps, batch.maps, heads)
    return reduce_anchors(info_nce(sim, _pair_mask(batch.pair_index), tau), reduction)


def vec_map_loss(batch: AugmentedBatch, vmhead: VecMapHead, tau: float, reduction: str = "sum") -> Tensor:
    sim = vec_map_matrix(batch.z, batch.maps, vmhead)
    return reduce_anchors(info_nce(sim, _pair_mask(batch.pair_index), tau), reduction)


def local_ss_loss(
    batch: AugmentedBatch,
    heads: SpatialHeads,
    vmhead: VecMapHead,
    tau_map: float,
    tau_vec: float,
    reduction: str = "sum",
) -> Tensor:
    return vec_map_loss(batch, vmhead, tau_vec, reduction) + map_map_loss(batch, heads, tau_map, reduction)


def global_sup_loss(batch: AugmentedBatch, tau: float, reduction: str = "sum") -> Tensor:
    same_label = batch.labels[:, None] == batch.labels[None, :]
    per_anchor = info_nce(cosine_matrix(batch.z), same_label, tau)
    return reduce_anchors(per_anchor, reduction)


@dataclass
class LossBreakdown:
    """Weighted terms that sum to total, plus the unweighted values."""

    total: Tensor
    terms: Dict[str, Tensor] = field(default_factory=dict)
    raw: Dict[str, float] = field(default_factory=dict)

    def as_floats(self) -> Dict[str, float]:
        values = {name: term.item() for name, term in self.terms.items()}
        values["total"] = self.total.item()
        return values

    def first_non_finite(self) -> Optional[str]:
        for name, value in self.as_floats().items():
            if not np.isfinite(value):
                return name
        return None


def combine(terms: Dict[str, Tensor], raw: Dict[str, float]) -> LossBreakdown:
    total = None
    for term in terms.values():
        total = term if total is None else total + term
    if total is None:
        total = Tensor(0.0)
    return LossBreakdown(total=total, terms=terms, raw=raw)


def pretrain_total(
    batch: AugmentedBatch,
    weights: PretrainLossWeights,
    heads: Optional[SpatialHeads] = None,
    vmhead: Optional[VecMapHead] = None,
) -> LossBreakdown:
    """L_pre = CE + a1 * global_ss + a2 * (vec_map + map_map) + a3 * global_sup, honoring the enable flags."""
    reduction = weights.loss_reduction
    unweighted: Dict[str, Tensor] = {}
    scale: Dict[str, float] = {}

    if weights.use_ce:
        if batch.logits is None:
            raise ValueError("cross-entropy is enabled but the batch carries no logits")
        unweighted["ce"], scale["ce"] = cross_entropy(batch.logits, batch.labels), 1.0
    if weights.use_global_ss:
        unweighted["global_ss"] = global_ss_loss(batch, weights.tau1, reduction)
        scale["global_ss"] = weights.alpha1
    if weights.use_local_ss and weights.use_vec_map:
        unweighted["vec_map"] = vec_map_loss(batch, vmhead, weights.tau3, reduction)
        scale["vec_map"] = weights.alpha2
    if weights.use_local_ss and weights.use_map_map:
        unweighted["map_map"] = map_map_loss(batch, heads, weights.tau2, reduction)
        scale["map_map"] = weights.alpha2
    if weights.use_global_sup:
        unweighted["global_sup"] = global_sup_loss(batch, weights.tau4, reduction)
        scale["global_sup"] = weights.alpha3

    terms = {name: value * scale[name] for name, value in unweighted.items()}
    return combine(terms, {name: value.item() for name, value in unweighted.items()})
