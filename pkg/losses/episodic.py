"""
Meta-training objectives over two augmented views of one episode.

Labels inside an episode are 0..M-1. Query slot q of view 1 and query slot q
of view 2 come from the same source image, which is what pairs them in the
distance-scaled loss.
"""

import logging
from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np

from autograd import Tensor, concat, cross_entropy, l2_normalize, logsumexp, pairwise_distance, softmax
from config import MetaLossConfig
from errors import DegenerateBatchError, EmptyClassError, InvariantViolation, ShapeError
from losses.contrastive import LossBreakdown, combine
from models.attention import AttnModule

logger = logging.getLogger(__name__)


@dataclass
class EpisodeView:
    """Embedded support and query sets of one view; z is optional at meta-test time."""

    support_h: Tensor
    support_labels: np.ndarray
    query_h: Tensor
    query_labels: np.ndarray
    support_z: Optional[Tensor] = None
    query_z: Optional[Tensor] = None

    def __post_init__(self):
        self.support_labels = np.asarray(self.support_labels, dtype=np.int64)
        self.query_labels = np.asarray(self.query_labels, dtype=np.int64)
        if self.support_h.shape[0] != len(self.support_labels):
            raise ShapeError(f"{self.support_h.shape[0]} support vectors but {len(self.support_labels)} labels")
        if self.query_h.shape[0] != len(self.query_labels):
            raise ShapeError(f"{self.query_h.shape[0]} query vectors but {len(self.query_labels)} labels")


@dataclass
class ViewedEpisode:
    views: Tuple[EpisodeView, EpisodeView]
    ways: int

    def __post_init__(self):
        first, second = self.views
        if not (np.array_equal(first.support_labels, second.support_labels)
                and np.array_equal(first.query_labels, second.query_labels)):
            raise InvariantViolation("both views of an episode must share their label structure")

    def swapped(self) -> "ViewedEpisode":
        return ViewedEpisode(views=(self.views[1], self.views[0]), ways=self.ways)


@dataclass
class PrototypeSet:
    raw: Tensor
    aligned: Tensor
    z_space: Optional[Tensor] = None


# ============================================================
# Prototypes and alignment
# ============================================================

def class_means(vectors: Tensor, labels: np.ndarray, ways: int) -> Tensor:
    """M x width matrix of per-class means."""
    labels = np.asarray(labels, dtype=np.int64)
    onehot = np.zeros((ways, len(labels)))
    onehot[labels, np.arange(len(labels))] = 1.0
    counts = onehot.sum(axis=1, keepdims=True)
    if (counts == 0).any():
        empty = int(np.flatnonzero(counts[:, 0] == 0)[0])
        raise EmptyClassError(f"class {empty} has no support samples")
    return Tensor(onehot / counts) @ vectors


def prototypes(view: EpisodeView, ways: int) -> Tensor:
    return class_means(view.support_h, view.support_labels, ways)


def align(raw: Tensor, attn: Optional[AttnModule]) -> Tensor:
    """T(r) = Attn(c_1..c_M); a missing module leaves the prototypes as they are."""
    if attn is None:
        return raw
    return attn(raw)


def prototype_set(view: EpisodeView, ways: int, attn: Optional[AttnModule]) -> PrototypeSet:
    raw = prototypes(view, ways)
    z_space = class_means(view.support_z, view.support_labels, ways) if view.support_z is not None else None
    return PrototypeSet(raw=raw, aligned=align(raw, attn), z_space=z_space)


# ============================================================
# Nearest-centroid classification
# ============================================================

def distance_logits(h: Tensor, aligned: Tensor, squared: bool = False) -> Tensor:
    single = h.ndim == 1
    if single:
        h = h.reshape(1, -1)
    logits = -pairwise_distance(h, aligned, squared=squared)
    return logits.reshape(-1) if single else logits


def classify_query(h: Tensor, aligned: Tensor, squared: bool = False) -> Tensor:
    """Softmax over negative distances to the aligned prototypes."""
    return softmax(distance_logits(h, aligned, squared), axis=-1)


def view_loss(query: EpisodeView, protos: PrototypeSet, squared: bool = False) -> Tensor:
    """L_mn: mean negative log-likelihood of Q_m against T(n)."""
    return cross_entropy(distance_logits(query.query_h, protos.aligned, squared), query.query_labels)


def cross_view_terms(
    ve: ViewedEpisode, attn: Optional[AttnModule], squared: bool = False
) -> Dict[str, Tensor]:
    protos = [prototype_set(view, ve.ways, attn) for view in ve.views]
    return {
        f"l{m + 1}{n + 1}": view_loss(ve.views[m], protos[n], squared)
        for m in range(2)
        for n in range(2)
    }


def cross_view_loss(ve: ViewedEpisode, attn: Optional[AttnModule], squared: bool = False) -> Tensor:
    terms = cross_view_terms(ve, attn, squared)
    return (terms["l11"] + terms["l12"] + terms["l21"] + terms["l22"]) * 0.25


# ============================================================
# Distance-scaled contrastive loss
# ============================================================

def distance_coefficient(cos: Tensor) -> Tensor:
    """lambda = 2 - cos: 1 for identical directions, 3 for antipodal ones."""
    return 2.0 - cos


def _anchor_loss(
    anchors: Tensor,
    partners: Tensor,
    bank: Tensor,
    support_labels: np.ndarray,
    query_labels: np.ndarray,
    tau: float,
) -> Tensor:
    """Per-anchor loss for one view's queries.

    Columns of the candidate matrix are [partner queries | S1 | S2 | O1 | O2];
    only the anchor's own partner is kept among the queries.
    """
    n_query = anchors.shape[0]
    columns = concat([partners, bank], axis=0)
    cos = anchors @ columns.T
    log_weight = distance_coefficient(cos).log() + cos / tau

    n_bank = bank.shape[0]
    rows = np.arange(n_query)[:, None]
    candidate_idx = np.concatenate(
        [np.arange(n_query)[:, None], np.tile(np.arange(n_query, n_query + n_bank), (n_query, 1))], axis=1
    )
    # both views' supports, in bank order
    two_supports = np.concatenate([support_labels, support_labels])
    positive_idx = np.stack(
        [np.concatenate([[q], n_query + np.flatnonzero(two_supports == query_labels[q])]) for q in range(n_query)]
    )
    denominator = logsumexp(log_weight[rows, candidate_idx], axis=1)
    return denominator - log_weight[rows, positive_idx].mean(axis=1)


def distance_scaled_loss(ve: ViewedEpisode, tau: float) -> Tensor:
    """Sum over every query of both views of (1/|H|) * sum_H -log(lambda e^{s/tau} / sum_A lambda e^{s/tau})."""
    first, second = ve.views
    if len(first.support_labels) == 0:
        raise DegenerateBatchError("episode has no support samples")
    for view in ve.views:
        if view.support_z is None or view.query_z is None:
            raise ValueError("distance-scaled loss needs projected vectors for both views")
    q1 = l2_normalize(first.query_z)
    q2 = l2_normalize(second.query_z)
    o1 = class_means(first.support_z, first.support_labels, ve.ways)
    o2 = class_means(second.support_z, second.support_labels, ve.ways)
    bank = l2_normalize(concat([first.support_z, second.support_z, o1, o2], axis=0))

    per_first = _anchor_loss(q1, q2, bank, first.support_labels, first.query_labels, tau)
    per_second = _anchor_loss(q2, q1, bank, first.support_labels, first.query_labels, tau)
    return per_first.sum() + per_second.sum()


# ============================================================
# Totals and prediction
# ============================================================

def meta_total(ve: ViewedEpisode, attn: Optional[AttnModule], cfg: MetaLossConfig) -> LossBreakdown:
    """L_meta + beta * L_info; with cross-view training off, L_meta is the single-view L11."""
    if cfg.bypass_attention:
        attn = None
    if cfg.use_cvet:
        parts = cross_view_terms(ve, attn, cfg.squared_distance)
        meta = (parts["l11"] + parts["l12"] + parts["l21"] + parts["l22"]) * 0.25
        raw = {name: value.item() for name, value in parts.items()}
    else:
        first = ve.views[0]
        meta = view_loss(first, prototype_set(first, ve.ways, attn), cfg.squared_distance)
        raw = {"l11": meta.item()}
    raw["meta"] = meta.item()

    terms = {"meta": meta}
    if cfg.use_info:
        info = distance_scaled_loss(ve, cfg.tau5)
        raw["info"] = info.item()
        terms["info"] = info * cfg.beta
    return combine(terms, raw)


def meta_test_predict(
    view: EpisodeView,
    ways: int,
    attn: Optional[AttnModule],
    squared: bool = False,
) -> np.ndarray:
    """Nearest aligned prototype per query; ties go to the smallest class index."""
    aligned = prototype_set(view, ways, attn).aligned
    logits = distance_logits(view.query_h, aligned, squared)
    return np.argmax(logits.data, axis=1)
