"""
Finite-difference checks of every loss and of the encoder/head ops on small
random instances. Each case returns (loss closure, parameter list).
"""

import logging
from typing import Callable, Dict, List, Tuple

import numpy as np

from autograd import Tensor, cross_entropy
from autograd.gradcheck import GradCheckResult, check_gradients
from config import BackboneConfig, HeadConfig, MetaLossConfig, PretrainLossWeights
from losses.contrastive import (
    AugmentedBatch,
    global_ss_loss,
    global_sup_loss,
    local_ss_loss,
    map_map_loss,
    pretrain_total,
    vec_map_loss,
)
from losses.episodic import EpisodeView, ViewedEpisode, cross_view_loss, distance_scaled_loss, meta_total
from models.attention import AttnModule
from models.encoder import FewShotModel, SpatialHeads, VecMapHead

logger = logging.getLogger(__name__)

MIN_CHECKS = 50
Case = Tuple[Callable[[], Tensor], List[Tensor]]


def _param(rng: np.random.Generator, *shape: int, name: str = "") -> Tensor:
    return Tensor(rng.normal(size=shape), requires_grad=True, name=name)


def _batch(rng, n=4, d=8, c=3, with_logits=False, classes=3):
    base = rng.integers(0, 2, size=n)
    z = _param(rng, 2 * n, d, name="z")
    maps = _param(rng, 2 * n, c, 2, 2, name="maps")
    logits = _param(rng, 2 * n, classes, name="logits") if with_logits else None

    def build():
        return AugmentedBatch(
            z=z,
            maps=maps,
            labels=np.concatenate([base, base]),
            pair_index=np.concatenate([np.arange(n, 2 * n), np.arange(n)]),
            logits=logits,
        )

    params = [z, maps] + ([logits] if logits is not None else [])
    return build, params


def _episode(rng, ways=2, shots=2, queries=2, c=4, d=4, z_grad=True):
    tensors = {}
    for v in (1, 2):
        tensors[f"sh{v}"] = _param(rng, ways * shots, c, name=f"support_h{v}")
        tensors[f"qh{v}"] = _param(rng, ways * queries, c, name=f"query_h{v}")
        tensors[f"sz{v}"] = Tensor(rng.normal(size=(ways * shots, d)), requires_grad=z_grad, name=f"support_z{v}")
        tensors[f"qz{v}"] = Tensor(rng.normal(size=(ways * queries, d)), requires_grad=z_grad, name=f"query_z{v}")
    support_labels = np.repeat(np.arange(ways), shots)
    query_labels = np.repeat(np.arange(ways), queries)

    def build():
        views = tuple(
            EpisodeView(
                support_h=tensors[f"sh{v}"],
                support_labels=support_labels,
                query_h=tensors[f"qh{v}"],
                query_labels=query_labels,
                support_z=tensors[f"sz{v}"],
                query_z=tensors[f"qz{v}"],
            )
            for v in (1, 2)
        )
        return ViewedEpisode(views=views, ways=ways)

    return build, list(tensors.values())


def build_cases(seed: int = 0) -> Dict[str, Case]:
    rng = np.random.default_rng(seed)
    cases: Dict[str, Case] = {}

    build, params = _batch(rng)
    cases["global_ss"] = (lambda b=build: global_ss_loss(b(), 0.1), params)

    build, params = _batch(rng)
    heads = SpatialHeads(3, 4, rng)
    cases["map_map"] = (lambda b=build, h=heads: map_map_loss(b(), h, 0.1), params + heads.parameters())

    build, params = _batch(rng, d=4)
    vmhead = VecMapHead(3, 4, rng)
    cases["vec_map"] = (lambda b=build, g=vmhead: vec_map_loss(b(), g, 0.1), params + vmhead.parameters())

    build, params = _batch(rng, d=4)
    heads, vmhead = SpatialHeads(3, 4, rng), VecMapHead(3, 4, rng)
    cases["local_ss"] = (
        lambda b=build, h=heads, g=vmhead: local_ss_loss(b(), h, g, 0.1, 0.1),
        params + heads.parameters() + vmhead.parameters(),
    )

    build, params = _batch(rng)
    cases["global_sup"] = (lambda b=build: global_sup_loss(b(), 0.1), params)

    build, params = _batch(rng, d=4, with_logits=True)
    heads, vmhead = SpatialHeads(3, 4, rng), VecMapHead(3, 4, rng)
    weights = PretrainLossWeights()
    cases["pretrain_total"] = (
        lambda b=build, h=heads, g=vmhead: pretrain_total(b(), weights, h, g).total,
        params + heads.parameters() + vmhead.parameters(),
    )

    build, params = _episode(rng, z_grad=False)
    attn = AttnModule(4, rng)
    cases["cross_view"] = (lambda b=build, a=attn: cross_view_loss(b(), a), params[0::4] + params[1::4] + attn.parameters())

    build, params = _episode(rng)
    cases["distance_scaled"] = (lambda b=build: distance_scaled_loss(b(), 0.1), params)

    build, params = _episode(rng)
    attn = AttnModule(4, rng)
    meta_cfg = MetaLossConfig(beta=0.1)
    cases["meta_total"] = (lambda b=build, a=attn: meta_total(b(), a, meta_cfg).total, params + attn.parameters())

    model = FewShotModel(
        BackboneConfig(stage_channels=[2, 3], input_size=[8, 8], in_channels=2),
        HeadConfig(proj_dim=4),
        n_base_classes=3,
        seed=seed,
    )
    images = Tensor(rng.normal(size=(3, 2, 8, 8)))
    readout = rng.normal(size=(3, 4))

    def encode_project():
        _, h = model.encode(images)
        return (model.project(h) * readout).sum()

    cases["encode_project"] = (encode_project, model.backbone.parameters() + model.proj.parameters())

    def classify_ce():
        _, h = model.encode(images)
        return cross_entropy(model.classify(h), [0, 2, 1])

    cases["cross_entropy"] = (classify_ce, model.classifier.parameters() + model.backbone.parameters())
    return cases


def gradcheck_suite(seed: int = 0, max_checks: int = MIN_CHECKS) -> List[GradCheckResult]:
    results = []
    for name, (fn, params) in build_cases(seed).items():
        result = check_gradients(fn, params, max_checks=max_checks, seed=seed, name=name)
        logger.info(f"gradcheck {name:16s} checked={result.n_checked:4d} max_rel_err={result.max_rel_error:.3e}")
        results.append(result)
    return results


def format_table(results: List[GradCheckResult], tolerance: float = 1e-4) -> str:
    lines = [f"{'loss':<18}{'checked':>8}{'max rel err':>14}  status"]
    for r in results:
        lines.append(f"{r.name:<18}{r.n_checked:>8}{r.max_rel_error:>14.3e}  {'ok' if r.passed(tolerance) else 'FAIL'}")
    return "\n".join(lines)
