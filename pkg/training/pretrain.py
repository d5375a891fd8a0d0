"""
Contrastive pre-training.

Per step: draw N images, build two augmented views of each, encode all 2N in
one forward pass, evaluate the weighted pre-training objective, backpropagate
and take one SGD step. One metrics record per step, one checkpoint per epoch.
"""

import logging
import os
import time
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from autograd import Tensor
from config import RunConfig, save_config
from data.augment import AugmentationPolicy, augment_batch, derive_seed
from data.splits import DatasetSplit, load_split
from losses.contrastive import AugmentedBatch, pretrain_total
from training.checkpoint import load_checkpoint, save_checkpoint
from training.metrics import MetricsRecord, MetricsWriter
from training.optim import SGD
from training.runtime import build_model, check_finite, restore_model
from training.schedule import lr_for, resolve

logger = logging.getLogger(__name__)

STAGE = "pretrain"


@dataclass
class TrainResult:
    out_dir: str
    checkpoint: str
    metrics_path: str
    epoch_losses: List[float] = field(default_factory=list)


def batch_indices(order: np.ndarray, step_in_epoch: int, batch_size: int) -> np.ndarray:
    positions = np.arange(step_in_epoch * batch_size, (step_in_epoch + 1) * batch_size)
    return order[positions % len(order)]


def two_views(split: DatasetSplit, idx: np.ndarray, policies, seed: int, epoch: int, offset: int) -> np.ndarray:
    """[view a of every sample; view b of every sample] as one 2N image batch."""
    images = split.images[idx]
    views = [
        augment_batch(images, policy, [derive_seed(seed, STAGE, epoch, offset + j, v) for j in range(len(idx))])
        for v, policy in enumerate(policies)
    ]
    return np.concatenate(views)


def pretrain_loop(cfg: RunConfig, out_dir: Optional[str] = None, split: Optional[DatasetSplit] = None) -> TrainResult:
    out_dir = out_dir or cfg.out_dir
    os.makedirs(out_dir, exist_ok=True)
    save_config(cfg, os.path.join(out_dir, "config.txt"))
    split = split or load_split(cfg.data.train_manifest)

    pcfg = cfg.pretrain
    batch_size = pcfg.batch_size
    steps_per_epoch = pcfg.steps_per_epoch or max(1, len(split) // batch_size)
    schedule = resolve(pcfg.schedule, steps_per_epoch, pcfg.epochs, pcfg.warmup_epochs)
    policies = [AugmentationPolicy.from_name(name, cfg.augment) for name in cfg.augment.pretrain_views]

    model = build_model(cfg, split.n_classes, with_attention=False)
    optimizer = SGD(model.named_parameters(), cfg.optim.momentum, cfg.optim.weight_decay)

    start_epoch, step = 0, 0
    if cfg.train.resume_from:
        ckpt = load_checkpoint(cfg.train.resume_from)
        restore_model(model, ckpt, strict=True)
        optimizer.load_state_dict(ckpt.optimizer)
        start_epoch = int(ckpt.metadata["epoch"]) + 1
        step = int(ckpt.metadata["step"])
        logger.info(f"Resuming pre-training at epoch {start_epoch}, step {step}")

    metrics_path = os.path.join(out_dir, "metrics.ndjson")
    logger.info(
        f"Pre-training: {split.n_classes} classes, {len(split)} images, N={batch_size}, "
        f"{steps_per_epoch} steps/epoch, {pcfg.epochs} epochs, views={cfg.augment.pretrain_views}"
    )

    result = TrainResult(out_dir=out_dir, checkpoint=cfg.train.resume_from, metrics_path=metrics_path)
    pair_index = np.concatenate([np.arange(batch_size, 2 * batch_size), np.arange(batch_size)])
    with MetricsWriter(metrics_path, resume_step=step if cfg.train.resume_from else None) as writer:
        for epoch in range(start_epoch, pcfg.epochs):
            model.train()
            epoch_start = time.perf_counter()
            order_seed = derive_seed(cfg.seed, f"{STAGE}-order", epoch, 0, 0)
            order = np.random.default_rng(order_seed).permutation(len(split))
            totals = []
            for s in range(steps_per_epoch):
                step_start = time.perf_counter()
                idx = batch_indices(order, s, batch_size)
                images = two_views(split, idx, policies, cfg.seed, epoch, s * batch_size)
                labels = split.labels[idx]

                maps, h = model.encode(Tensor(images))
                batch = AugmentedBatch(
                    z=model.project(h),
                    maps=maps,
                    labels=np.concatenate([labels, labels]),
                    pair_index=pair_index,
                    logits=model.classify(h),
                )
                breakdown = pretrain_total(batch, cfg.loss, model.spatial, model.vecmap)
                check_finite(breakdown, step)

                lr = lr_for(schedule, step, epoch)
                optimizer.zero_grad()
                breakdown.total.backward()
                optimizer.step(lr)

                losses = breakdown.as_floats()
                totals.append(losses["total"])
                writer.write(MetricsRecord(
                    step=step,
                    epoch=epoch,
                    stage=STAGE,
                    lr=lr,
                    losses=losses,
                    wall_ms=(time.perf_counter() - step_start) * 1000.0,
                    seed=derive_seed(cfg.seed, STAGE, epoch, s * batch_size, 0),
                ))
                logger.debug(f"[{STAGE}] step {step} lr={lr:.5f} total={losses['total']:.4f}")
                step += 1

            mean_total = float(np.mean(totals))
            result.epoch_losses.append(mean_total)
            result.checkpoint = save_checkpoint(
                os.path.join(out_dir, "checkpoints", f"epoch_{epoch:03d}"),
                model,
                optimizer,
                {"stage": STAGE, "epoch": epoch, "step": step, "seed": cfg.seed, "n_base_classes": split.n_classes},
            )
            logger.info(
                f"[{STAGE}] epoch {epoch + 1}/{pcfg.epochs} mean loss {mean_total:.4f} "
                f"lr {lr:.5f} ({time.perf_counter() - epoch_start:.1f}s)"
            )
    return result
