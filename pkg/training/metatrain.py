"""
Cross-view episodic meta-training.

The encoder and projection head are inherited from a pre-training checkpoint;
the attention module starts fresh. Per episode: two augmented views of one
base episode, one forward pass, L_meta + beta * L_info, one SGD step.
After each epoch the model is scored on the validation split (when present)
and the best epoch is kept under best/.
"""

import logging
import os
import time
from typing import Optional

import numpy as np

from config import RunConfig, save_config
from data.augment import AugmentationPolicy, derive_seed
from data.episodes import make_viewed_episode
from data.splits import DatasetSplit, load_split
from losses.episodic import meta_total
from training.checkpoint import copy_checkpoint, load_checkpoint, save_checkpoint
from training.metatest import evaluate_episodes
from training.metrics import MetricsRecord, MetricsWriter
from training.optim import SGD
from training.pretrain import TrainResult
from training.runtime import build_model, check_finite, embed_episode, optional_split_path, restore_model
from training.schedule import lr_for, resolve

logger = logging.getLogger(__name__)

STAGE = "metatrain"
# heads the episodic objective reads; the pre-training-only heads stay frozen
TRAINED_GROUPS = ("backbone.", "proj.", "attention.")


def metatrain_loop(
    cfg: RunConfig,
    init_checkpoint: Optional[str] = None,
    out_dir: Optional[str] = None,
    split: Optional[DatasetSplit] = None,
    val_split: Optional[DatasetSplit] = None,
) -> TrainResult:
    out_dir = out_dir or cfg.out_dir
    os.makedirs(out_dir, exist_ok=True)
    save_config(cfg, os.path.join(out_dir, "config.txt"))
    spec = cfg.episode
    split = split or load_split(cfg.data.train_manifest, min_per_class=spec.shots + spec.queries)
    if val_split is None and optional_split_path(cfg.data.val_manifest):
        val_split = load_split(cfg.data.val_manifest, min_per_class=spec.shots + spec.queries)

    mcfg = cfg.metatrain
    schedule = resolve(mcfg.schedule, mcfg.episodes_per_epoch, mcfg.epochs)
    policies = [AugmentationPolicy.from_name(name, cfg.augment) for name in cfg.augment.meta_views]

    init_checkpoint = init_checkpoint or cfg.train.init_checkpoint
    n_classes = split.n_classes
    init = load_checkpoint(init_checkpoint) if init_checkpoint else None
    if init is not None:
        n_classes = int(init.metadata.get("n_base_classes", n_classes))
    model = build_model(cfg, n_classes, with_attention=True)
    if init is not None:
        restore_model(model, init, strict=False)
        logger.info(f"Initialized encoder and heads from {init_checkpoint}")
    else:
        logger.warning("No pre-training checkpoint given; meta-training from random initialization")

    trained = [(name, p) for name, p in model.named_parameters() if name.startswith(TRAINED_GROUPS)]
    optimizer = SGD(trained, cfg.optim.momentum, cfg.optim.weight_decay)

    start_epoch, step, best_acc = 0, 0, -1.0
    if cfg.train.resume_from:
        ckpt = load_checkpoint(cfg.train.resume_from)
        restore_model(model, ckpt, strict=True)
        optimizer.load_state_dict(ckpt.optimizer)
        start_epoch = int(ckpt.metadata["epoch"]) + 1
        step = int(ckpt.metadata["step"])
        best_acc = float(ckpt.metadata.get("best_val_acc", -1.0))
        logger.info(f"Resuming meta-training at epoch {start_epoch}, step {step}")

    metrics_path = os.path.join(out_dir, "metrics.ndjson")
    logger.info(
        f"Meta-training: {spec.ways}-way {spec.shots}-shot {spec.queries}-query, "
        f"{mcfg.episodes_per_epoch} episodes/epoch, {mcfg.epochs} epochs, beta={cfg.meta.beta}, "
        f"cvet={cfg.meta.use_cvet}, info={cfg.meta.use_info}, views={cfg.augment.meta_views}"
    )

    result = TrainResult(out_dir=out_dir, checkpoint=cfg.train.resume_from, metrics_path=metrics_path)
    with MetricsWriter(metrics_path, resume_step=step if cfg.train.resume_from else None) as writer:
        for epoch in range(start_epoch, mcfg.epochs):
            epoch_start = time.perf_counter()
            totals = []
            lr = lr_for(schedule, step, epoch)
            for i in range(mcfg.episodes_per_epoch):
                model.train()
                step_start = time.perf_counter()
                seed = derive_seed(cfg.seed, STAGE, epoch, i, 0)
                lr = lr_for(schedule, step, epoch)

                viewed = make_viewed_episode(split, spec, policies[0], policies[1], seed)
                breakdown = meta_total(embed_episode(model, viewed), model.attention, cfg.meta)
                check_finite(breakdown, step)

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
                    seed=seed,
                ))
                logger.debug(f"[{STAGE}] step {step} lr={lr:.5f} total={losses['total']:.4f}")
                step += 1

            metadata = {
                "stage": STAGE,
                "epoch": epoch,
                "step": step,
                "seed": cfg.seed,
                "n_base_classes": n_classes,
                "best_val_acc": best_acc,
            }
            val_acc, improved = None, False
            if val_split is not None and mcfg.val_episodes > 0:
                val_acc = float(np.mean(evaluate_episodes(
                    model,
                    val_split,
                    spec,
                    mcfg.val_episodes,
                    cfg.seed,
                    stream=f"{STAGE}-val",
                    bypass_attention=cfg.meta.bypass_attention,
                    squared=cfg.meta.squared_distance,
                )))
                metadata["val_acc"] = val_acc
                if val_acc > best_acc:
                    best_acc = metadata["best_val_acc"] = val_acc
                    improved = True

            mean_total = float(np.mean(totals)) if totals else float("nan")
            result.epoch_losses.append(mean_total)
            result.checkpoint = save_checkpoint(
                os.path.join(out_dir, "checkpoints", f"epoch_{epoch:03d}"), model, optimizer, metadata
            )
            if improved:
                copy_checkpoint(result.checkpoint, os.path.join(out_dir, "best"))
            val_text = f" val acc {100 * val_acc:.2f}%" if val_acc is not None else ""
            logger.info(
                f"[{STAGE}] epoch {epoch + 1}/{mcfg.epochs} mean loss {mean_total:.4f} lr {lr:.5f}"
                f"{val_text} ({time.perf_counter() - epoch_start:.1f}s)"
            )
    return result
