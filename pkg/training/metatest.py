"""
Episodic evaluation: nearest aligned prototype on un-augmented episodes,
mean accuracy with a 95% confidence interval of 1.96 * sigma / sqrt(E),
sigma being the sample standard deviation of per-episode accuracies.
"""

import copy
import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from typing import List, Optional, Sequence

import numpy as np

from autograd import no_grad
from config import EpisodeSpec, RunConfig
from data.augment import derive_seed
from data.episodes import episode_images, sample_episode
from data.splits import DatasetSplit, load_split
from losses.episodic import meta_test_predict
from models.encoder import FewShotModel
from schemas import AccuracyReport, write_record
from training.checkpoint import resolve_checkpoint
from training.runtime import embed_view, model_from_checkpoint

logger = logging.getLogger(__name__)

STAGE = "metatest"
REPORT_NAME = "metatest_report.json"


def confidence_interval(accuracies: Sequence[float]) -> float:
    values = np.asarray(accuracies, dtype=np.float64)
    if len(values) < 2:
        return 0.0
    return float(1.96 * values.std(ddof=1) / np.sqrt(len(values)))


def score_episode(
    model: FewShotModel,
    split: DatasetSplit,
    spec: EpisodeSpec,
    seed: int,
    bypass_attention: bool = False,
    squared: bool = False,
) -> float:
    episode = sample_episode(split, spec, seed)
    with no_grad():
        view = embed_view(model, episode_images(split, episode), episode.support_labels, episode.query_labels)
        attn = None if bypass_attention else model.attention
        predictions = meta_test_predict(view, episode.ways, attn, squared)
    return float(np.mean(predictions == episode.query_labels))


def evaluate_episodes(
    model: FewShotModel,
    split: DatasetSplit,
    spec: EpisodeSpec,
    n_episodes: int,
    master_seed: int,
    stream: str = STAGE,
    workers: int = 1,
    bypass_attention: bool = False,
    squared: bool = False,
) -> List[float]:
    """Per-episode accuracies in episode-index order."""
    model.eval()
    seeds = [derive_seed(master_seed, stream, 0, i, 0) for i in range(n_episodes)]

    def run_chunk(chunk: List[int]) -> List[float]:
        local = copy.deepcopy(model) if workers > 1 else model
        return [score_episode(local, split, spec, seeds[i], bypass_attention, squared) for i in chunk]

    if workers <= 1:
        return run_chunk(list(range(n_episodes)))
    chunks = [list(range(n_episodes))[w::workers] for w in range(workers)]
    accuracies = [0.0] * n_episodes
    with ThreadPoolExecutor(max_workers=workers) as pool:
        for chunk, scores in zip(chunks, pool.map(run_chunk, chunks)):
            for i, score in zip(chunk, scores):
                accuracies[i] = score
    return accuracies


def metatest_loop(
    cfg: RunConfig,
    checkpoint: Optional[str] = None,
    out_dir: Optional[str] = None,
    split: Optional[DatasetSplit] = None,
) -> AccuracyReport:
    out_dir = out_dir or cfg.out_dir
    os.makedirs(out_dir, exist_ok=True)
    tcfg = cfg.metatest
    spec = EpisodeSpec(ways=tcfg.ways, shots=tcfg.shots, queries=tcfg.queries, seed=cfg.seed)
    split = split or load_split(cfg.data.test_manifest, min_per_class=spec.shots + spec.queries)

    source = resolve_checkpoint(checkpoint or cfg.train.init_checkpoint)
    model, _ = model_from_checkpoint(cfg, source)
    logger.info(f"Meta-test: {tcfg.episodes} episodes, {spec.ways}-way {spec.shots}-shot, checkpoint {source}")

    started = time.perf_counter()
    accuracies = evaluate_episodes(
        model,
        split,
        spec,
        tcfg.episodes,
        cfg.seed,
        workers=tcfg.workers,
        bypass_attention=cfg.meta.bypass_attention,
        squared=cfg.meta.squared_distance,
    )
    report = AccuracyReport(
        mean=float(np.mean(accuracies)) if accuracies else 0.0,
        ci95=confidence_interval(accuracies),
        episodes=len(accuracies),
        ways=spec.ways,
        shots=spec.shots,
        queries=spec.queries,
        checkpoint=source,
        accuracies=accuracies,
    )
    write_record(os.path.join(out_dir, REPORT_NAME), report)
    logger.info(f"[{STAGE}] {report.summary()} ({time.perf_counter() - started:.1f}s)")
    return report
