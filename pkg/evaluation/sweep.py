"""
Scripted ablation grids. Each row is a list of dotted overrides applied to a
copy of the base config; every row runs in its own sub-directory and the
per-row loss breakdowns (mean of the last epoch) are collected in sweep.csv.

    pretrain  8 rows: global_ss x local_ss x global_sup on/off, CE always on
    local     4 rows: vec_map x map_map on/off, local_ss on, others off
    meta      5 rows: CE only / +CL / +CL+CVET / +CL+info / +CL+CVET+info
"""

import copy
import itertools
import logging
import os
from dataclasses import dataclass
from typing import Dict, List, Optional

import pandas as pd

from config import RunConfig, apply_overrides, save_config
from evaluation.report import load_metrics_frame
from training.metatest import metatest_loop
from training.metatrain import metatrain_loop
from training.pretrain import pretrain_loop

logger = logging.getLogger(__name__)

SWEEP_NAME = "sweep.csv"


@dataclass
class SweepRow:
    name: str
    overrides: List[str]


def _flag(value: bool) -> str:
    return "true" if value else "false"


def pretrain_grid() -> List[SweepRow]:
    rows = []
    for global_ss, local_ss, global_sup in itertools.product((False, True), repeat=3):
        name = "ce" + "".join(
            suffix for on, suffix in ((global_ss, "+gss"), (local_ss, "+lss"), (global_sup, "+gsup")) if on
        )
        rows.append(SweepRow(name, [
            "loss.use_ce=true",
            f"loss.use_global_ss={_flag(global_ss)}",
            f"loss.use_local_ss={_flag(local_ss)}",
            f"loss.use_global_sup={_flag(global_sup)}",
        ]))
    return rows


def local_grid() -> List[SweepRow]:
    rows = []
    for vec_map, map_map in itertools.product((False, True), repeat=2):
        name = "local" + ("+vec" if vec_map else "") + ("+map" if map_map else "")
        rows.append(SweepRow(name, [
            "loss.use_global_ss=false",
            "loss.use_global_sup=false",
            "loss.use_local_ss=true",
            f"loss.use_vec_map={_flag(vec_map)}",
            f"loss.use_map_map={_flag(map_map)}",
        ]))
    return rows


def meta_grid() -> List[SweepRow]:
    ce_only = ["loss.use_global_ss=false", "loss.use_local_ss=false", "loss.use_global_sup=false"]
    with_cl = ["loss.use_global_ss=true", "loss.use_local_ss=true", "loss.use_global_sup=true"]
    return [
        SweepRow("ce", ce_only + ["meta.use_cvet=false", "meta.use_info=false"]),
        SweepRow("ce+cl", with_cl + ["meta.use_cvet=false", "meta.use_info=false"]),
        SweepRow("ce+cl+cvet", with_cl + ["meta.use_cvet=true", "meta.use_info=false"]),
        SweepRow("ce+cl+info", with_cl + ["meta.use_cvet=false", "meta.use_info=true"]),
        SweepRow("ce+cl+cvet+info", with_cl + ["meta.use_cvet=true", "meta.use_info=true"]),
    ]


GRIDS = {"pretrain": pretrain_grid, "local": local_grid, "meta": meta_grid}


def last_epoch_means(metrics_path: str, prefix: str) -> Dict[str, float]:
    frame = load_metrics_frame(metrics_path)
    if frame.empty:
        return {}
    last = frame[frame["epoch"] == frame["epoch"].max()]
    cols = [c for c in frame.columns if c.startswith("losses.")]
    means = last[cols].mean()
    return {f"{prefix}.{c[len('losses.'):]}": float(v) for c, v in means.items() if pd.notna(v)}


def run_sweep(cfg: RunConfig, grid: str, out_dir: Optional[str] = None) -> pd.DataFrame:
    if grid not in GRIDS:
        raise ValueError(f"unknown grid '{grid}', expected one of {sorted(GRIDS)}")
    out_dir = out_dir or os.path.join(cfg.out_dir, f"sweep_{grid}")
    os.makedirs(out_dir, exist_ok=True)
    records = []
    for row in GRIDS[grid]():
        row_cfg = apply_overrides(copy.deepcopy(cfg), row.overrides)
        row_dir = os.path.join(out_dir, row.name)
        logger.info(f"Sweep {grid}: row '{row.name}' -> {row_dir}")
        save_config(row_cfg, os.path.join(out_dir, f"{row.name}.txt"))

        record = {"row": row.name, "overrides": " ".join(row.overrides)}
        pre = pretrain_loop(row_cfg, out_dir=os.path.join(row_dir, "pretrain"))
        record.update(last_epoch_means(pre.metrics_path, "pretrain"))
        if grid == "meta":
            meta = metatrain_loop(row_cfg, init_checkpoint=pre.checkpoint, out_dir=os.path.join(row_dir, "metatrain"))
            record.update(last_epoch_means(meta.metrics_path, "metatrain"))
            acc = metatest_loop(row_cfg, checkpoint=meta.out_dir, out_dir=os.path.join(row_dir, "metatest"))
            record.update({"accuracy": acc.mean, "ci95": acc.ci95})
        records.append(record)

    frame = pd.DataFrame(records)
    frame.to_csv(os.path.join(out_dir, SWEEP_NAME), index=False)
    logger.info(f"Sweep {grid}: {len(frame)} rows written to {os.path.join(out_dir, SWEEP_NAME)}")
    return frame
