"""
Turn a metrics stream (and an optional meta-test report) into CSV tables and
a plain-text summary. Outputs are files only; plotting is left to the reader.
"""

import logging
import os
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import pandas as pd

from config import RunConfig
from schemas import AccuracyReport, read_record
from training.metatest import REPORT_NAME, STAGE as METATEST_STAGE

logger = logging.getLogger(__name__)

CURVES_NAME = "loss_curves.csv"
EPOCHS_NAME = "epoch_summary.csv"
ACCURACY_NAME = "accuracy.csv"
SUMMARY_NAME = "report.txt"


@dataclass
class Report:
    rows: int
    curves_path: str
    summary_path: str
    accuracy_path: Optional[str] = None
    lines: List[str] = field(default_factory=list)


def load_metrics_frame(metrics_path: str) -> pd.DataFrame:
    """One row per step; loss terms become `losses.<name>` columns."""
    if not os.path.exists(metrics_path) or os.path.getsize(metrics_path) == 0:
        return pd.DataFrame()
    records = pd.read_json(metrics_path, lines=True, dtype=False)
    if records.empty:
        return records
    losses = pd.json_normalize(records["losses"].tolist()).add_prefix("losses.")
    frame = pd.concat([records.drop(columns=["losses"]).reset_index(drop=True), losses], axis=1)
    return frame.sort_values("step", kind="stable").reset_index(drop=True)


def inverse_temperatures(cfg: RunConfig) -> Dict[str, float]:
    taus = {name: getattr(cfg.loss, name) for name in ("tau1", "tau2", "tau3", "tau4")}
    taus["tau5"] = cfg.meta.tau5
    return {f"1/{name}": 1.0 / value for name, value in taus.items()}


def accuracy_candidates(metrics_path: str, cfg: Optional[RunConfig] = None) -> List[str]:
    """Where a meta-test report is looked for when none is named."""
    candidates = [os.path.join(os.path.dirname(metrics_path), REPORT_NAME)]
    if cfg is not None:
        candidates.append(os.path.join(cfg.out_dir, METATEST_STAGE, REPORT_NAME))
    return candidates


def report(
    metrics_path: str,
    out_dir: Optional[str] = None,
    cfg: Optional[RunConfig] = None,
    accuracy_report: Optional[str] = None,
) -> Report:
    out_dir = out_dir or os.path.dirname(metrics_path) or "."
    os.makedirs(out_dir, exist_ok=True)
    curves_path = os.path.join(out_dir, CURVES_NAME)
    summary_path = os.path.join(out_dir, SUMMARY_NAME)

    frame = load_metrics_frame(metrics_path)
    lines = [f"metrics: {metrics_path}"]
    if frame.empty:
        logger.warning(f"Metrics file {metrics_path} is empty; writing an empty report")
        lines.append("no metrics records")
        pd.DataFrame(columns=["step", "epoch", "stage", "lr", "wall_ms", "seed"]).to_csv(curves_path, index=False)
    else:
        frame.to_csv(curves_path, index=False)
        loss_cols = [c for c in frame.columns if c.startswith("losses.")]
        per_epoch = frame.groupby(["stage", "epoch"], sort=True)[loss_cols + ["lr", "wall_ms"]].mean().reset_index()
        per_epoch.to_csv(os.path.join(out_dir, EPOCHS_NAME), index=False)
        lines.append(f"records: {len(frame)} (steps {int(frame['step'].min())}..{int(frame['step'].max())})")
        for (stage, epoch), row in per_epoch.set_index(["stage", "epoch"]).iterrows():
            terms = ", ".join(f"{c[len('losses.'):]}={row[c]:.4f}" for c in loss_cols if pd.notna(row[c]))
            lines.append(f"{stage} epoch {int(epoch)}: lr={row['lr']:.5f} {terms}")

    accuracy_path = None
    candidates = [accuracy_report] if accuracy_report else accuracy_candidates(metrics_path, cfg)
    found = next((path for path in candidates if os.path.exists(path)), None)
    if found:
        acc = read_record(found, AccuracyReport)
        accuracy_path = os.path.join(out_dir, ACCURACY_NAME)
        pd.DataFrame([{
            "ways": acc.ways,
            "shots": acc.shots,
            "episodes": acc.episodes,
            "accuracy": acc.mean,
            "ci95": acc.ci95,
        }]).to_csv(accuracy_path, index=False)
        lines.append(f"accuracy: {acc.summary()} ({found})")

    if cfg is not None:
        inverse = inverse_temperatures(cfg)
        lines.append("inverse temperatures: " + ", ".join(f"{k}={v:g}" for k, v in inverse.items()))

    with open(summary_path, "w", encoding="utf-8") as f:
        f.write("\n".join(lines) + "\n")
    logger.info(f"Report written to {out_dir} ({len(frame)} records)")
    return Report(rows=len(frame), curves_path=curves_path, summary_path=summary_path,
                  accuracy_path=accuracy_path, lines=lines)
