"""
Newline-delimited metrics records, one JSON object per optimizer step:

    {"step": 0, "epoch": 0, "stage": "pretrain", "lr": 0.02,
     "losses": {"ce": 2.1, "global_ss": 180.3, ..., "total": 412.9},
     "wall_ms": 153.2, "seed": 1234}
"""

import json
import logging
import os
from typing import List, Optional

from errors import ManifestError
from schemas import MetricsRecord, parse_record

logger = logging.getLogger(__name__)

__all__ = ["MetricsRecord", "MetricsWriter", "read_metrics"]


class MetricsWriter:
    """Append-only writer, flushed per record. resume_step drops records at or after that step first."""

    def __init__(self, path: str, resume_step: Optional[int] = None):
        self.path = path
        os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
        kept: List[MetricsRecord] = []
        if resume_step is not None and os.path.exists(path):
            kept = [r for r in read_metrics(path) if r.step < resume_step]
        self._file = open(path, "w", encoding="utf-8")
        for record in kept:
            self._write_line(record)
        self.count = 0

    def _write_line(self, record: MetricsRecord) -> None:
        self._file.write(json.dumps(record.model_dump(), sort_keys=True) + "\n")
        self._file.flush()

    def write(self, record: MetricsRecord) -> None:
        self._write_line(record)
        self.count += 1

    def close(self) -> None:
        self._file.close()

    def __enter__(self) -> "MetricsWriter":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def read_metrics(path: str) -> List[MetricsRecord]:
    records = []
    with open(path, "r", encoding="utf-8") as f:
        for number, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                payload = json.loads(line)
            except json.JSONDecodeError as e:
                raise ManifestError(f"{path}:{number}: invalid JSON ({e})") from e
            records.append(parse_record(MetricsRecord, payload, f"{path}:{number}"))
    return records
