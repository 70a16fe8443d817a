"""Append-only metric log.

CSV columns: ``run_id,iteration,metric,key,value,embedding_checksum,sample_counts``.
``key`` distinguishes entries of multi-valued metrics (class index for
``fid_per_class``, ``avg`` for averages) and is empty otherwise.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

from ..exceptions import ValidationError

METRICS = ("fid", "fid_per_class", "fid_all", "iw", "accuracy")
FIELDS = ("run_id", "iteration", "metric", "key", "value", "embedding_checksum", "sample_counts")


@dataclass(frozen=True)
class MetricReport:
    run_id: str
    iteration: int
    metric: str
    value: float
    embedding_checksum: str = ""
    sample_counts: str = ""
    key: str = ""

    def __post_init__(self):
        if self.metric not in METRICS:
            raise ValidationError(f"unknown metric {self.metric!r}")

    def row(self) -> list:
        return [self.run_id, self.iteration, self.metric, self.key, repr(float(self.value)),
                self.embedding_checksum, self.sample_counts]


class MetricsLog:
    """Appends :class:`MetricReport` rows; existing rows are never rewritten."""

    def __init__(self, path):
        self.path = Path(path)

    def append(self, *reports: MetricReport) -> None:
        self.path.parent.mkdir(parents=True, exist_ok=True)
        new = not self.path.exists() or self.path.stat().st_size == 0
        with open(self.path, "a", newline="") as fh:
            w = csv.writer(fh)
            if new:
                w.writerow(FIELDS)
            for r in reports:
                w.writerow(r.row())

    def read(self) -> list[MetricReport]:
        return read_metrics(self.path)


def read_metrics(path) -> list[MetricReport]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [MetricReport(run_id=r["run_id"], iteration=int(r["iteration"]), metric=r["metric"],
                         value=float(r["value"]), embedding_checksum=r["embedding_checksum"],
                         sample_counts=r["sample_counts"], key=r["key"]) for r in rows]


def trajectory(reports, run_id: str, metric: str = "fid", key: str = "") -> list[tuple[int, float]]:
    return sorted((r.iteration, r.value) for r in reports
                  if r.run_id == run_id and r.metric == metric and r.key == key)



