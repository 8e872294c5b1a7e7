"""Sweep records, their CSV form, and aggregation over seeds."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

COLUMNS = ("kind", "seed", "n", "k", "r", "metric", "value", "stderr", "wall_ms")
SUMMARY_COLUMNS = ("kind", "n", "k", "r", "metric", "count", "mean", "median", "stderr")


@dataclass(frozen=True)
class ExperimentRecord:
    kind: str
    seed: int
    n: int
    k: int
    r: int
    metric: str
    value: float
    stderr: float | None = None
    wall_ms: float = 0.0

    @property
    def is_error(self) -> bool:
        return self.metric.startswith("error")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, row: dict) -> "ExperimentRecord":
        return cls(**row)


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _float(text: str):
    return None if text == "" else float(text)


def records_to_csv(records, include_wall: bool = True) -> str:
    cols = COLUMNS if include_wall else COLUMNS[:-1]
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(cols)
    for rec in records:
        row = rec.to_dict()
        writer.writerow([_fmt(row[c]) for c in cols])
    return buf.getvalue()


def parse_records_csv(text: str) -> list[ExperimentRecord]:
    reader = csv.DictReader(io.StringIO(text))
    if tuple(reader.fieldnames or ()) != COLUMNS:
        raise ValueError(f"expected columns {COLUMNS}, got {reader.fieldnames}")
    out = []
    for row in reader:
        out.append(ExperimentRecord(
            kind=row["kind"], seed=int(row["seed"]), n=int(row["n"]), k=int(row["k"]),
            r=int(row["r"]), metric=row["metric"], value=float(row["value"]),
            stderr=_float(row["stderr"]), wall_ms=float(row["wall_ms"]),
        ))
    return out


def write_records_csv(records, path) -> Path:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(records_to_csv(records))
    tmp.replace(path)
    return path


def read_records_csv(path) -> list[ExperimentRecord]:
    return parse_records_csv(Path(path).read_text())


def sort_records(records) -> list[ExperimentRecord]:
    return sorted(records, key=lambda r: (r.kind, r.r, r.k, r.n, r.seed, r.metric))


@dataclass(frozen=True)
class Summary:
    kind: str
    n: int
    k: int
    r: int
    metric: str
    count: int
    mean: float
    median: float
    stderr: float


def aggregate(records) -> list[Summary]:
    """Mean, median and standard error over seeds for every grid point and metric."""
    groups: dict = {}
    for rec in records:
        if rec.is_error:
            continue
        groups.setdefault((rec.kind, rec.n, rec.k, rec.r, rec.metric), []).append(rec.value)
    out = []
    for key in sorted(groups):
        vals = np.asarray(groups[key], dtype=np.float64)
        se = float(np.std(vals, ddof=1) / math.sqrt(vals.size)) if vals.size > 1 else 0.0
        out.append(Summary(*key, int(vals.size), float(vals.mean()), float(np.median(vals)), se))
    return out


def summary_to_csv(summaries) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(SUMMARY_COLUMNS)
    for s in summaries:
        row = asdict(s)
        writer.writerow([_fmt(row[c]) for c in SUMMARY_COLUMNS])
    return buf.getvalue()


def series(summaries, metric: str, **fixed) -> tuple[np.ndarray, np.ndarray]:
    """``(n values, means)`` for one metric, filtered by ``k=..., r=...``."""
    pts = sorted((s.n, s.mean) for s in summaries
                 if s.metric == metric and all(getattr(s, k) == v for k, v in fixed.items()))
    if not pts:
        return np.empty(0), np.empty(0)
    n, m = zip(*pts)
    return np.asarray(n), np.asarray(m)
