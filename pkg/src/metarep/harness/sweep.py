"""Grid execution with a thread pool, per-point checkpoints and error rows."""

from __future__ import annotations

import hashlib
import json
import logging
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from metarep.harness.config import ExperimentConfig, dump_config
from metarep.harness.pipeline import EVALUATORS, GridPoint, grid_points
from metarep.harness.records import ExperimentRecord, sort_records, write_records_csv
from metarep.io import write_json

log = logging.getLogger(__name__)

THREADS_ENV = "METAREP_THREADS"
RECORDS_FILE = "records.csv"
POINTS_DIR = "points"


def resolve_workers(requested: int | None = None) -> int:
    """Pool size: ``requested`` (default: CPU count) capped by ``METAREP_THREADS``."""
    workers = requested or os.cpu_count() or 1
    cap = os.environ.get(THREADS_ENV)
    if cap:
        workers = min(workers, max(1, int(cap)))
    return max(1, int(workers))


def point_key(config: ExperimentConfig, point: GridPoint) -> str:
    """Content address of a grid point: hash of the result-relevant config plus the point."""
    payload = json.dumps({"config": config.identity(), "point": list(point.key())},
                         sort_keys=True, default=str)
    return hashlib.sha256(payload.encode()).hexdigest()[:24]


def _error_rows(config, point, exc) -> list[ExperimentRecord]:
    return [ExperimentRecord(config.kind.value, point.seed, point.n, point.k, point.r,
                             f"error:{type(exc).__name__}", math.nan)]


def _evaluate(config, point) -> list[ExperimentRecord]:
    start = time.perf_counter()
    try:
        rows = EVALUATORS[config.kind](config, point)
    except Exception as exc:  # recorded and reported, the sweep goes on
        log.warning("grid point %s failed: %s: %s", point, type(exc).__name__, exc)
        rows = _error_rows(config, point, exc)
    wall = (time.perf_counter() - start) * 1000.0
    return [ExperimentRecord(**{**r.to_dict(), "wall_ms": wall}) for r in rows]


def _load_point(path: Path):
    try:
        return [ExperimentRecord.from_dict(row) for row in json.loads(path.read_text())]
    except (OSError, ValueError, TypeError):
        return None


def run_sweep(config: ExperimentConfig, out_dir=None, workers: int | None = None,
              progress=None) -> list[ExperimentRecord]:
    """Evaluate every grid point and return the records in canonical order.

    With ``out_dir`` each finished point is written to
    ``points/<hash>.json`` as soon as it completes; points whose file
    already exists are loaded instead of recomputed. Failures become
    ``error:<Type>`` rows. ``progress(done, total)`` is called after each point.
    """
    config.validate()
    out = Path(out_dir) if out_dir is not None else (Path(config.out) if config.out else None)
    points = grid_points(config)
    if not points:
        return []
    if out is not None:
        (out / POINTS_DIR).mkdir(parents=True, exist_ok=True)
        dump_config(config, out / "config.yaml")

    results: dict = {}
    todo = []
    for p in points:
        cached = _load_point(out / POINTS_DIR / f"{point_key(config, p)}.json") if out else None
        if cached is not None:
            results[p] = cached
        else:
            todo.append(p)

    total = len(points)
    done = total - len(todo)
    if progress and done:
        progress(done, total)

    def finish(p, rows):
        nonlocal done
        results[p] = rows
        if out is not None and not any(r.is_error for r in rows):
            write_json(out / POINTS_DIR / f"{point_key(config, p)}.json", [r.to_dict() for r in rows])
        done += 1
        if progress:
            progress(done, total)

    n_workers = min(resolve_workers(workers), max(1, len(todo)))
    if n_workers == 1:
        for p in todo:
            finish(p, _evaluate(config, p))
    else:
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            futures = {p: pool.submit(_evaluate, config, p) for p in todo}
            # collecting in grid order keeps the single writer deterministic
            for p in todo:
                finish(p, futures[p].result())

    records = sort_records([r for p in points for r in results[p]])
    if out is not None:
        write_records_csv(records, out / RECORDS_FILE)
    return records
