"""Experiment orchestration: configs, sweeps, records and reports."""

from metarep.harness.config import (
    PRESETS,
    ExperimentConfig,
    ExperimentKind,
    FewShotParams,
    MnistParams,
    TaskParams,
    apply_overrides,
    config_from_dict,
    load_config,
    load_preset,
)
from metarep.harness.pipeline import PipelineResult, GridPoint, grid_points, run_pipeline
from metarep.harness.records import (
    ExperimentRecord,
    Summary,
    aggregate,
    parse_records_csv,
    read_records_csv,
    records_to_csv,
)
from metarep.harness.report import emit_report
from metarep.harness.sweep import resolve_workers, run_sweep

__all__ = [
    "PRESETS", "ExperimentConfig", "ExperimentKind", "FewShotParams", "MnistParams", "TaskParams",
    "apply_overrides", "config_from_dict", "load_config", "load_preset",
    "PipelineResult", "GridPoint", "grid_points", "run_pipeline",
    "ExperimentRecord", "Summary", "aggregate", "parse_records_csv", "read_records_csv",
    "records_to_csv", "emit_report", "resolve_workers", "run_sweep",
]
