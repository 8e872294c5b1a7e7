"""Experiment configuration: a nested dataclass mirrored by YAML files and CLI flags."""

from __future__ import annotations

import dataclasses
import enum
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import yaml

PRESETS = ("fig1a", "fig1b", "fig3a", "fig3b", "concentration")


class ExperimentKind(str, enum.Enum):
    SUBSPACE_RECOVERY_GLM = "subspace_recovery_glm"
    SUBSPACE_RECOVERY_RELU = "subspace_recovery_relu"
    FEWSHOT_SYNTHETIC = "fewshot_synthetic"
    FEWSHOT_MNIST = "fewshot_mnist"
    CONCENTRATION = "concentration"


@dataclass
class TaskParams:
    theta_norm_max: float = math.inf
    hidden: int = 20
    noise_std: float = 1.0


@dataclass
class FewShotParams:
    n_grid: list = field(default_factory=lambda: [10])
    eval_n: int = 1000
    a: float = math.inf
    theta_norm_max: float = math.inf
    step: float = 1.0
    max_iter: int = 10_000
    tol: float = 1e-9


@dataclass
class MnistParams:
    mnist_dir: str | None = None
    pairs: list = field(default_factory=lambda: [list(p) for p in _default_pairs()])
    fewshot_pair: list = field(default_factory=lambda: [1, 9])
    per_class: int = 500
    meta_seed: int = 0


def _default_pairs():
    from metarep.mnist import DEFAULT_META_PAIRS

    return DEFAULT_META_PAIRS


@dataclass
class ExperimentConfig:
    kind: ExperimentKind = ExperimentKind.SUBSPACE_RECOVERY_GLM
    master_seed: int = 0
    seeds: list = field(default_factory=lambda: [0])
    d: int = 50
    r_grid: list = field(default_factory=lambda: [5])
    k_grid: list = field(default_factory=lambda: [100])
    n_grid: list = field(default_factory=lambda: [100])
    task: TaskParams = field(default_factory=TaskParams)
    fewshot: FewShotParams = field(default_factory=FewShotParams)
    mnist: MnistParams = field(default_factory=MnistParams)
    mc_samples: int = 100_000
    out: str | None = None
    data: str | None = None
    subspace: str | None = None
    export_csv: bool = False
    report_format: str = "csv"
    workers: int | None = None

    def __post_init__(self):
        self.kind = ExperimentKind(self.kind)
        for name in ("task", "fewshot", "mnist"):
            value = getattr(self, name)
            if isinstance(value, dict):
                setattr(self, name, _build(_SECTIONS[name], value))
        self.seeds = [int(s) for s in self.seeds]

    def validate(self) -> "ExperimentConfig":
        """Raise ``ValueError`` on non-positive grids or odd meta-training ``n``."""
        grids = {"r_grid": self.r_grid, "k_grid": self.k_grid, "n_grid": self.n_grid,
                 "fewshot.n_grid": self.fewshot.n_grid}
        for name, grid in grids.items():
            if any(int(v) <= 0 for v in grid):
                raise ValueError(f"{name} values must be positive")
        if self.kind is not ExperimentKind.FEWSHOT_MNIST:
            if any(int(v) % 2 for v in self.n_grid):
                raise ValueError("meta-training n values must be even")
            if any(int(r) > self.d for r in self.r_grid):
                raise ValueError("r cannot exceed d")
        if self.d <= 0 or self.mc_samples <= 0 or self.fewshot.eval_n <= 0:
            raise ValueError("d, mc_samples and fewshot.eval_n must be positive")
        return self

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["kind"] = self.kind.value
        return out

    def identity(self) -> dict:
        """Fields that determine results; excludes where results are written."""
        out = self.to_dict()
        for key in NON_RESULT_KEYS:
            out.pop(key)
        out["mnist"].pop("mnist_dir")
        return out


# keys that only say where things are read or written, or how fast
NON_RESULT_KEYS = ("out", "data", "subspace", "export_csv", "report_format", "workers")

_SECTIONS = {"task": TaskParams, "fewshot": FewShotParams, "mnist": MnistParams}


def _coerce(value):
    if isinstance(value, str) and value.strip().lower() in ("inf", "+inf", ".inf", "infinity"):
        return math.inf
    return value


def _build(cls, values: dict):
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(values) - names
    if unknown:
        raise ValueError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    return cls(**{k: _coerce(v) for k, v in values.items()})


def config_from_dict(values: dict) -> ExperimentConfig:
    values = dict(values or {})
    for name in _SECTIONS:
        if name in values and values[name] is None:
            values[name] = {}
    return _build(ExperimentConfig, values)


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        return config_from_dict(yaml.safe_load(fh))


def load_preset(name: str) -> ExperimentConfig:
    if name not in PRESETS:
        raise ValueError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    text = resources.files("metarep.presets").joinpath(f"{name}.yaml").read_text()
    return config_from_dict(yaml.safe_load(text))


def apply_overrides(config: ExperimentConfig, assignments) -> ExperimentConfig:
    """Apply ``key=value`` strings (dotted keys for sections; YAML-parsed values)."""
    values = config.to_dict()
    for item in assignments:
        key, sep, raw = item.partition("=")
        if not sep:
            raise ValueError(f"override {item!r} is not key=value")
        parts = key.strip().split(".")
        target = values
        for part in parts[:-1]:
            if not isinstance(target.get(part), dict):
                raise ValueError(f"unknown config section {part!r}")
            target = target[part]
        if parts[-1] not in target:
            raise ValueError(f"unknown config key {key!r}")
        target[parts[-1]] = yaml.safe_load(raw)
    return config_from_dict(values)


def dump_config(config: ExperimentConfig, path) -> None:
    Path(path).write_text(yaml.safe_dump(config.to_dict(), sort_keys=False))
