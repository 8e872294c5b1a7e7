"""End-to-end runs: meta-training, subspace recovery, few-shot learning.

Each ``evaluate_*`` function computes every record for one grid point.
All randomness is keyed by ``derive_seed(master_seed, kind, point...)`` so
results do not depend on evaluation order or worker count.
"""

from __future__ import annotations

import math
import threading
import warnings
from dataclasses import dataclass, field

import numpy as np

from metarep.fewshot import FewShotModel, FewShotProblem, classification_accuracy, excess_risk, solve_erm
from metarep.harness.config import ExperimentConfig, ExperimentKind
from metarep.harness.records import ExperimentRecord
from metarep.linalg import SeededRng, derive_seed, sym_eig
from metarep.moments import MomentMatrix, glm_population_M, moment_estimator
from metarep.subspace import (
    DegenerateGapWarning,
    RecoveredSubspace,
    procrustes_align,
    recover_subspace,
    spectral_norm,
    subspace_correlation,
    subspace_from_eigen,
)
from metarep.tasks import (
    MetaDataset,
    Representation,
    TaskKind,
    TaskSpec,
    draw_labels,
    make_meta_dataset,
    sample_glm_task,
)

# stream ids for few-shot draws, kept far from the per-task streams 1..k
FEWSHOT_TASK_STREAM = 1 << 40
FEWSHOT_EVAL_STREAM = FEWSHOT_TASK_STREAM + 1
FEWSHOT_RISK_STREAM = FEWSHOT_TASK_STREAM + 2
FEWSHOT_TRAIN_STREAM = FEWSHOT_TASK_STREAM + 16


@dataclass(frozen=True)
class GridPoint:
    seed: int
    n: int
    k: int
    r: int

    def key(self) -> tuple:
        return (self.seed, self.n, self.k, self.r)


@dataclass
class PipelineResult:
    dataset: MetaDataset
    moment: MomentMatrix
    subspace: RecoveredSubspace
    model: FewShotModel | None
    metrics: dict = field(default_factory=dict)


def _task_kind(kind: ExperimentKind) -> str:
    return "relu_net" if kind is ExperimentKind.SUBSPACE_RECOVERY_RELU else "glm_logistic"


def point_seed(config: ExperimentConfig, point: GridPoint, *tag) -> int:
    return derive_seed(int(config.master_seed), config.kind.value, *tag, *(int(v) for v in point.key()))


def meta_train(config: ExperimentConfig, point: GridPoint, seed: int):
    ds = make_meta_dataset(
        seed, d=config.d, r=point.r, k=point.k, n=point.n, kind=_task_kind(config.kind),
        theta_norm_max=config.task.theta_norm_max, hidden=config.task.hidden,
        noise_std=config.task.noise_std,
    )
    moment = moment_estimator(ds)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DegenerateGapWarning)
        sub = recover_subspace(moment, point.r)
    return ds, moment, sub


def recovery_metrics(sub: RecoveredSubspace, rep: Representation) -> dict:
    align = procrustes_align(sub, rep)
    return {
        "subspace_correlation": subspace_correlation(sub, rep),
        "frobenius_residual": align.frobenius_residual,
        "spectral_residual": align.spectral_residual,
        "spectral_gap": sub.spectral_gap,
    }


@dataclass
class FewShotTask:
    rep: Representation
    theta_star: np.ndarray
    X_eval: np.ndarray
    y_eval: np.ndarray
    seed: int

    def train_set(self, n: int):
        rng = SeededRng(self.seed, FEWSHOT_TRAIN_STREAM + int(n))
        X = rng.normal((int(n), self.rep.d))
        return X, _glm_labels(rng, self.rep, self.theta_star, X)


def _glm_labels(rng, rep, theta_star, X):
    spec = TaskSpec(-1, TaskKind.GLM_LOGISTIC, theta=theta_star)
    return draw_labels(rng, spec, rep, X)


def make_fewshot_task(rep: Representation, seed: int, eval_n: int,
                      theta_norm_max: float = math.inf) -> FewShotTask:
    """A fresh GLM task on ``rep`` with a shared held-out evaluation set."""
    spec = sample_glm_task(SeededRng(seed, FEWSHOT_TASK_STREAM), rep, theta_norm_max)
    erng = SeededRng(seed, FEWSHOT_EVAL_STREAM)
    X_eval = erng.normal((int(eval_n), rep.d))
    y_eval = _glm_labels(erng, rep, spec.theta, X_eval)
    return FewShotTask(rep, spec.theta, X_eval, y_eval, seed)


def fit_and_score(P, X, y, task: FewShotTask, config: ExperimentConfig, risk_seed: int | None = None):
    fs = config.fewshot
    model = solve_erm(FewShotProblem(P, X, y, fs.a), step=fs.step, max_iter=fs.max_iter, tol=fs.tol)
    acc = classification_accuracy(model.theta, P, task.X_eval, task.y_eval)
    out = {"accuracy": acc, "converged": float(model.converged)}
    if risk_seed is not None:
        gap, se = excess_risk(model.theta, P, task.rep, task.theta_star, config.mc_samples,
                              SeededRng(risk_seed, FEWSHOT_RISK_STREAM))
        out["excess_risk"] = (gap, se)
    return model, out


def run_pipeline(config: ExperimentConfig, seed: int = 0) -> PipelineResult:
    """Generate tasks, estimate ``M_hat``, recover ``U_r``, then fit one new task.

    Uses the first value of each grid (``r_grid``, ``k_grid``, ``n_grid``,
    ``fewshot.n_grid``). The few-shot task is a fresh GLM task on the
    same ``W``, fit in the recovered subspace ``P = U_r^T``.
    """
    config.validate()
    point = GridPoint(int(seed), int(config.n_grid[0]), int(config.k_grid[0]), int(config.r_grid[0]))
    ds, moment, sub = meta_train(config, point, point_seed(config, point, "meta"))
    metrics = recovery_metrics(sub, ds.representation)
    if ds.kind == "glm_logistic":
        oracle = glm_population_M(ds.specs, ds.representation)
        metrics["moment_error"] = spectral_norm(moment.M - oracle.M)
    fs_n = int(config.fewshot.n_grid[0])
    fseed = point_seed(config, point, "fewshot")
    task = make_fewshot_task(ds.representation, fseed, config.fewshot.eval_n, config.fewshot.theta_norm_max)
    X, y = task.train_set(fs_n)
    model, scores = fit_and_score(sub.U_r.T, X, y, task, config,
                                  risk_seed=fseed if config.mc_samples >= 10_000 else None)
    metrics["fewshot_accuracy"] = scores["accuracy"]
    if "excess_risk" in scores:
        metrics["excess_risk"] = scores["excess_risk"][0]
    return PipelineResult(ds, moment, sub, model, metrics)


# -- per-kind grid evaluation ----------------------------------------------

def _rec(config, point, n, r, metric, value, stderr=None):
    return ExperimentRecord(config.kind.value, point.seed, int(n), point.k, int(r), metric,
                            float(value), None if stderr is None else float(stderr))


def evaluate_recovery(config: ExperimentConfig, point: GridPoint) -> list[ExperimentRecord]:
    ds, _, sub = meta_train(config, point, point_seed(config, point))
    return [_rec(config, point, point.n, point.r, m, v)
            for m, v in recovery_metrics(sub, ds.representation).items()]


def evaluate_concentration(config: ExperimentConfig, point: GridPoint) -> list[ExperimentRecord]:
    ds, moment, _ = meta_train(config, point, point_seed(config, point))
    oracle = glm_population_M(ds.specs, ds.representation)
    diff = moment.M - oracle.M
    return [
        _rec(config, point, point.n, point.r, "moment_error_spectral", spectral_norm(diff)),
        _rec(config, point, point.n, point.r, "moment_error_frobenius", np.linalg.norm(diff)),
    ]


def evaluate_fewshot_synthetic(config: ExperimentConfig, point: GridPoint) -> list[ExperimentRecord]:
    """Meta-train once, then fit the same new task at every few-shot ``n``.

    Compares ``P = U_r^T`` (recovered), ``P = I_d`` (no representation) and
    ``P = W`` (oracle) on a shared evaluation set.
    """
    ds, _, sub = meta_train(config, point, point_seed(config, point, "meta"))
    rep = ds.representation
    out = [_rec(config, point, point.n, point.r, m, v) for m, v in recovery_metrics(sub, rep).items()]
    fseed = point_seed(config, point, "fewshot")
    task = make_fewshot_task(rep, fseed, config.fewshot.eval_n, config.fewshot.theta_norm_max)
    with_risk = config.mc_samples >= 10_000
    projections = {"rep": sub.U_r.T, "baseline": np.eye(rep.d), "oracle": rep.W}
    for fs_n in config.fewshot.n_grid:
        X, y = task.train_set(fs_n)
        for label, P in projections.items():
            _, scores = fit_and_score(P, X, y, task, config, fseed if with_risk else None)
            out.append(_rec(config, point, fs_n, point.r, f"accuracy_{label}", scores["accuracy"]))
            if with_risk:
                gap, se = scores["excess_risk"]
                out.append(_rec(config, point, fs_n, point.r, f"excess_risk_{label}", gap, se))
    return out


_MNIST_CACHE: dict = {}
_MNIST_LOCK = threading.Lock()


def _mnist_meta(config: ExperimentConfig):
    from metarep.mnist import build_digit_pair_tasks, load_mnist

    mp = config.mnist
    if not mp.mnist_dir:
        raise ValueError("mnist.mnist_dir is not set")
    key = (str(mp.mnist_dir), tuple(tuple(p) for p in mp.pairs), mp.per_class, mp.meta_seed)
    with _MNIST_LOCK:
        if key not in _MNIST_CACHE:
            images, labels = load_mnist(mp.mnist_dir)
            meta = build_digit_pair_tasks(images, labels, mp.pairs, mp.per_class, seed=mp.meta_seed)
            eig = sym_eig(moment_estimator(meta.tasks).M)
            _MNIST_CACHE.clear()
            _MNIST_CACHE[key] = (images, labels, meta, eig)
        return _MNIST_CACHE[key]


def evaluate_fewshot_mnist(config: ExperimentConfig, point: GridPoint) -> list[ExperimentRecord]:
    """Held-out digit pair at one few-shot ``n``, for every ``r`` plus the ``P = I`` baseline."""
    from metarep.mnist import build_fewshot_task

    images, labels, meta, eig = _mnist_meta(config)
    d = images.shape[1]
    seed = point_seed(config, point, "fewshot")
    split = build_fewshot_task(images, labels, meta.center, tuple(config.mnist.fewshot_pair),
                               n=point.n, eval_n=config.fewshot.eval_n, seed=seed)
    fs = config.fewshot
    out = []

    def fit(P):
        model = solve_erm(FewShotProblem(P, split.X, split.y, fs.a), step=fs.step,
                          max_iter=fs.max_iter, tol=fs.tol)
        return classification_accuracy(model.theta, P, split.X_eval, split.y_eval)

    for r in config.r_grid:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", DegenerateGapWarning)
            sub = subspace_from_eigen(eig, min(int(r), d))
        out.append(ExperimentRecord(config.kind.value, point.seed, point.n, meta.k, int(r),
                                    "accuracy_rep", fit(sub.U_r.T)))
    out.append(ExperimentRecord(config.kind.value, point.seed, point.n, meta.k, d,
                                "accuracy_baseline", fit(np.eye(d))))
    return out


EVALUATORS = {
    ExperimentKind.SUBSPACE_RECOVERY_GLM: evaluate_recovery,
    ExperimentKind.SUBSPACE_RECOVERY_RELU: evaluate_recovery,
    ExperimentKind.CONCENTRATION: evaluate_concentration,
    ExperimentKind.FEWSHOT_SYNTHETIC: evaluate_fewshot_synthetic,
    ExperimentKind.FEWSHOT_MNIST: evaluate_fewshot_mnist,
}


def grid_points(config: ExperimentConfig) -> list[GridPoint]:
    """Cartesian grid x seeds, in a fixed order."""
    if config.kind is ExperimentKind.FEWSHOT_MNIST:
        k = len(config.mnist.pairs)
        return [GridPoint(int(s), int(n), k, 0) for n in config.fewshot.n_grid for s in config.seeds]
    return [GridPoint(int(s), int(n), int(k), int(r))
            for r in config.r_grid for k in config.k_grid for n in config.n_grid for s in config.seeds]
