"""Split-sample moment estimator and population oracles.

For task ``j`` with ``n_j`` samples the data are split in half and the
two half-sample averages of ``y x`` are formed::

    u_j = (2/n_j) sum_{i <= n_j/2} y_i x_i,   v_j = (2/n_j) sum_{i > n_j/2} y_i x_i

The halves are independent with common mean ``E[y x]``, so

    M_hat = (1/k) sum_j (u_j v_j^T + v_j u_j^T) / 2

is unbiased for ``M = (1/k) sum_j E[y x] E[y x]^T``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from metarep.errors import EmptyDataset, MixedTaskKinds, OddSampleCount
from metarep.linalg import SeededRng
from metarep.tasks import MetaDataset, Representation, TaskData, TaskKind, TaskSpec, logistic, task_mean

PER_TASK_AVERAGE = "per_task_average"


@dataclass(frozen=True)
class MomentMatrix:
    M: np.ndarray
    k_used: int
    normalization: str = PER_TASK_AVERAGE
    stderr: float | None = None

    @property
    def d(self) -> int:
        return self.M.shape[0]


@dataclass(frozen=True)
class TaskMomentVectorPair:
    first: np.ndarray
    second: np.ndarray


def halfsample_means(data: TaskData) -> TaskMomentVectorPair:
    n = data.n
    if n < 2 or n % 2:
        raise OddSampleCount(f"task {data.task_id}: need an even sample count, got {n}")
    yx = data.labels[:, None] * data.inputs
    half = n // 2
    return TaskMomentVectorPair(yx[:half].mean(axis=0), yx[half:].mean(axis=0))


def _task_data(dataset):
    if isinstance(dataset, MetaDataset):
        items = [data for _, data in dataset.tasks]
    else:
        items = list(dataset)
    return sorted(items, key=lambda t: t.task_id)


def moment_estimator(dataset) -> MomentMatrix:
    """``M_hat`` from a ``MetaDataset`` or any iterable of ``TaskData``.

    Outer products are accumulated in ascending task-id order and the
    result is symmetrised as ``(C + C.T)/2``, so it is exactly symmetric
    and bit-reproducible.
    """
    items = _task_data(dataset)
    if not items:
        raise EmptyDataset("no tasks to estimate from")
    d = items[0].inputs.shape[1]
    acc = np.zeros((d, d))
    for data in items:
        pair = halfsample_means(data)
        acc += np.outer(pair.first, pair.second)
    M = (acc + acc.T) / (2.0 * len(items))
    return MomentMatrix(M, len(items))


# -- population oracles ----------------------------------------------------

def _logistic_slope(t):
    p = logistic(t)
    return p * (1.0 - p)


@lru_cache(maxsize=1)
def _legendre16():
    return np.polynomial.legendre.leggauss(16)


def stein_constant(scale: float, link: str = "logistic") -> float:
    """``E[link'(scale * g)]`` for ``g ~ N(0, 1)``.

    Integrated in ``t = scale * g`` with 16-point Gauss-Legendre panels of
    width ``min(1, scale)`` over ``|t| <= min(40, 10 * scale)``. The
    integrand is analytic in a strip of half-width ``min(pi, ~scale)``
    around the real axis, so the panel rule is accurate to rounding for
    any scale; plain Gauss-Hermite degrades badly once ``scale > 2``.
    """
    if link == "identity":
        return 1.0
    if link != "logistic":
        raise ValueError(f"unknown link {link!r}")
    s = float(scale)
    if s == 0.0:
        return 0.25
    half = min(40.0, 10.0 * s)
    panels = max(2, math.ceil(2.0 * half / min(1.0, s)))
    edges = np.linspace(-half, half, panels + 1)
    x, w = _legendre16()
    mid = 0.5 * (edges[1:] + edges[:-1])
    rad = 0.5 * (edges[1:] - edges[:-1])
    t = (mid[:, None] + rad[:, None] * x[None, :]).ravel()
    weights = (rad[:, None] * w[None, :]).ravel()
    gauss = np.exp(-0.5 * (t / s) ** 2) / (s * math.sqrt(2.0 * math.pi))
    return float(np.sum(weights * _logistic_slope(t) * gauss))


def glm_population_h(spec: TaskSpec, rep: Representation, link: str = "logistic") -> np.ndarray:
    """``E[f(W x) x]`` for a GLM task, via Stein's identity.

    With ``a = W.T theta`` and ``x ~ N(0, I)``,
    ``E[link(a.x) x] = E[link'(a.x)] a`` and ``a.x ~ N(0, |a|^2)``.
    ``link="identity"`` is a debugging hook giving ``h = W.T theta``.
    """
    if spec.kind is not TaskKind.GLM_LOGISTIC:
        raise ValueError("glm_population_h needs a GLM task")
    a = rep.W.T @ spec.theta
    return stein_constant(float(np.linalg.norm(a)), link) * a


def _assemble(hs, rep: Representation) -> np.ndarray:
    P = rep.projector()
    H = np.array([P @ h for h in hs])
    acc = H.T @ H / len(hs)
    return 0.5 * (acc + acc.T)


def glm_population_M(specs, rep: Representation, link: str = "logistic") -> MomentMatrix:
    """Exact ``M = W^T W ((1/k) sum_j h_j h_j^T) W^T W`` for GLM tasks."""
    specs = list(specs)
    if not specs:
        raise EmptyDataset("no task specs given")
    if any(s.kind is not TaskKind.GLM_LOGISTIC for s in specs):
        raise MixedTaskKinds("glm_population_M needs GLM tasks only")
    hs = [glm_population_h(s, rep, link) for s in specs]
    return MomentMatrix(_assemble(hs, rep), len(specs))


def mc_population_M(specs, rep: Representation, mc_samples: int, rng: SeededRng,
                    mean_fn=None, block: int = 100_000) -> MomentMatrix:
    """Monte-Carlo ``M`` for arbitrary task functions (e.g. ReLU networks).

    ``W^T W E[f(W x) x]`` only involves ``z = W x ~ N(0, I_r)``, so the
    projected ``h_j`` is estimated as ``W^T mean(f(z) z)`` with ``z`` drawn
    in R^r; this has exactly the law of projecting a d-dimensional
    sample mean. ``stderr`` is the delta-method standard error of
    ``M`` in Frobenius norm. ``mean_fn(spec, rep, x)`` overrides the
    task's own mean function.
    """
    if mc_samples < 10_000:
        raise ValueError("mc_samples must be >= 1e4")
    specs = list(specs)
    if not specs:
        raise EmptyDataset("no task specs given")
    mean_fn = mean_fn or task_mean
    r = rep.r
    # inputs with W x = z and no orthogonal component; f only sees W x
    lift = rep.W.T
    hs = []
    var_sum = 0.0
    for spec in specs:
        s1 = np.zeros(r)
        s2 = np.zeros((r, r))
        done = 0
        while done < mc_samples:
            m = min(block, mc_samples - done)
            z = rng.normal((m, r))
            g = np.asarray(mean_fn(spec, rep, z @ lift.T), dtype=np.float64)[:, None] * z
            s1 += g.sum(axis=0)
            s2 += g.T @ g
            done += m
        hz = s1 / mc_samples
        cov = (s2 - mc_samples * np.outer(hz, hz)) / (mc_samples - 1)
        var_sum += (2.0 * (hz @ hz) * np.trace(cov) + 2.0 * hz @ cov @ hz) / mc_samples
        hs.append(lift @ hz)
    k = len(specs)
    stderr = math.sqrt(max(var_sum, 0.0)) / k
    return MomentMatrix(_assemble(hs, rep), k, stderr=stderr)
