"""Few-shot logistic regression inside a given representation.

The new task is fit as ``P(y=1|x) = sigmoid(theta . P x)`` with ``P`` the
recovered ``U_r^T`` (or ``W`` itself, or ``I_d`` for the no-representation
baseline) under the constraint ``||theta||_2 <= a``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from metarep.errors import NonFiniteLoss
from metarep.linalg import SeededRng
from metarep.tasks import Representation, logistic


def softplus(t):
    """``log(1 + exp(t))`` without overflow."""
    return np.logaddexp(0.0, t)


@dataclass
class FewShotProblem:
    P: np.ndarray
    X: np.ndarray
    y: np.ndarray
    a: float = math.inf

    def __post_init__(self):
        self.P = np.atleast_2d(np.asarray(self.P, dtype=np.float64))
        self.X = np.atleast_2d(np.asarray(self.X, dtype=np.float64))
        self.y = np.asarray(self.y, dtype=np.float64).ravel()
        if self.X.shape[1] != self.P.shape[1]:
            raise ValueError(f"inputs have dimension {self.X.shape[1]}, P expects {self.P.shape[1]}")
        if self.X.shape[0] != self.y.shape[0]:
            raise ValueError("inputs and labels differ in length")
        if not np.all((self.y == 0) | (self.y == 1)):
            raise ValueError("labels must be 0 or 1")
        if not self.a >= 0:
            raise ValueError("norm budget a must be >= 0")
        self.a = float(self.a)
        self.Z = self.X @ self.P.T

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def dim(self) -> int:
        return self.P.shape[0]


@dataclass
class FewShotModel:
    theta: np.ndarray
    loss_trace: list = field(default_factory=list)
    converged: bool = False
    iterations: int = 0

    @property
    def loss(self) -> float:
        return self.loss_trace[-1]

    def to_dict(self) -> dict:
        trace = self.loss_trace
        return {
            "theta": [float(v) for v in self.theta],
            "converged": bool(self.converged),
            "iterations": int(self.iterations),
            "loss_initial": float(trace[0]) if trace else None,
            "loss_final": float(trace[-1]) if trace else None,
            "trace_length": len(trace),
        }


def _ce(t, y):
    # y*softplus(-t) + (1-y)*softplus(t): exact in both saturated tails
    return y * softplus(-t) + (1.0 - y) * softplus(t)


def cross_entropy_empirical(theta, problem: FewShotProblem) -> float:
    t = problem.Z @ np.asarray(theta, dtype=np.float64)
    return float(np.mean(_ce(t, problem.y)))


def cross_entropy_gradient(theta, problem: FewShotProblem) -> np.ndarray:
    t = problem.Z @ np.asarray(theta, dtype=np.float64)
    return problem.Z.T @ (logistic(t) - problem.y) / problem.n


def project_ball(theta, a: float) -> np.ndarray:
    nrm = np.linalg.norm(theta)
    if nrm > a:
        return theta * (a / nrm)
    return theta


def solve_erm(problem: FewShotProblem, step: float = 1.0, max_iter: int = 10_000,
              tol: float = 1e-9) -> FewShotModel:
    """Projected gradient descent from ``theta = 0`` with backtracking.

    Each trial step is halved until the sufficient-decrease condition
    ``L(new) <= L(old) - |new - old|^2 / (2 step)`` holds, so the loss
    trace never increases. The step size carries over between
    iterations. Stops once ``|theta_{t+1} - theta_t| <= tol``.
    """
    if not step > 0:
        raise ValueError("step must be positive")
    theta = np.zeros(problem.dim)
    loss = cross_entropy_empirical(theta, problem)
    model = FewShotModel(theta, [loss])
    if problem.a == 0.0:
        model.converged = True
        return model

    eta = float(step)
    for it in range(1, max_iter + 1):
        grad = cross_entropy_gradient(theta, problem)
        for _ in range(80):
            cand = project_ball(theta - eta * grad, problem.a)
            delta = cand - theta
            new_loss = cross_entropy_empirical(cand, problem)
            if not math.isfinite(new_loss):
                raise NonFiniteLoss(f"loss became {new_loss} at iteration {it}")
            if new_loss <= loss - (delta @ delta) / (2.0 * eta):
                break
            eta *= 0.5
        else:
            # no step passes the test at any scale: stationary to rounding
            model.converged = True
            model.iterations = it
            return model
        if new_loss > loss:
            # rounding-level ties only; keep the trace monotone
            new_loss = loss
        theta = cand
        loss = new_loss
        model.loss_trace.append(loss)
        model.theta = theta
        model.iterations = it
        if math.sqrt(delta @ delta) <= tol:
            model.converged = True
            break
    return model


# -- evaluation ------------------------------------------------------------

def _score_pair_cov(theta, P, rep: Representation, theta_star):
    """Covariance of ``(theta . P x, theta_star . W x)`` for ``x ~ N(0, I)``."""
    a = P.T @ np.asarray(theta, dtype=np.float64)
    b = rep.W.T @ np.asarray(theta_star, dtype=np.float64)
    return np.array([[a @ a, a @ b], [a @ b, b @ b]])


def _draw_scores(cov, mc_samples, rng):
    # both scores are linear in x ~ N(0, I_d), hence exactly bivariate normal
    vals, vecs = np.linalg.eigh(cov)
    root = vecs * np.sqrt(np.clip(vals, 0.0, None))
    g = rng.normal((mc_samples, 2))
    st = g @ root.T
    return st[:, 0], st[:, 1]


def _mean_and_stderr(values):
    m = float(np.mean(values))
    if values.size < 2:
        return m, 0.0
    return m, float(np.std(values, ddof=1) / math.sqrt(values.size))


def population_risk(theta, P, rep: Representation, theta_star, mc_samples: int,
                    rng: SeededRng) -> tuple[float, float]:
    """Monte-Carlo population cross-entropy of ``theta`` under ``P``.

    The true task is ``P(y=1|x) = sigmoid(theta_star . W x)``. Labels are
    integrated out analytically, leaving ``softplus(s) - sigmoid(t) s`` with
    ``s = theta . P x`` and ``t = theta_star . W x``. Returns
    ``(estimate, stderr)``.
    """
    if mc_samples < 10_000:
        raise ValueError("mc_samples must be >= 1e4")
    P = np.atleast_2d(np.asarray(P, dtype=np.float64))
    s, t = _draw_scores(_score_pair_cov(theta, P, rep, theta_star), mc_samples, rng)
    return _mean_and_stderr(softplus(s) - logistic(t) * s)


def excess_risk(theta, P, rep: Representation, theta_star, mc_samples: int,
                rng: SeededRng) -> tuple[float, float]:
    """``L(theta; P) - L(theta_star; W)`` estimated on shared draws.

    Common random numbers make the stderr of the gap far smaller than
    that of either risk on its own.
    """
    if mc_samples < 10_000:
        raise ValueError("mc_samples must be >= 1e4")
    P = np.atleast_2d(np.asarray(P, dtype=np.float64))
    s, t = _draw_scores(_score_pair_cov(theta, P, rep, theta_star), mc_samples, rng)
    p = logistic(t)
    gap = (softplus(s) - p * s) - (softplus(t) - p * t)
    return _mean_and_stderr(gap)


def classification_accuracy(theta, P, X, y) -> float:
    """Fraction of samples with ``(sigmoid(theta . P x) >= 0.5) == y``."""
    P = np.atleast_2d(np.asarray(P, dtype=np.float64))
    scores = np.asarray(X, dtype=np.float64) @ P.T @ np.asarray(theta, dtype=np.float64)
    pred = (scores >= 0.0).astype(np.float64)
    y = np.asarray(y, dtype=np.float64)
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("labels must be 0 or 1")
    return float(np.mean(pred == y))
