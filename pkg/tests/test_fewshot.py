import math

import numpy as np
import pytest

from metarep.errors import NonFiniteLoss
from metarep.fewshot import (
    FewShotProblem,
    classification_accuracy,
    cross_entropy_empirical,
    cross_entropy_gradient,
    excess_risk,
    population_risk,
    project_ball,
    softplus,
    solve_erm,
)
from metarep.linalg import SeededRng
from metarep.tasks import Representation, logistic, make_representation

import oracles


def random_problem(seed, n=20, d=4, r=2, a=math.inf):
    rng = SeededRng(seed)
    P = np.linalg.qr(rng.normal((d, r)))[0].T
    X = rng.normal((n, d))
    theta = rng.normal(r)
    y = (rng.uniform(n) < logistic(X @ P.T @ theta)).astype(float)
    return FewShotProblem(P, X, y, a)


def central_difference(f, x, h=1e-6):
    g = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g


class TestLoss:
    def test_softplus_stable(self):
        assert softplus(1000.0) == 1000.0
        assert softplus(-1000.0) == 0.0
        assert softplus(0.0) == pytest.approx(math.log(2))

    def test_value_at_zero(self):
        prob = random_problem(0)
        assert cross_entropy_empirical(np.zeros(2), prob) == pytest.approx(math.log(2))

    def test_matches_naive_formula(self):
        prob = random_problem(1)
        theta = np.array([0.3, -0.8])
        p = logistic(prob.Z @ theta)
        naive = -np.mean(prob.y * np.log(p) + (1 - prob.y) * np.log(1 - p))
        assert cross_entropy_empirical(theta, prob) == pytest.approx(naive, rel=1e-13)

    def test_extreme_margins_are_finite(self):
        prob = FewShotProblem(np.eye(1), [[1.0], [-1.0]], [1.0, 1.0])
        assert math.isfinite(cross_entropy_empirical(np.array([1e4]), prob))

    def test_gradient_finite_differences(self):
        worst = 0.0
        for s in range(50):
            prob = random_problem(100 + s, n=15, d=5, r=3)
            theta = SeededRng(500 + s).normal(3)
            g = cross_entropy_gradient(theta, prob)
            fd = central_difference(lambda t: cross_entropy_empirical(t, prob), theta)
            worst = max(worst, np.linalg.norm(g - fd) / max(np.linalg.norm(g), 1e-12))
        assert worst <= 1e-5

    def test_problem_validation(self):
        with pytest.raises(ValueError):
            FewShotProblem(np.eye(2), np.ones((3, 3)), [0, 1, 0])
        with pytest.raises(ValueError):
            FewShotProblem(np.eye(2), np.ones((3, 2)), [0, 1])
        with pytest.raises(ValueError):
            FewShotProblem(np.eye(2), np.ones((2, 2)), [0, 2])
        with pytest.raises(ValueError):
            FewShotProblem(np.eye(2), np.ones((2, 2)), [0, 1], a=-1.0)

    def test_project_ball(self):
        np.testing.assert_allclose(project_ball(np.array([3.0, 4.0]), 1.0), [0.6, 0.8])
        np.testing.assert_array_equal(project_ball(np.array([0.1, 0.0]), 1.0), [0.1, 0.0])


class TestSolver:
    @pytest.mark.parametrize("seed", range(6))
    @pytest.mark.parametrize("a", [0.5, 2.0])
    def test_matches_constrained_oracle(self, seed, a):
        r = 1 + seed % 2
        prob = random_problem(seed, n=12, d=5, r=r, a=a)
        model = solve_erm(prob)
        ref_loss, _ = oracles.constrained_min_grid(prob.Z, prob.y, a)
        assert model.converged
        assert np.linalg.norm(model.theta) <= a * (1 + 1e-12)
        assert model.loss <= ref_loss + 1e-6
        assert model.loss == pytest.approx(ref_loss, abs=1e-6)

    def test_one_dimensional_grid(self):
        prob = random_problem(7, n=30, d=3, r=1, a=1.0)
        grid = np.linspace(-1, 1, 200_001)
        t = prob.Z[:, :1] * grid[None, :]
        y = prob.y[:, None]
        losses = np.mean(y * np.logaddexp(0, -t) + (1 - y) * np.logaddexp(0, t), axis=0)
        model = solve_erm(prob)
        assert model.theta[0] == pytest.approx(grid[int(np.argmin(losses))], abs=2e-5)

    def test_unconstrained_stationary(self):
        prob = random_problem(3, n=60, d=4, r=2)
        model = solve_erm(prob, tol=1e-12)
        # loss differences below rounding stop the line search near |grad| ~ 1e-8
        assert np.linalg.norm(cross_entropy_gradient(model.theta, prob)) < 1e-6

    def test_loss_trace_monotone(self):
        model = solve_erm(random_problem(4, n=40))
        assert np.all(np.diff(model.loss_trace) <= 0)
        assert model.loss_trace[0] == pytest.approx(math.log(2))

    def test_zero_budget(self):
        model = solve_erm(random_problem(5, a=0.0))
        np.testing.assert_array_equal(model.theta, 0.0)
        assert model.converged

    def test_separable_data_hits_iteration_cap(self):
        prob = FewShotProblem(np.eye(1), [[1.0], [-1.0]], [1.0, 0.0])
        model = solve_erm(prob, max_iter=50)
        assert not model.converged and model.iterations == 50
        assert model.theta[0] > 0

    def test_rotation_invariance(self):
        prob = random_problem(6, n=25, d=4, r=2, a=1.5)
        Q = np.array([[0.0, -1.0], [1.0, 0.0]])
        rotated = FewShotProblem(Q @ prob.P, prob.X, prob.y, prob.a)
        m1, m2 = solve_erm(prob, tol=1e-12), solve_erm(rotated, tol=1e-12)
        np.testing.assert_allclose(Q @ m1.theta, m2.theta, atol=1e-7)

    def test_convexity_along_segment(self):
        prob = random_problem(8)
        a, b = SeededRng(1).normal(2), SeededRng(2).normal(2)
        la, lb = cross_entropy_empirical(a, prob), cross_entropy_empirical(b, prob)
        for t in np.linspace(0, 1, 11):
            assert cross_entropy_empirical(t * a + (1 - t) * b, prob) <= t * la + (1 - t) * lb + 1e-12

    def test_to_dict(self):
        d = solve_erm(random_problem(9)).to_dict()
        assert set(d) == {"theta", "converged", "iterations", "loss_initial", "loss_final", "trace_length"}

    def test_bad_step(self):
        with pytest.raises(ValueError):
            solve_erm(random_problem(0), step=0.0)

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_non_finite_loss(self):
        prob = random_problem(0)
        prob.Z[0, 0] = np.nan
        with pytest.raises(NonFiniteLoss):
            solve_erm(prob)


class TestEvaluation:
    def test_accuracy(self):
        X = np.array([[1.0], [-1.0], [2.0], [0.0]])
        assert classification_accuracy(np.array([1.0]), np.eye(1), X, [1, 0, 0, 1]) == 0.75
        with pytest.raises(ValueError):
            classification_accuracy(np.array([1.0]), np.eye(1), X, [1, 0, 0, 3])

    def test_bayes_accuracy(self):
        # accuracy of theta_star itself tends to E[max(p, 1-p)]
        rep = make_representation(SeededRng(0), 2, 5)
        theta = np.array([2.0, 0.0])
        rng = SeededRng(1)
        X = rng.normal((200_000, 5))
        p = logistic(X @ rep.W.T @ theta)
        y = (rng.uniform(len(p)) < p).astype(float)
        bayes = np.mean(np.maximum(p, 1 - p))
        assert classification_accuracy(theta, rep.W, X, y) == pytest.approx(bayes, abs=0.005)

    def test_population_risk_brute_force(self):
        rep = make_representation(SeededRng(0), 2, 5)
        theta_star = np.array([1.0, -0.5])
        theta = np.array([0.5, 0.5, 0.2])
        P = np.linalg.qr(SeededRng(2).normal((5, 3)))[0].T
        val, se = population_risk(theta, P, rep, theta_star, 200_000, SeededRng(3))
        X = SeededRng(4).normal((200_000, 5))
        p = logistic(X @ rep.W.T @ theta_star)
        s = X @ P.T @ theta
        brute = np.mean(p * np.logaddexp(0, -s) + (1 - p) * np.logaddexp(0, s))
        assert val == pytest.approx(brute, abs=5 * se + 0.005)

    def test_excess_risk_zero_at_truth(self):
        rep = make_representation(SeededRng(0), 2, 5)
        theta_star = np.array([1.0, 2.0])
        gap, se = excess_risk(theta_star, rep.W, rep, theta_star, 10_000, SeededRng(1))
        assert gap == 0.0 and se == 0.0

    def test_excess_risk_positive(self):
        rep = Representation(np.eye(3)[:2])
        theta_star = np.array([1.0, 0.0])
        gap, se = excess_risk(np.array([0.0, 1.0]), rep.W, rep, theta_star, 100_000, SeededRng(2))
        assert gap > 10 * se > 0

    def test_mc_floor(self):
        rep = Representation(np.eye(2))
        with pytest.raises(ValueError):
            population_risk(np.zeros(2), np.eye(2), rep, np.zeros(2), 100, SeededRng(0))
        with pytest.raises(ValueError):
            excess_risk(np.zeros(2), np.eye(2), rep, np.zeros(2), 100, SeededRng(0))
