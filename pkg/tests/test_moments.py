import numpy as np
import pytest

from metarep.errors import EmptyDataset, MixedTaskKinds, OddSampleCount
from metarep.linalg import SeededRng, sym_eig
from metarep.moments import (
    glm_population_h,
    glm_population_M,
    halfsample_means,
    mc_population_M,
    moment_estimator,
    stein_constant,
)
from metarep.subspace import principal_angles
from metarep.tasks import (
    Representation,
    TaskData,
    TaskKind,
    TaskSpec,
    logistic,
    make_meta_dataset,
    make_representation,
    sample_glm_task,
)

import oracles

# E[s'(c g)] for the logistic s, from adaptive quadrature (oracles.logistic_slope_expectation)
STEIN_REFERENCE = {
    0.5: 0.23604442243987966,
    1.0: 0.2066209641419071,
    2.0: 0.15142637740053974,
    4.0: 0.09118469143576502,
    10.0: 0.039259560109364086,
    30.0: 0.013273863811395116,
}


class TestSteinConstant:
    @pytest.mark.parametrize("scale", sorted(STEIN_REFERENCE))
    def test_frozen_quadrature(self, scale):
        assert stein_constant(scale) == pytest.approx(STEIN_REFERENCE[scale], rel=1e-11)

    @pytest.mark.parametrize("scale", [0.3, 3.3, 17.0])
    def test_live_quadrature(self, scale):
        assert stein_constant(scale) == pytest.approx(oracles.logistic_slope_expectation(scale), rel=1e-10)

    def test_limits(self):
        assert stein_constant(0.0) == 0.25
        assert stein_constant(1e-9) == pytest.approx(0.25, abs=1e-12)
        # large scale: E[s'(c g)] -> 1 / (c sqrt(2 pi)) * integral of s' = 1/(c sqrt(2 pi))
        assert stein_constant(1e4) == pytest.approx(1 / (1e4 * np.sqrt(2 * np.pi)), rel=1e-6)
        assert stein_constant(3.0, link="identity") == 1.0
        with pytest.raises(ValueError):
            stein_constant(1.0, link="probit")

    def test_population_h_matches_monte_carlo(self):
        rep = make_representation(SeededRng(0), 2, 5)
        spec = TaskSpec(0, TaskKind.GLM_LOGISTIC, theta=np.array([1.5, -2.0]))
        x = SeededRng(1).normal((400_000, 5))
        g = logistic(x @ rep.W.T @ spec.theta)[:, None] * x
        mc, se = g.mean(axis=0), g.std(axis=0) / np.sqrt(len(g))
        h = glm_population_h(spec, rep)
        assert np.all(np.abs(h - mc) < 5 * se)


def _task(task_id, x, y):
    return TaskData(task_id, np.asarray(x, float), np.asarray(y, float))


class TestMomentEstimator:
    def test_hand_computed(self):
        t0 = _task(0, [[1.0, 0.0], [0.0, 2.0]], [1.0, 1.0])  # u=(1,0), v=(0,2)
        t1 = _task(1, [[1.0, 1.0], [3.0, 0.0], [1.0, 1.0], [0.0, 1.0]], [1.0, 0.0, 0.0, 1.0])
        # t1: u = mean((1,1), (0,0)) = (.5,.5), v = mean((0,0), (0,1)) = (0,.5)
        m = moment_estimator([t1, t0])
        c0 = np.array([[0.0, 1.0], [1.0, 0.0]])  # (u v^T + v u^T)/2 for t0
        c1 = np.array([[0.0, 0.125], [0.125, 0.25]])
        np.testing.assert_allclose(m.M, (c0 + c1) / 2, atol=1e-16)
        assert m.k_used == 2 and m.normalization == "per_task_average"

    def test_halfsample_means(self):
        pair = halfsample_means(_task(3, [[2.0], [4.0], [6.0], [8.0]], [1.0, 0.0, 1.0, 1.0]))
        np.testing.assert_allclose(pair.first, [1.0])
        np.testing.assert_allclose(pair.second, [7.0])

    def test_symmetric_and_order_independent(self):
        ds = make_meta_dataset(0, d=6, r=2, k=7, n=10)
        m = moment_estimator(ds).M
        assert np.array_equal(m, m.T)
        shuffled = [ds.tasks[i][1] for i in (3, 0, 6, 1, 5, 2, 4)]
        assert np.array_equal(moment_estimator(shuffled).M, m)

    def test_errors(self):
        with pytest.raises(OddSampleCount):
            moment_estimator([_task(0, np.ones((3, 2)), [1.0, 0.0, 1.0])])
        with pytest.raises(EmptyDataset):
            moment_estimator([])

    def test_unbiased_small(self):
        # mean of M_hat over datasets with fixed W and tasks approaches M
        base = make_meta_dataset(3, d=4, r=2, k=3, n=8)
        rep, specs = base.representation, base.specs
        oracle = glm_population_M(specs, rep).M
        draws = []
        for s in range(3000):
            rng = SeededRng(100 + s)
            tasks = []
            for spec in specs:
                x = rng.normal((8, 4))
                y = (rng.uniform(8) < logistic(x @ rep.W.T @ spec.theta)).astype(float)
                tasks.append(TaskData(spec.task_id, x, y))
            draws.append(moment_estimator(tasks).M)
        draws = np.array(draws)
        se = draws.std(axis=0, ddof=1) / np.sqrt(len(draws))
        assert np.linalg.norm(draws.mean(axis=0) - oracle) <= 4 * np.linalg.norm(se)


class TestPopulationM:
    def test_rank_and_range(self):
        ds = make_meta_dataset(1, d=6, r=2, k=8, n=2)
        M = glm_population_M(ds.specs, ds.representation)
        eig = sym_eig(M.M)
        assert np.sum(eig.eigenvalues > 1e-10) == 2
        angles = principal_angles(eig.eigenvectors[:, :2], ds.representation.W.T)
        assert np.max(angles) < 1e-8

    def test_single_task_closed_form(self):
        rep = Representation(np.eye(3)[:2])
        theta = np.array([0.0, 2.0])
        M = glm_population_M([TaskSpec(0, TaskKind.GLM_LOGISTIC, theta=theta)], rep).M
        c = stein_constant(2.0)
        expected = np.zeros((3, 3))
        expected[1, 1] = (2 * c) ** 2
        np.testing.assert_allclose(M, expected, atol=1e-15)

    def test_identity_link(self):
        rep = make_representation(SeededRng(2), 2, 4)
        spec = TaskSpec(0, TaskKind.GLM_LOGISTIC, theta=np.array([1.0, 2.0]))
        h = glm_population_h(spec, rep, link="identity")
        np.testing.assert_allclose(h, rep.W.T @ spec.theta)

    def test_errors(self):
        rep = make_representation(SeededRng(0), 2, 4)
        relu = TaskSpec(0, TaskKind.RELU_NET, w1=np.ones((2, 2)), w2=np.ones((2, 2)), w3=np.ones((1, 2)))
        glm = sample_glm_task(SeededRng(1), rep)
        with pytest.raises(MixedTaskKinds):
            glm_population_M([glm, relu], rep)
        with pytest.raises(EmptyDataset):
            glm_population_M([], rep)
        with pytest.raises(ValueError):
            mc_population_M([glm], rep, 100, SeededRng(0))

    def test_monte_carlo_agrees_with_quadrature(self):
        ds = make_meta_dataset(4, d=5, r=2, k=4, n=2)
        exact = glm_population_M(ds.specs, ds.representation)
        mc = mc_population_M(ds.specs, ds.representation, 400_000, SeededRng(9))
        assert mc.stderr > 0
        assert np.linalg.norm(mc.M - exact.M) < 5 * mc.stderr

    def test_relu_monte_carlo_rank(self):
        ds = make_meta_dataset(5, d=6, r=2, k=5, n=2, kind="relu_net", hidden=5)
        mc = mc_population_M(ds.specs, ds.representation, 20_000, SeededRng(1))
        eig = sym_eig(mc.M)
        assert np.sum(np.abs(eig.eigenvalues) > 1e-10 * eig.eigenvalues[0]) <= 2
        assert np.max(principal_angles(eig.eigenvectors[:, :2], ds.representation.W.T)) < 1e-8

    def test_relu_monte_carlo_matches_brute_force(self):
        # projected h estimated from full d-dimensional samples
        ds = make_meta_dataset(6, d=4, r=2, k=2, n=2, kind="relu_net", hidden=3)
        rep = ds.representation
        mc = mc_population_M(ds.specs, rep, 200_000, SeededRng(2))
        from metarep.tasks import relu_mean

        x = SeededRng(3).normal((200_000, 4))
        hs = [rep.projector() @ (relu_mean(s, rep, x)[:, None] * x).mean(axis=0) for s in ds.specs]
        brute = sum(np.outer(h, h) for h in hs) / len(hs)
        assert np.linalg.norm(mc.M - brute) < 8 * mc.stderr
