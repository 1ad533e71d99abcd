import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from dsgda.errors import DegenerateClassBalance, IndexOutOfRange, NoOracle, SingularSystem
from dsgda.problems import (
    AUCProblem,
    MinimaxProblem,
    ProblemConstants,
    QuadraticSaddle,
    auc_best_response,
    quadratic_saddle_solution,
)


def make_auc(K=3, n=12, d=5, seed=0, sparse=False, reg=1e-3):
    rng = np.random.default_rng(seed)
    feats, labs = [], []
    for _ in range(K):
        F = rng.standard_normal((n, d))
        if sparse:
            F[rng.random((n, d)) < 0.5] = 0.0
            F = sp.csr_matrix(F)
        lab = np.where(rng.random(n) < 0.3, 1, -1)
        lab[0], lab[1] = 1, -1
        feats.append(F)
        labs.append(lab)
    p = np.mean(np.concatenate(labs) == 1)
    return AUCProblem(feats, labs, p, reg)


def central_diff(fun, z, h=1e-6):
    g = np.zeros_like(z)
    for j in range(z.size):
        e = np.zeros_like(z)
        e[j] = h
        g[j] = (fun(z + e) - fun(z - e)) / (2 * h)
    return g


def rel_err(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-8)


class TestProblemConstants:
    def test_kappa_and_lphi(self):
        c = ProblemConstants(L=4.0, mu=0.5)
        assert c.kappa == 8.0
        assert c.L_phi == 64.0

    @pytest.mark.parametrize("L,mu", [(1.0, 0.0), (0.5, 1.0), (1.0, -1.0)])
    def test_invalid(self, L, mu):
        with pytest.raises(ValueError):
            ProblemConstants(L, mu)


class TestAUCProblem:
    def test_shapes(self):
        prob = make_auc(K=2, n=7, d=4)
        assert (prob.dim_x, prob.dim_y, prob.n, prob.K) == (6, 1, 7, 2)
        gx, gy = prob.grads(1, [0, 3], np.zeros(6), np.zeros(1))
        assert gx.shape == (2, 6) and gy.shape == (2, 1)

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 10_000), sample=st.integers(0, 11))
    def test_sample_gradient_matches_finite_differences(self, seed, sample):
        prob = make_auc(seed=seed % 7)
        rng = np.random.default_rng(seed)
        x, y = rng.standard_normal(prob.dim_x), rng.standard_normal(prob.dim_y)
        gx = prob.grad_x_sample(1, sample, x, y)
        gy = prob.grad_y_sample(1, sample, x, y)
        fx = central_diff(lambda z: prob.sample_loss(1, sample, z, y), x)
        fy = central_diff(lambda z: prob.sample_loss(1, sample, x, z), y)
        assert rel_err(gx, fx) < 1e-5
        assert rel_err(gy, fy) < 1e-5

    def test_sparse_and_dense_agree(self):
        sparse = make_auc(sparse=True, seed=2)
        dense = AUCProblem([f.toarray() for f in sparse.features], sparse.labels, sparse.p, sparse.reg)
        rng = np.random.default_rng(0)
        x, y = rng.standard_normal(sparse.dim_x), rng.standard_normal(1)
        for a, b in zip(sparse.grads(0, np.arange(12), x, y), dense.grads(0, np.arange(12), x, y)):
            np.testing.assert_allclose(a, b, atol=1e-12)
        np.testing.assert_allclose(sparse.losses(2, [1, 4], x, y), dense.losses(2, [1, 4], x, y), atol=1e-12)
        assert sparse.constants().L == pytest.approx(dense.constants().L, rel=1e-12)

    def test_best_response_zeroes_y_gradient(self):
        prob = make_auc()
        x = np.random.default_rng(1).standard_normal(prob.dim_x)
        y = prob.best_response(x)
        assert abs(prob.global_grad(x, y)[1][0]) < 1e-12
        assert y[0] == pytest.approx(auc_best_response(prob, x))

    def test_strong_concavity_constant(self):
        prob = make_auc()
        assert prob.constants().mu == pytest.approx(2 * prob.p * (1 - prob.p))

    def test_smoothness_bounds_finite_difference_hessian(self):
        # without the penalty the objective is quadratic, so a
        # difference Jacobian of the gradient is exact up to roundoff
        prob = make_auc(reg=0.0)
        m = prob.dim_x + prob.dim_y

        def grad(z):
            return np.concatenate(prob.global_grad(z[: prob.dim_x], z[prob.dim_x :]))

        z0 = np.random.default_rng(3).standard_normal(m)
        H = np.column_stack([central_diff(lambda z: grad(z)[i], z0, h=1e-4) for i in range(m)])
        H = 0.5 * (H + H.T)
        assert prob.constants().L == pytest.approx(np.max(np.abs(np.linalg.eigvalsh(H))), rel=1e-6)

    def test_degenerate_balance(self):
        with pytest.raises(DegenerateClassBalance):
            AUCProblem([np.ones((2, 2))], [np.array([1, 1])], p=1.0)

    def test_index_errors(self):
        prob = make_auc()
        with pytest.raises(IndexOutOfRange):
            prob.grads(0, [12], np.zeros(prob.dim_x), np.zeros(1))
        with pytest.raises(IndexOutOfRange):
            prob.grads(3, [0], np.zeros(prob.dim_x), np.zeros(1))

    def test_from_dataset_uses_global_fraction(self):
        from dsgda.dataio import partition, synthetic_imbalanced

        ds = synthetic_imbalanced(103, 6, 0.2, seed=1)
        prob = AUCProblem.from_dataset(ds, partition(ds, 4, 0))
        assert prob.p == pytest.approx(ds.positive_fraction)
        assert prob.n == 25


class TestQuadraticSaddle:
    @pytest.fixture
    def prob(self):
        return QuadraticSaddle.random(3, 6, 4, 3, mu=0.8, seed=5)

    def test_gradients_match_finite_differences(self, prob):
        rng = np.random.default_rng(0)
        x, y = rng.standard_normal(4), rng.standard_normal(3)
        for i in range(prob.n):
            fx = central_diff(lambda z: prob.sample_loss(2, i, z, y), x)
            fy = central_diff(lambda z: prob.sample_loss(2, i, x, z), y)
            assert rel_err(prob.grad_x_sample(2, i, x, y), fx) < 1e-5
            assert rel_err(prob.grad_y_sample(2, i, x, y), fy) < 1e-5

    def test_solution_is_stationary(self, prob):
        xs, ys = quadratic_saddle_solution(prob)
        gx, gy = prob.global_grad(xs, ys)
        assert np.max(np.abs(gx)) < 1e-12 and np.max(np.abs(gy)) < 1e-12
        np.testing.assert_allclose(prob.best_response(xs), ys, atol=1e-12)
        assert np.linalg.norm(prob.primal_grad(xs)) < 1e-12

    def test_primal_grad_matches_finite_differences(self, prob):
        x = np.random.default_rng(2).standard_normal(4)
        assert rel_err(prob.primal_grad(x), central_diff(prob.primal_value, x)) < 1e-6

    def test_singular_system(self):
        A = np.zeros((1, 1, 2, 2))
        B = np.zeros((1, 1, 2, 1))
        prob = QuadraticSaddle(A, B, np.zeros((1, 1, 2)), np.zeros((1, 1, 1)), mu=1.0)
        with pytest.raises(SingularSystem):
            quadratic_saddle_solution(prob)

    def test_constants_bound_per_sample_hessians(self, prob):
        c = prob.constants()
        assert c.mu == 0.8
        for k in range(prob.K):
            for i in range(prob.n):
                H = np.block([[prob.A[k, i], prob.B[k, i]], [prob.B[k, i].T, -0.8 * np.eye(3)]])
                assert np.linalg.norm(H, 2) <= c.L + 1e-12

    def test_full_grad_is_mean_of_samples(self, prob):
        x, y = np.ones(4), np.ones(3)
        gx, gy = prob.grads(1, np.arange(prob.n), x, y)
        fx, fy = prob.full_grad(1, x, y)
        np.testing.assert_array_equal(fx, gx.mean(0))
        np.testing.assert_array_equal(fy, gy.mean(0))


class TestOracleAbsence:
    def test_no_best_response(self):
        class Bare(MinimaxProblem):
            dim_x = dim_y = n = K = 1

            def _grads(self, k, idx, x, y):
                return np.zeros((idx.size, 1)), np.zeros((idx.size, 1))

            def _losses(self, k, idx, x, y):
                return np.zeros(idx.size)

            def constants(self):
                return ProblemConstants(1.0, 1.0)

        with pytest.raises(NoOracle):
            Bare().primal_value(np.zeros(1))
