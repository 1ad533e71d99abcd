"""Finite-sum minimax objectives.

Every problem is an average over ``K`` workers of an average over ``n``
local samples. The optimizer only ever calls :meth:`MinimaxProblem.grads`,
which returns the per-sample gradient rows for a batch of sample indices;
the scalar helpers (``grad_x_sample`` and friends) are thin views on it.
"""

from __future__ import annotations

import abc
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import DegenerateClassBalance, IndexOutOfRange, NoOracle, SingularSystem

__all__ = [
    "ProblemConstants",
    "MinimaxProblem",
    "AUCProblem",
    "QuadraticSaddle",
    "auc_best_response",
    "quadratic_saddle_solution",
]


@dataclass(frozen=True)
class ProblemConstants:
    """Smoothness ``L`` and strong-concavity modulus ``mu``."""

    L: float
    mu: float

    def __post_init__(self):
        if not (self.L > 0 and self.mu > 0):
            raise ValueError(f"L and mu must be positive, got L={self.L}, mu={self.mu}")
        if self.L < self.mu:
            raise ValueError(f"L={self.L} is smaller than mu={self.mu}")

    @property
    def kappa(self) -> float:
        return self.L / self.mu

    @property
    def L_phi(self) -> float:
        """Smoothness of the primal function max_y F(., y)."""
        return 2.0 * self.kappa * self.L


class MinimaxProblem(abc.ABC):
    """Interface for ``min_x max_y (1/K) sum_k (1/n) sum_i f_i^k(x, y)``."""

    dim_x: int
    dim_y: int
    n: int
    K: int

    @abc.abstractmethod
    def _grads(self, k: int, idx: np.ndarray, x: np.ndarray, y: np.ndarray):
        ...

    @abc.abstractmethod
    def _losses(self, k: int, idx: np.ndarray, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        ...

    @abc.abstractmethod
    def constants(self) -> ProblemConstants:
        ...

    def best_response(self, x: np.ndarray) -> np.ndarray:
        raise NoOracle(f"{type(self).__name__} has no best-response oracle")

    def _check(self, k: int, idx) -> np.ndarray:
        if not 0 <= k < self.K:
            raise IndexOutOfRange(f"worker {k} outside 0..{self.K - 1}")
        idx = np.asarray(idx, dtype=np.intp).reshape(-1)
        if idx.size and (idx.min() < 0 or idx.max() >= self.n):
            raise IndexOutOfRange(f"sample index outside 0..{self.n - 1}")
        return idx

    def grads(self, k: int, idx, x, y) -> tuple[np.ndarray, np.ndarray]:
        """Per-sample gradient rows ``(|idx|, dim_x)`` and ``(|idx|, dim_y)``."""
        idx = self._check(k, idx)
        return self._grads(k, idx, np.asarray(x, float), np.asarray(y, float))

    def losses(self, k: int, idx, x, y) -> np.ndarray:
        idx = self._check(k, idx)
        return self._losses(k, idx, np.asarray(x, float), np.asarray(y, float))

    def grad_x_sample(self, k: int, i: int, x, y) -> np.ndarray:
        return self.grads(k, [i], x, y)[0][0]

    def grad_y_sample(self, k: int, i: int, x, y) -> np.ndarray:
        return self.grads(k, [i], x, y)[1][0]

    def sample_loss(self, k: int, i: int, x, y) -> float:
        return float(self.losses(k, [i], x, y)[0])

    def full_grad(self, k: int, x, y) -> tuple[np.ndarray, np.ndarray]:
        gx, gy = self.grads(k, np.arange(self.n), x, y)
        return gx.mean(axis=0), gy.mean(axis=0)

    def local_value(self, k: int, x, y) -> float:
        return float(self.losses(k, np.arange(self.n), x, y).mean())

    def value(self, x, y) -> float:
        return float(np.mean([self.local_value(k, x, y) for k in range(self.K)]))

    def global_grad(self, x, y) -> tuple[np.ndarray, np.ndarray]:
        parts = [self.full_grad(k, x, y) for k in range(self.K)]
        return (
            np.mean([p[0] for p in parts], axis=0),
            np.mean([p[1] for p in parts], axis=0),
        )

    def primal_value(self, x) -> float:
        return self.value(x, self.best_response(x))

    def primal_grad(self, x) -> np.ndarray:
        """Gradient of max_y F(x, y), taken at the best response."""
        return self.global_grad(x, self.best_response(x))[0]

    def initial_point(self, rng: np.random.Generator, scale: float = 0.01):
        """Seeded Gaussian start shared by all workers."""
        return scale * rng.standard_normal(self.dim_x), scale * rng.standard_normal(self.dim_y)


def _dense_rows(features, idx: np.ndarray) -> np.ndarray:
    rows = features[idx]
    return rows.toarray() if sp.issparse(rows) else rows


def _gram(F) -> np.ndarray:
    G = F.T @ F
    return G.toarray() if sp.issparse(G) else np.asarray(G)


class AUCProblem(MinimaxProblem):
    """Square-loss AUC maximization as a saddle problem.

    ``x = (theta, theta_hat1, theta_hat2)`` and ``y = (theta_tilde,)``.
    The nonconvex penalty ``reg * sum theta_j^2 / (1 + theta_j^2)`` is
    part of every per-sample loss so the finite-sum structure is exact.

    Args:
        features: one ``(n, d)`` array or CSR matrix per worker.
        labels: one length-``n`` array of +1/-1 per worker.
        p: positive-class fraction of the whole training set.
        reg: penalty weight.
    """

    def __init__(self, features, labels, p: float, reg: float = 1e-3):
        if not 0.0 < p < 1.0:
            raise DegenerateClassBalance(f"positive fraction must lie in (0, 1), got {p}")
        if len(features) != len(labels) or not features:
            raise ValueError("need one feature block and one label vector per worker")
        sizes = {f.shape[0] for f in features} | {len(b) for b in labels}
        if len(sizes) != 1:
            raise ValueError(f"all workers must hold the same number of samples, got {sizes}")
        dims = {f.shape[1] for f in features}
        if len(dims) != 1:
            raise ValueError(f"feature dimensions disagree across workers: {dims}")
        self.features = [f.tocsr() if sp.issparse(f) else np.asarray(f, float) for f in features]
        self.labels = [np.asarray(b, dtype=np.int8) for b in labels]
        for b in self.labels:
            if not np.all(np.isin(b, (-1, 1))):
                raise ValueError("labels must be +1/-1")
        self.p = float(p)
        self.reg = float(reg)
        self.d = dims.pop()
        self.n = sizes.pop()
        self.K = len(features)
        self.dim_x = self.d + 2
        self.dim_y = 1
        self._L = None

    @classmethod
    def from_dataset(cls, train, partition, reg: float = 1e-3) -> "AUCProblem":
        """Split ``train`` across workers; ``p`` comes from the whole train set."""
        labels = np.asarray(train.labels)
        p = float(np.mean(labels == 1)) if len(labels) else 0.0
        feats = [train.features[np.asarray(ix)] for ix in partition.indices]
        labs = [labels[np.asarray(ix)] for ix in partition.indices]
        return cls(feats, labs, p, reg)

    def _split(self, x, y):
        d = self.d
        return x[:d], x[d], x[d + 1], y[0]

    def _grads(self, k, idx, x, y):
        theta, t1, t2, tt = self._split(x, y)
        p = self.p
        rows = _dense_rows(self.features[k], idx)
        lab = self.labels[k][idx]
        pos = (lab == 1).astype(float)
        neg = 1.0 - pos
        score = rows @ theta
        r1 = score - t1
        r2 = score - t2
        coef = 2 * (1 - p) * r1 * pos + 2 * p * r2 * neg + 2 * (1 + tt) * (p * neg - (1 - p) * pos)
        gx = np.empty((idx.size, self.dim_x))
        gx[:, : self.d] = coef[:, None] * rows + self.reg * 2 * theta / (1 + theta**2) ** 2
        gx[:, self.d] = -2 * (1 - p) * r1 * pos
        gx[:, self.d + 1] = -2 * p * r2 * neg
        gy = (2 * (p * score * neg - (1 - p) * score * pos) - 2 * p * (1 - p) * tt)[:, None]
        return gx, gy

    def _losses(self, k, idx, x, y):
        theta, t1, t2, tt = self._split(x, y)
        p = self.p
        rows = _dense_rows(self.features[k], idx)
        lab = self.labels[k][idx]
        pos = (lab == 1).astype(float)
        neg = 1.0 - pos
        score = rows @ theta
        return (
            (1 - p) * (score - t1) ** 2 * pos
            + p * (score - t2) ** 2 * neg
            + 2 * (1 + tt) * (p * score * neg - (1 - p) * score * pos)
            - p * (1 - p) * tt**2
            + self.reg * np.sum(theta**2 / (1 + theta**2))
        )

    def best_response(self, x) -> np.ndarray:
        return np.array([auc_best_response(self, x)])

    def scores(self, x, features) -> np.ndarray:
        theta = np.asarray(x)[: self.d]
        return np.asarray(features @ theta).reshape(-1)

    def _quadratic_hessian(self) -> np.ndarray:
        # Hessian of the averaged objective without the penalty; it does not
        # depend on the point.
        p, d = self.p, self.d
        m = self.dim_x + self.dim_y
        H = np.zeros((m, m))
        N = self.K * self.n
        for f, lab in zip(self.features, self.labels):
            pos = lab == 1
            neg = ~pos
            Fp = f[np.flatnonzero(pos)]
            Fn = f[np.flatnonzero(neg)]
            H[:d, :d] += 2 * (1 - p) * _gram(Fp) + 2 * p * _gram(Fn)
            sp_ = np.asarray(Fp.sum(axis=0)).reshape(-1)
            sn_ = np.asarray(Fn.sum(axis=0)).reshape(-1)
            H[:d, d] += -2 * (1 - p) * sp_
            H[:d, d + 1] += -2 * p * sn_
            H[:d, d + 2] += 2 * (p * sn_ - (1 - p) * sp_)
            H[d, d] += 2 * (1 - p) * pos.sum()
            H[d + 1, d + 1] += 2 * p * neg.sum()
        H /= N
        H[d, :d] = H[:d, d]
        H[d + 1, :d] = H[:d, d + 1]
        H[d + 2, :d] = H[:d, d + 2]
        H[d + 2, d + 2] = -2 * p * (1 - p)
        return H

    def constants(self) -> ProblemConstants:
        """``mu = 2p(1-p)``; ``L`` from the averaged Hessian plus the penalty's curvature bound."""
        mu = 2 * self.p * (1 - self.p)
        if self._L is None:
            H = self._quadratic_hessian()
            self._L = float(np.max(np.abs(np.linalg.eigvalsh(H)))) + 2 * self.reg
        return ProblemConstants(max(self._L, mu), mu)


def auc_best_response(problem: AUCProblem, x) -> float:
    """Closed-form maximizer of the averaged AUC objective in ``theta_tilde``."""
    p = problem.p
    if not 0.0 < p < 1.0:
        raise DegenerateClassBalance(f"positive fraction must lie in (0, 1), got {p}")
    theta = np.asarray(x, float)[: problem.d]
    total = 0.0
    for f, lab in zip(problem.features, problem.labels):
        score = np.asarray(f @ theta).reshape(-1)
        total += np.sum(np.where(lab == -1, p * score, -(1 - p) * score))
    return total / (problem.K * problem.n) / (p * (1 - p))


class QuadraticSaddle(MinimaxProblem):
    """``f_i(x, y) = x'A_i x/2 + c_i'x + x'B_i y + d_i'y - mu |y|^2 / 2``.

    Arrays are indexed ``[worker, sample, ...]``.
    """

    def __init__(self, A, B, c, d, mu: float):
        self.A = np.asarray(A, float)
        self.B = np.asarray(B, float)
        self.c = np.asarray(c, float)
        self.d = np.asarray(d, float)
        self.mu = float(mu)
        if self.mu <= 0:
            raise ValueError("mu must be positive")
        self.K, self.n, self.dim_x, _ = self.A.shape
        self.dim_y = self.B.shape[3]
        if not np.allclose(self.A, np.swapaxes(self.A, 2, 3)):
            raise ValueError("A_i must be symmetric")
        expected = {
            "B": (self.K, self.n, self.dim_x, self.dim_y),
            "c": (self.K, self.n, self.dim_x),
            "d": (self.K, self.n, self.dim_y),
        }
        for name, shape in expected.items():
            if getattr(self, name).shape != shape:
                raise ValueError(f"{name} has shape {getattr(self, name).shape}, want {shape}")
        self.A_bar = self.A.mean(axis=(0, 1))
        self.B_bar = self.B.mean(axis=(0, 1))
        self.c_bar = self.c.mean(axis=(0, 1))
        self.d_bar = self.d.mean(axis=(0, 1))

    @classmethod
    def random(
        cls,
        K: int,
        n: int,
        dim_x: int,
        dim_y: int,
        mu: float = 1.0,
        seed: int = 0,
        curvature: tuple[float, float] = (0.5, 1.5),
        coupling: float = 0.3,
        spread: float = 0.2,
    ) -> "QuadraticSaddle":
        """Random convex-concave instance with heterogeneous workers.

        The mean ``A`` has eigenvalues in ``curvature``; individual ``A_i``
        are perturbed by symmetric noise of size ``spread`` and need not
        be positive definite.
        """
        rng = np.random.default_rng(seed)
        Q, _ = np.linalg.qr(rng.standard_normal((dim_x, dim_x)))
        base = Q @ np.diag(np.linspace(*curvature, dim_x)) @ Q.T
        noise = rng.standard_normal((K, n, dim_x, dim_x)) * spread / np.sqrt(dim_x)
        noise = 0.5 * (noise + np.swapaxes(noise, 2, 3))
        noise -= noise.mean(axis=(0, 1))
        A = base + noise
        B = coupling * rng.standard_normal((K, n, dim_x, dim_y)) / np.sqrt(dim_x)
        c = rng.standard_normal((K, n, dim_x))
        d = rng.standard_normal((K, n, dim_y))
        return cls(A, B, c, d, mu)

    def _grads(self, k, idx, x, y):
        A, B = self.A[k, idx], self.B[k, idx]
        gx = A @ x + self.c[k, idx] + B @ y
        gy = x @ B + self.d[k, idx] - self.mu * y
        return gx, gy

    def _losses(self, k, idx, x, y):
        A, B = self.A[k, idx], self.B[k, idx]
        return (
            0.5 * np.einsum("i,sij,j->s", x, A, x)
            + self.c[k, idx] @ x
            + np.einsum("i,sij,j->s", x, B, y)
            + self.d[k, idx] @ y
            - 0.5 * self.mu * (y @ y)
        )

    def best_response(self, x) -> np.ndarray:
        return (self.B_bar.T @ np.asarray(x, float) + self.d_bar) / self.mu

    def constants(self) -> ProblemConstants:
        """``L`` is the largest operator norm of a per-sample Hessian."""
        eye = self.mu * np.eye(self.dim_y)
        top = np.concatenate([self.A, self.B], axis=3)
        bottom = np.concatenate(
            [np.swapaxes(self.B, 2, 3), np.broadcast_to(-eye, (self.K, self.n) + eye.shape)], axis=3
        )
        H = np.concatenate([top, bottom], axis=2)
        L = float(np.max(np.abs(np.linalg.eigvalsh(H))))
        return ProblemConstants(max(L, self.mu), self.mu)


def quadratic_saddle_solution(problem: QuadraticSaddle) -> tuple[np.ndarray, np.ndarray]:
    """Solve the stationarity system of the averaged quadratic saddle."""
    dx, dy = problem.dim_x, problem.dim_y
    kkt = np.block([[problem.A_bar, problem.B_bar], [problem.B_bar.T, -problem.mu * np.eye(dy)]])
    rhs = -np.concatenate([problem.c_bar, problem.d_bar])
    if np.linalg.cond(kkt) > 1e14:
        raise SingularSystem("saddle system is numerically singular")
    try:
        sol = np.linalg.solve(kkt, rhs)
    except np.linalg.LinAlgError as exc:
        raise SingularSystem(str(exc)) from exc
    return sol[:dx], sol[dx:]
