"""Decentralized stochastic gradient descent ascent with gradient tracking.

Every worker keeps its own iterates ``x, y``, a local estimator producing
``v, u``, and tracking vectors ``a, b`` whose network average always equals
the network average of ``v, u``. One round is::

    sample batch -> estimate v_t, u_t -> track a_t, b_t -> mix and step

All worker quantities are stored stacked, one row per worker.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import DimensionMismatch, NonFiniteIterate
from .estimators import EstimatorState, Schedule
from .metrics import IterationRecord, MetricRecorder, consensus_error
from .problems import MinimaxProblem
from .topology import MixingMatrix

__all__ = [
    "HyperParams",
    "PotentialWeights",
    "WorkerStates",
    "Snapshot",
    "RunResult",
    "theorem_defaults",
    "track",
    "mix_and_step",
    "run",
    "stationarity",
    "potential",
]


@dataclass(frozen=True)
class HyperParams:
    gamma1: float
    gamma2: float
    eta: float
    schedule: Schedule
    T: int

    def __post_init__(self):
        for name in ("gamma1", "gamma2"):
            val = getattr(self, name)
            if not (math.isfinite(val) and val > 0):
                raise ValueError(f"{name} must be finite and positive, got {val}")
        if not (math.isfinite(self.eta) and 0 < self.eta <= 1):
            raise ValueError(f"eta must lie in (0, 1], got {self.eta}")
        if self.T < 1:
            raise ValueError(f"T must be >= 1, got {self.T}")


def theorem_defaults(n: int, L: float, mu: float, lam: float, T: int = 1000, strict: bool = False) -> HyperParams:
    """Default schedule and step sizes for DSGDA.

    The default drops the condition number from the step sizes:
    ``gamma1 = gamma2 = (1 - lam)^2`` and ``eta = 0.9``. With ``strict``
    the step sizes satisfy the worst-case step-size conditions of the
    convergence analysis instead, which are far more conservative.
    """
    if n < 1 or L <= 0 or mu <= 0:
        raise ValueError("n, L and mu must be positive")
    if not 0 <= lam < 1:
        raise ValueError(f"lam must lie in [0, 1), got {lam}")
    schedule = Schedule.theorem(n)
    if not strict:
        gamma = (1 - lam) ** 2
        return HyperParams(gamma, gamma, 0.9, schedule, T)
    kappa = L / mu
    gap2 = (1 - lam) ** 2
    gamma2 = min(gap2 / (760 * L), 1 / (624 * kappa * L), 1 / (6 * L))
    gamma1 = min(gap2 / (760 * kappa * L), 1 / (150 * kappa * L), gamma2 / (15 * kappa**2))
    L_phi = 2 * kappa * L
    eta = 0.9 * min(1.0, 1 / (2 * gamma1 * L_phi))
    return HyperParams(gamma1, gamma2, eta, schedule, T)


@dataclass(frozen=True)
class PotentialWeights:
    """Weights of the nine-term Lyapunov function."""

    C0: float
    C1: float
    C2: float
    C3: float
    C4: float
    C5: float
    C6: float
    C7: float
    C8: float

    @classmethod
    def from_params(cls, gamma1, gamma2, eta, rho1, s1, n, L, mu, lam) -> "PotentialWeights":
        kappa = L / mu
        g = 1 - lam**2
        return cls(
            C0=6 * gamma1 * L**2 / (gamma2 * mu),
            C1=3 * gamma1 * eta / rho1,
            C2=51 * eta * gamma1 * L**2 / (rho1 * mu**2),
            C3=14 * n * rho1 * gamma1 * eta / s1**2,
            C4=226 * n * rho1 * eta * gamma1 * L**2 / (s1**2 * mu**2),
            C5=22568 * gamma1 * kappa**2 * L**2 / g,
            C6=22568 * gamma1 * kappa**2 * L**2 / g,
            C7=g * gamma1 * eta / (6 * rho1),
            C8=g * eta * gamma1 * L**2 / (6 * rho1 * mu**2),
        )

    @classmethod
    def for_run(cls, problem: MinimaxProblem, mixing: MixingMatrix, hyper: HyperParams) -> "PotentialWeights":
        c = problem.constants()
        s = hyper.schedule
        return cls.from_params(hyper.gamma1, hyper.gamma2, hyper.eta, s.rho1, s.s1, problem.n, c.L, c.mu, mixing.lam)


@dataclass
class WorkerStates:
    """Stacked per-worker state; row ``k`` belongs to worker ``k``."""

    X: np.ndarray
    Y: np.ndarray
    A: np.ndarray
    B: np.ndarray
    V: np.ndarray
    U: np.ndarray
    estimators: list = field(default_factory=list)

    @classmethod
    def replicated(cls, K: int, x0, y0) -> "WorkerStates":
        x0 = np.asarray(x0, float)
        y0 = np.asarray(y0, float)
        return cls(
            X=np.tile(x0, (K, 1)),
            Y=np.tile(y0, (K, 1)),
            A=np.zeros((K, x0.size)),
            B=np.zeros((K, y0.size)),
            V=np.zeros((K, x0.size)),
            U=np.zeros((K, y0.size)),
            estimators=[None] * K,
        )

    @property
    def K(self) -> int:
        return self.X.shape[0]

    @property
    def x_bar(self) -> np.ndarray:
        return self.X.mean(axis=0)

    @property
    def y_bar(self) -> np.ndarray:
        return self.Y.mean(axis=0)


def _readonly(arr: np.ndarray) -> np.ndarray:
    view = arr.view()
    view.flags.writeable = False
    return view


@dataclass(frozen=True)
class Snapshot:
    """Read-only view of all workers at round ``t``.

    Taken after tracking and before mixing, so ``X`` holds ``x_t`` and
    ``V``/``A`` hold the estimates built at ``x_t``. Arrays are views and
    are only guaranteed stable for the duration of the hook call.
    """

    t: int
    X: np.ndarray
    Y: np.ndarray
    A: np.ndarray
    B: np.ndarray
    V: np.ndarray
    U: np.ndarray
    estimators: tuple
    grad_evals: int
    comm_rounds: int

    @classmethod
    def of(cls, t: int, states: WorkerStates, comm_rounds: int) -> "Snapshot":
        return cls(
            t,
            *(_readonly(getattr(states, f)) for f in ("X", "Y", "A", "B", "V", "U")),
            estimators=tuple(states.estimators),
            grad_evals=max(e.grad_evals for e in states.estimators),
            comm_rounds=comm_rounds,
        )

    @property
    def x_bar(self) -> np.ndarray:
        return self.X.mean(axis=0)

    @property
    def y_bar(self) -> np.ndarray:
        return self.Y.mean(axis=0)


def track(states: WorkerStates, W: MixingMatrix | np.ndarray, new_v: np.ndarray, new_u: np.ndarray) -> None:
    """Gradient tracking: ``a_t = W a_{t-1} + v_t - v_{t-1}`` (same for ``b``/``u``)."""
    Wm = W.weights if isinstance(W, MixingMatrix) else np.asarray(W, float)
    new_v = np.asarray(new_v, float)
    new_u = np.asarray(new_u, float)
    if Wm.shape != (states.K, states.K) or new_v.shape != states.V.shape or new_u.shape != states.U.shape:
        raise DimensionMismatch(
            f"W {Wm.shape}, v {new_v.shape} vs {states.V.shape}, u {new_u.shape} vs {states.U.shape}"
        )
    states.A = Wm @ states.A + (new_v - states.V)
    states.B = Wm @ states.B + (new_u - states.U)
    states.V = new_v
    states.U = new_u


def mix_and_step(
    states: WorkerStates,
    W: MixingMatrix | np.ndarray,
    gamma1: float,
    gamma2: float,
    eta: float,
    round_index: int = -1,
) -> None:
    """Gossip the iterates, descend in ``x`` along ``a``, ascend in ``y`` along ``b``."""
    Wm = W.weights if isinstance(W, MixingMatrix) else np.asarray(W, float)
    with np.errstate(over="ignore", invalid="ignore"):
        x_half = Wm @ states.X - gamma1 * states.A
        y_half = Wm @ states.Y + gamma2 * states.B
        X = states.X + eta * (x_half - states.X)
        Y = states.Y + eta * (y_half - states.Y)
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(Y))):
        raise NonFiniteIterate(round_index)
    states.X = X
    states.Y = Y


def stationarity(problem: MinimaxProblem, states, L: float) -> float:
    """``|grad Phi(x_bar)|^2 + L^2 |y_bar - y*(x_bar)|^2``."""
    x_bar = states.X.mean(axis=0)
    y_bar = states.Y.mean(axis=0)
    y_star = problem.best_response(x_bar)
    g_phi = problem.global_grad(x_bar, y_star)[0]
    return float(g_phi @ g_phi + L**2 * np.sum((y_bar - y_star) ** 2))


def potential(problem: MinimaxProblem, states, weights: PotentialWeights) -> float:
    """Nine-term Lyapunov value at the current round.

    Table-error terms are skipped for estimators without memory tables.
    """
    c = weights
    x_bar = states.X.mean(axis=0)
    y_bar = states.Y.mean(axis=0)
    y_star = problem.best_response(x_bar)
    total = problem.primal_value(x_bar) + c.C0 * np.sum((y_bar - y_star) ** 2)

    K = states.X.shape[0]
    est_x = est_y = tab_x = tab_y = 0.0
    all_idx = np.arange(problem.n)
    for k in range(K):
        gx, gy = problem.grads(k, all_idx, states.X[k], states.Y[k])
        fx, fy = gx.mean(axis=0), gy.mean(axis=0)
        est_x += np.sum((fx - states.V[k]) ** 2)
        est_y += np.sum((fy - states.U[k]) ** 2)
        tables = states.estimators[k].tables if states.estimators else None
        if tables is not None:
            tab_x += np.sum((gx - tables.g) ** 2) / problem.n
            tab_y += np.sum((gy - tables.h) ** 2) / problem.n
    total += (c.C1 * est_x + c.C2 * est_y + c.C3 * tab_x + c.C4 * tab_y) / K
    total += c.C5 * consensus_error(states.X) + c.C6 * consensus_error(states.Y)
    total += c.C7 * consensus_error(states.A) + c.C8 * consensus_error(states.B)
    return float(total)


@dataclass
class RunResult:
    records: list[IterationRecord]
    states: WorkerStates
    comm_rounds: int

    @property
    def grad_evals(self) -> list[int]:
        """Per-worker cumulative gradient evaluations."""
        return [e.grad_evals for e in self.states.estimators]


Hook = Callable[[Snapshot], None]


def run(
    problem: MinimaxProblem,
    mixing: MixingMatrix,
    hyper: HyperParams,
    estimator,
    seed: int = 0,
    hooks: Sequence[Hook] = (),
    *,
    test_set=None,
    track_stationarity: bool = False,
    track_potential: bool = False,
    log_every: int = 1,
    x0=None,
    y0=None,
) -> RunResult:
    """Run ``hyper.T`` synchronous rounds over all workers.

    ``estimator`` is a driver from :func:`dsgda.estimators.make_estimator`.
    Randomness comes from one seed sequence: the first child draws the
    shared start point, the rest give each worker its own batch stream.
    ``test_set`` is a Dataset scored with the averaged model (AUC problems).
    """
    K = mixing.K
    if problem.K != K:
        raise DimensionMismatch(f"problem has {problem.K} workers, mixing matrix has {K}")
    children = np.random.SeedSequence(seed).spawn(K + 1)
    init_rng = np.random.default_rng(children[0])
    worker_rngs = [np.random.default_rng(c) for c in children[1:]]
    if x0 is None or y0 is None:
        gx0, gy0 = problem.initial_point(init_rng)
        x0 = gx0 if x0 is None else x0
        y0 = gy0 if y0 is None else y0
    states = WorkerStates.replicated(K, x0, y0)

    L = problem.constants().L if track_stationarity else None
    weights = PotentialWeights.for_run(problem, mixing, hyper) if track_potential else None
    recorder = MetricRecorder(
        problem=problem,
        test_set=test_set,
        stationarity=(lambda s: stationarity(problem, s, L)) if track_stationarity else None,
        potential=(lambda s: potential(problem, s, weights)) if track_potential else None,
        log_every=log_every,
        last_round=hyper.T - 1,
    )

    comm_rounds = 0
    for t in range(hyper.T):
        new_v = np.empty_like(states.V)
        new_u = np.empty_like(states.U)
        for k in range(K):
            if t == 0:
                states.estimators[k] = estimator.init(problem, k, states.X[k], states.Y[k], worker_rngs[k])
                est: EstimatorState = states.estimators[k]
                new_v[k], new_u[k] = est.v, est.u
            else:
                new_v[k], new_u[k] = estimator.step(
                    states.estimators[k], problem, k, states.X[k], states.Y[k], worker_rngs[k], t
                )
        track(states, mixing, new_v, new_u)
        comm_rounds += 1
        snap = Snapshot.of(t, states, comm_rounds)
        recorder(snap)
        for hook in hooks:
            hook(snap)
        mix_and_step(states, mixing, hyper.gamma1, hyper.gamma2, hyper.eta, round_index=t)

    return RunResult(recorder.records, states, comm_rounds)
