"""Local gradient estimators.

``zerosarah_*`` is the memory-table estimator used by DSGDA: a SARAH
difference term plus a rho-weighted correction from a per-sample table of
the last gradient seen for each sample, so no full pass is ever needed.
``storm_update`` and ``spider_update`` back the DM-HSGD and GT-SRVR
baselines.

Cost accounting: one unit is one ``(grad_x f_i, grad_y f_i)`` pair at one
point. An incremental step with batch ``s`` costs ``2s`` (current and
previous iterate); a full pass costs ``n``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import BatchTooLarge, IndexOutOfRange, ScheduleMismatch
from .problems import MinimaxProblem

__all__ = [
    "Schedule",
    "MemoryTables",
    "EstimatorState",
    "sample_batch",
    "table_refresh",
    "zerosarah_init",
    "zerosarah_update",
    "minibatch_init",
    "storm_update",
    "spider_init",
    "spider_update",
    "ZeroSarahEstimator",
    "StormEstimator",
    "SpiderEstimator",
    "make_estimator",
    "ESTIMATOR_KINDS",
]

ESTIMATOR_KINDS = ("dsgda", "storm", "spider")


@dataclass(frozen=True)
class Schedule:
    """Batch sizes and table-correction weights; ``rho0`` is always 1."""

    s0: int
    s1: int
    rho1: float
    rho0: float = 1.0

    def __post_init__(self):
        if self.s0 < 1 or self.s1 < 1:
            raise ValueError(f"batch sizes must be positive, got s0={self.s0}, s1={self.s1}")
        for name in ("rho0", "rho1"):
            val = getattr(self, name)
            if not 0.0 <= val <= 1.0:
                raise ScheduleMismatch(f"{name}={val} outside [0, 1]")

    @classmethod
    def theorem(cls, n: int) -> "Schedule":
        """``s0 = s1 = ceil(sqrt(n))`` and ``rho1 = s1 / (2n)``."""
        s = math.ceil(math.sqrt(n))
        return cls(s0=s, s1=s, rho1=s / (2 * n))

    def rho(self, t: int) -> float:
        return self.rho0 if t == 0 else self.rho1

    def batch_size(self, t: int) -> int:
        return self.s0 if t == 0 else self.s1


class MemoryTables:
    """Per-sample gradient memory ``g`` (n x dim_x), ``h`` (n x dim_y) with running means."""

    def __init__(self, n: int, dim_x: int, dim_y: int):
        self.n = n
        self.g = np.zeros((n, dim_x))
        self.h = np.zeros((n, dim_y))
        self.g_mean = np.zeros(dim_x)
        self.h_mean = np.zeros(dim_y)

    def copy(self) -> "MemoryTables":
        out = MemoryTables.__new__(MemoryTables)
        out.n = self.n
        out.g, out.h = self.g.copy(), self.h.copy()
        out.g_mean, out.h_mean = self.g_mean.copy(), self.h_mean.copy()
        return out

    def write_rows(self, batch: np.ndarray, gx: np.ndarray, gy: np.ndarray) -> None:
        """Overwrite rows in ``batch`` and patch the means by the row changes.

        A repeated index keeps its last row.
        """
        batch = np.asarray(batch, dtype=np.intp)
        if not batch.size:
            return
        if batch.min() < 0 or batch.max() >= self.n:
            raise IndexOutOfRange(f"table row outside 0..{self.n - 1}")
        if np.all(batch[1:] > batch[:-1]):
            rows = batch
        else:
            rows, first_rev = np.unique(batch[::-1], return_index=True)
            pos = batch.size - 1 - first_rev
            gx, gy = gx[pos], gy[pos]
        self.g_mean += (gx - self.g[rows]).sum(axis=0) / self.n
        self.h_mean += (gy - self.h[rows]).sum(axis=0) / self.n
        self.g[rows] = gx
        self.h[rows] = gy


@dataclass
class EstimatorState:
    """One worker's estimator: current ``v``/``u`` and the point they were built at."""

    v: np.ndarray
    u: np.ndarray
    prev_x: np.ndarray
    prev_y: np.ndarray
    tables: MemoryTables | None = None
    grad_evals: int = 0
    t: int = 0

    def copy(self) -> "EstimatorState":
        return EstimatorState(
            self.v.copy(),
            self.u.copy(),
            self.prev_x.copy(),
            self.prev_y.copy(),
            None if self.tables is None else self.tables.copy(),
            self.grad_evals,
            self.t,
        )


def sample_batch(
    rng: np.random.Generator, n: int, s: int, without_replacement: bool = True
) -> np.ndarray:
    """Draw ``s`` indices from ``range(n)``, returned sorted.

    Sorting fixes the reduction order, so a batch covering every index
    reproduces the full-gradient mean bit for bit.
    """
    if s < 1:
        raise ValueError(f"batch size must be positive, got {s}")
    if without_replacement:
        if s > n:
            raise BatchTooLarge(f"batch size {s} exceeds sample count {n}")
        if s == n:
            return np.arange(n)
        idx = rng.choice(n, size=s, replace=False)
    else:
        idx = rng.integers(0, n, size=s)
    return np.sort(idx)


def table_refresh(tables: MemoryTables, problem: MinimaxProblem, k: int, x, y, batch) -> MemoryTables:
    batch = np.asarray(batch, dtype=np.intp)
    if batch.size:
        gx, gy = problem.grads(k, batch, x, y)
        tables.write_rows(batch, gx, gy)
    return tables


def _batch_means(problem, k, batch, x, y):
    gx, gy = problem.grads(k, batch, x, y)
    return gx, gy, gx.mean(axis=0), gy.mean(axis=0)


def zerosarah_init(problem: MinimaxProblem, k: int, x0, y0, batch) -> EstimatorState:
    """Round-0 estimate (rho0 = 1): the plain minibatch mean, tables seeded from it."""
    batch = np.asarray(batch, dtype=np.intp)
    x0 = np.array(x0, float)
    y0 = np.array(y0, float)
    gx, gy, vx, vy = _batch_means(problem, k, batch, x0, y0)
    tables = MemoryTables(problem.n, problem.dim_x, problem.dim_y)
    tables.write_rows(batch, gx, gy)
    return EstimatorState(vx, vy, x0, y0, tables, grad_evals=len(batch), t=1)


def zerosarah_update(state: EstimatorState, problem: MinimaxProblem, k: int, x, y, batch, rho: float):
    """Advance ``v``/``u`` to the point ``(x, y)`` and refresh the tables there."""
    if not 0.0 <= rho <= 1.0:
        raise ScheduleMismatch(f"rho={rho} outside [0, 1]")
    batch = np.asarray(batch, dtype=np.intp)
    x = np.array(x, float)
    y = np.array(y, float)
    tab = state.tables
    cur_x, cur_y = problem.grads(k, batch, x, y)
    old_x, old_y = problem.grads(k, batch, state.prev_x, state.prev_y)

    # (1-rho) v + mean(cur - old) + rho (mean(old - table) + table mean)
    s = len(batch)
    state.v = (1 - rho) * state.v + (cur_x - old_x + rho * (old_x - tab.g[batch])).sum(axis=0) / s + rho * tab.g_mean
    state.u = (1 - rho) * state.u + (cur_y - old_y + rho * (old_y - tab.h[batch])).sum(axis=0) / s + rho * tab.h_mean
    tab.write_rows(batch, cur_x, cur_y)
    state.prev_x, state.prev_y = x, y
    state.grad_evals += 2 * len(batch)
    state.t += 1
    return state.v, state.u


def minibatch_init(problem: MinimaxProblem, k: int, x0, y0, batch) -> EstimatorState:
    batch = np.asarray(batch, dtype=np.intp)
    x0 = np.array(x0, float)
    y0 = np.array(y0, float)
    _, _, vx, vy = _batch_means(problem, k, batch, x0, y0)
    return EstimatorState(vx, vy, x0, y0, grad_evals=len(batch), t=1)


def storm_update(state: EstimatorState, problem: MinimaxProblem, k: int, x, y, batch, beta: float):
    """Momentum-corrected recursion ``v = g_B(x_t) + (1 - beta)(v - g_B(x_{t-1}))``."""
    if not 0.0 <= beta <= 1.0:
        raise ScheduleMismatch(f"beta={beta} outside [0, 1]")
    batch = np.asarray(batch, dtype=np.intp)
    x = np.array(x, float)
    y = np.array(y, float)
    _, _, cx, cy = _batch_means(problem, k, batch, x, y)
    _, _, ox, oy = _batch_means(problem, k, batch, state.prev_x, state.prev_y)
    state.v = cx + (1 - beta) * (state.v - ox)
    state.u = cy + (1 - beta) * (state.u - oy)
    state.prev_x, state.prev_y = x, y
    state.grad_evals += 2 * len(batch)
    state.t += 1
    return state.v, state.u


def spider_init(problem: MinimaxProblem, k: int, x0, y0) -> EstimatorState:
    x0 = np.array(x0, float)
    y0 = np.array(y0, float)
    vx, vy = problem.full_grad(k, x0, y0)
    return EstimatorState(vx, vy, x0, y0, grad_evals=problem.n, t=1)


def spider_update(state: EstimatorState, problem: MinimaxProblem, k: int, x, y, batch, q: int, t: int):
    """Full gradient when ``t % q == 0``, otherwise a SARAH difference step."""
    if q < 1:
        raise ValueError(f"restart period must be >= 1, got {q}")
    x = np.array(x, float)
    y = np.array(y, float)
    if t % q == 0:
        state.v, state.u = problem.full_grad(k, x, y)
        state.grad_evals += problem.n
    else:
        batch = np.asarray(batch, dtype=np.intp)
        _, _, cx, cy = _batch_means(problem, k, batch, x, y)
        _, _, ox, oy = _batch_means(problem, k, batch, state.prev_x, state.prev_y)
        state.v = state.v + cx - ox
        state.u = state.u + cy - oy
        state.grad_evals += 2 * len(batch)
    state.prev_x, state.prev_y = x, y
    state.t += 1
    return state.v, state.u


# Per-kind drivers used by the optimizer. Each owns its hyperparameters and
# draws exactly one batch per worker per round (none on SPIDER restarts).


class ZeroSarahEstimator:
    kind = "dsgda"

    def __init__(self, schedule: Schedule, without_replacement: bool = True):
        self.schedule = schedule
        self.without_replacement = without_replacement

    def init(self, problem, k, x0, y0, rng):
        batch = sample_batch(rng, problem.n, self.schedule.s0, self.without_replacement)
        return zerosarah_init(problem, k, x0, y0, batch)

    def step(self, state, problem, k, x, y, rng, t):
        batch = sample_batch(rng, problem.n, self.schedule.s1, self.without_replacement)
        return zerosarah_update(state, problem, k, x, y, batch, self.schedule.rho(t))


class StormEstimator:
    kind = "storm"

    def __init__(self, batch0: int, batch: int, beta: float):
        if not 0.0 <= beta <= 1.0:
            raise ScheduleMismatch(f"beta={beta} outside [0, 1]")
        self.batch0 = batch0
        self.batch = batch
        self.beta = beta

    def init(self, problem, k, x0, y0, rng):
        return minibatch_init(problem, k, x0, y0, sample_batch(rng, problem.n, self.batch0))

    def step(self, state, problem, k, x, y, rng, t):
        batch = sample_batch(rng, problem.n, self.batch)
        return storm_update(state, problem, k, x, y, batch, self.beta)


class SpiderEstimator:
    kind = "spider"

    def __init__(self, batch: int, q: int):
        if q < 1:
            raise ValueError(f"restart period must be >= 1, got {q}")
        self.batch = batch
        self.q = q

    def init(self, problem, k, x0, y0, rng):
        return spider_init(problem, k, x0, y0)

    def step(self, state, problem, k, x, y, rng, t):
        batch = None if t % self.q == 0 else sample_batch(rng, problem.n, self.batch)
        return spider_update(state, problem, k, x, y, batch, self.q, t)


def make_estimator(kind: str, n: int, *, s0=None, s1=None, rho1=None, beta=None, q=None):
    """Build the driver for ``kind`` with DSGDA-style defaults for missing sizes."""
    default = Schedule.theorem(n)
    s0 = default.s0 if s0 is None else s0
    s1 = default.s1 if s1 is None else s1
    if kind == "dsgda":
        return ZeroSarahEstimator(Schedule(s0, s1, default.rho1 if rho1 is None else rho1))
    if kind == "storm":
        return StormEstimator(s0, s1, 0.01 * min(1.0, 0.01 * n) if beta is None else beta)
    if kind == "spider":
        return SpiderEstimator(s1, default.s1 if q is None else q)
    raise ValueError(f"unknown estimator kind {kind!r}; expected one of {ESTIMATOR_KINDS}")
