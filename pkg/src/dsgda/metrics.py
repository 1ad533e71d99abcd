"""Evaluation quantities recorded each round."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from .errors import DegenerateLabels, DimensionMismatch

__all__ = ["IterationRecord", "MetricRecorder", "test_auc", "consensus_error", "score", "CSV_COLUMNS"]

CSV_COLUMNS = ("t", "grad_evals", "comm_rounds", "test_auc", "consensus_x", "consensus_y")


@dataclass(frozen=True)
class IterationRecord:
    """Metrics for round ``t``; ``grad_evals`` is cumulative per worker."""

    t: int
    grad_evals: int
    comm_rounds: int
    test_auc: float | None
    consensus_x: float
    consensus_y: float
    stationarity: float | None = None
    potential: float | None = None

    def as_row(self, columns) -> list[str]:
        out = []
        for col in columns:
            val = getattr(self, col)
            if val is None:
                out.append("nan")
            elif isinstance(val, float):
                out.append(repr(float(val)))
            else:
                out.append(str(val))
        return out


def test_auc(scores, labels) -> float:
    """Wilcoxon-Mann-Whitney AUC with ties counted as one half."""
    scores = np.asarray(scores, dtype=float).reshape(-1)
    labels = np.asarray(labels).reshape(-1)
    if scores.shape != labels.shape:
        raise DimensionMismatch(f"{scores.size} scores for {labels.size} labels")
    pos = labels == 1
    n_pos = int(pos.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DegenerateLabels("AUC needs at least one positive and one negative label")
    ranks = rankdata(scores, method="average")
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2
    return float(u / (n_pos * n_neg))


test_auc.__test__ = False  # not a pytest test despite the name


def consensus_error(stacked) -> float:
    """Mean squared deviation of the rows from their average."""
    C = np.asarray(stacked, dtype=float)
    dev = C - C.mean(axis=0)
    return float(np.sum(dev * dev) / C.shape[0])


def score(problem, x_bar, features) -> np.ndarray:
    """Classifier scores ``theta' a`` for every row of ``features``."""
    d = getattr(problem, "d", None)
    if d is None or features.shape[1] != d or np.asarray(x_bar).size < d:
        raise DimensionMismatch(f"cannot score {features.shape[1]}-dim features with this model")
    theta = np.asarray(x_bar, dtype=float)[:d]
    return np.asarray(features @ theta).reshape(-1)


class MetricRecorder:
    """Round hook that turns snapshots into :class:`IterationRecord` rows."""

    def __init__(self, problem, test_set=None, stationarity=None, potential=None, log_every=1, last_round=None):
        if log_every < 1:
            raise ValueError("log_every must be >= 1")
        self.problem = problem
        self.test_set = test_set
        self.stationarity = stationarity
        self.potential = potential
        self.log_every = log_every
        self.last_round = last_round
        self.records: list[IterationRecord] = []

    def columns(self) -> tuple[str, ...]:
        cols = CSV_COLUMNS
        if self.stationarity is not None:
            cols += ("stationarity",)
        if self.potential is not None:
            cols += ("potential",)
        return cols

    def __call__(self, snap) -> None:
        if snap.t % self.log_every and snap.t != self.last_round:
            return
        auc = None
        if self.test_set is not None:
            auc = test_auc(score(self.problem, snap.x_bar, self.test_set.features), self.test_set.labels)
        rec = IterationRecord(
            t=snap.t,
            grad_evals=snap.grad_evals,
            comm_rounds=snap.comm_rounds,
            test_auc=auc,
            consensus_x=consensus_error(snap.X),
            consensus_y=consensus_error(snap.Y),
            stationarity=None if self.stationarity is None else self.stationarity(snap),
            potential=None if self.potential is None else self.potential(snap),
        )
        self.records.append(rec)

