"""LIBSVM parsing, train/test splitting and per-worker partitioning."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .errors import EmptyWorker, LabelError, ParseError

__all__ = [
    "Dataset",
    "Partition",
    "parse_libsvm",
    "write_libsvm",
    "count_samples",
    "split",
    "partition",
    "synthetic_imbalanced",
    "max_abs_scale",
]


@dataclass(frozen=True)
class Dataset:
    """Binary-labelled samples; ``features`` is an ``(N, d)`` ndarray or CSR matrix."""

    features: np.ndarray | sp.csr_matrix
    labels: np.ndarray

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=np.int8).reshape(-1)
        if labels.size and not np.all(np.isin(labels, (-1, 1))):
            raise ValueError("labels must be +1/-1")
        if self.features.shape[0] != labels.size:
            raise ValueError(f"{self.features.shape[0]} feature rows for {labels.size} labels")
        object.__setattr__(self, "labels", labels)

    def __len__(self) -> int:
        return self.labels.size

    @property
    def d(self) -> int:
        return self.features.shape[1]

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=np.intp)
        return Dataset(self.features[idx], self.labels[idx])

    def dense(self) -> np.ndarray:
        return self.features.toarray() if sp.issparse(self.features) else np.asarray(self.features)

    @property
    def positive_fraction(self) -> float:
        return float(np.mean(self.labels == 1)) if len(self) else 0.0


@dataclass(frozen=True)
class Partition:
    """Equal-size, disjoint index lists (one per worker) into a training set."""

    indices: list[np.ndarray]
    dropped: int

    @property
    def n(self) -> int:
        return len(self.indices[0])


def _parse_label(token: str, lineno: int) -> int:
    try:
        val = float(token)
    except ValueError:
        raise ParseError(lineno, f"bad label {token!r}") from None
    if val == 1:
        return 1
    if val in (0, -1):
        return -1
    raise LabelError(lineno, f"non-binary label {token!r}")


def parse_libsvm(path: str | Path, n_features: int | None = None) -> Dataset:
    """Read ``label idx:val ...`` lines (1-based indices) into a CSR dataset.

    Labels 0/-1 map to -1 and 1 maps to +1. ``n_features`` pins the
    dimension so separately-stored train and test files agree.
    """
    rows, cols, vals, labels = [], [], [], []
    max_idx = 0
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            tokens = line.split()
            labels.append(_parse_label(tokens[0], lineno))
            r = len(labels) - 1
            for tok in tokens[1:]:
                key, sep, value = tok.partition(":")
                if not sep:
                    raise ParseError(lineno, f"expected idx:val, got {tok!r}")
                try:
                    idx = int(key)
                    v = float(value)
                except ValueError:
                    raise ParseError(lineno, f"malformed feature {tok!r}") from None
                if idx < 1:
                    raise ParseError(lineno, f"feature index {idx} is not 1-based")
                if n_features is not None and idx > n_features:
                    raise ParseError(lineno, f"feature index {idx} exceeds n_features={n_features}")
                rows.append(r)
                cols.append(idx - 1)
                vals.append(v)
                max_idx = max(max_idx, idx)
    d = max_idx if n_features is None else n_features
    X = sp.csr_matrix((vals, (rows, cols)), shape=(len(labels), d), dtype=float)
    return Dataset(X, np.array(labels, dtype=np.int8))


def write_libsvm(ds: Dataset, path: str | Path) -> None:
    X = sp.csr_matrix(ds.features)
    X.sort_indices()
    lines = []
    for r in range(X.shape[0]):
        start, end = X.indptr[r], X.indptr[r + 1]
        feats = " ".join(f"{c + 1}:{float(v)!r}" for c, v in zip(X.indices[start:end], X.data[start:end]) if v != 0)
        label = "+1" if ds.labels[r] == 1 else "-1"
        lines.append(f"{label} {feats}".rstrip())
    Path(path).write_text("".join(line + "\n" for line in lines))


def count_samples(path: str | Path) -> int:
    """Number of sample lines in a LIBSVM file, without parsing features."""
    with open(path) as fh:
        return sum(1 for raw in fh if raw.split("#", 1)[0].strip())


def split(ds: Dataset, test_frac: float, seed: int | np.random.SeedSequence) -> tuple[Dataset, Dataset]:
    """Shuffle, then hold out ``floor(N * test_frac)`` samples for testing."""
    if not 0.0 < test_frac < 1.0:
        raise ValueError(f"test_frac must lie in (0, 1), got {test_frac}")
    perm = np.random.default_rng(seed).permutation(len(ds))
    n_test = int(np.floor(len(ds) * test_frac))
    return ds.subset(perm[n_test:]), ds.subset(perm[:n_test])


def partition(train: Dataset | int, K: int, seed: int | np.random.SeedSequence) -> Partition:
    """Deal a shuffled training set round-robin into ``K`` equal shares.

    The ``N mod K`` leftovers are dropped so every worker holds exactly
    ``n = N // K`` samples.
    """
    if K < 1:
        raise ValueError(f"K must be >= 1, got {K}")
    N = train if isinstance(train, int) else len(train)
    if N < K:
        raise EmptyWorker(f"{N} samples cannot fill {K} workers")
    n = N // K
    perm = np.random.default_rng(seed).permutation(N)[: n * K]
    return Partition([np.sort(perm[k::K]) for k in range(K)], dropped=N - n * K)


def synthetic_imbalanced(
    n_samples: int,
    n_features: int = 20,
    pos_frac: float = 0.1,
    separation: float = 2.5,
    seed: int | np.random.SeedSequence = 0,
) -> Dataset:
    """Two Gaussian classes whose means are ``separation`` apart.

    Features are divided by ``sqrt(n_features)`` so rows have roughly unit
    norm; the Bayes-optimal AUC is ``Phi(separation / sqrt(2))``.
    """
    if not 0.0 < pos_frac < 1.0:
        raise ValueError(f"pos_frac must lie in (0, 1), got {pos_frac}")
    rng = np.random.default_rng(seed)
    direction = rng.standard_normal(n_features)
    direction *= separation / np.linalg.norm(direction)
    n_pos = int(round(n_samples * pos_frac))
    labels = np.full(n_samples, -1, dtype=np.int8)
    labels[rng.permutation(n_samples)[:n_pos]] = 1
    X = rng.standard_normal((n_samples, n_features)) + 0.5 * labels[:, None] * direction
    return Dataset(X / np.sqrt(n_features), labels)


def max_abs_scale(train: Dataset, *others: Dataset) -> tuple[Dataset, ...]:
    """Scale every column by its max absolute value on ``train``."""
    scale = np.asarray(abs(train.features).max(axis=0).todense() if sp.issparse(train.features)
                       else np.abs(train.features).max(axis=0), dtype=float).reshape(-1)
    scale[scale == 0] = 1.0
    inv = sp.diags(1.0 / scale)

    def apply(ds: Dataset) -> Dataset:
        if sp.issparse(ds.features):
            return Dataset(sp.csr_matrix(ds.features @ inv), ds.labels)
        return Dataset(np.asarray(ds.features) / scale, ds.labels)

    return tuple(apply(ds) for ds in (train, *others))
