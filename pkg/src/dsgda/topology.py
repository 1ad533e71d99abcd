"""Communication graphs and the mixing matrices built from them.

Graphs are undirected and simple. A mixing matrix is the symmetric,
doubly-stochastic, nonnegative weight matrix each worker uses to average
its neighbours' vectors; consensus contracts at rate ``lam = |lambda_2|``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConnectivityFailure, SpectralFailure

__all__ = [
    "Graph",
    "MixingMatrix",
    "build_erdos_renyi",
    "build_line",
    "build_ring",
    "build_complete",
    "build_graph",
    "metropolis_weights",
    "spectral_gap",
    "second_eigenvalue_modulus",
    "validate",
    "dump_edge_list",
    "load_edge_list",
]

ER_RETRIES = 32
SYMMETRY_TOL = 1e-12
STOCHASTIC_TOL = 1e-10


def _normalize_edge(i: int, j: int) -> tuple[int, int]:
    return (i, j) if i < j else (j, i)


@dataclass(frozen=True)
class Graph:
    """Undirected simple graph on nodes ``0..node_count-1``."""

    node_count: int
    edges: frozenset[tuple[int, int]]

    def __init__(self, node_count: int, edges=()):
        if node_count < 1:
            raise ValueError(f"node_count must be positive, got {node_count}")
        normalized = set()
        for i, j in edges:
            i, j = int(i), int(j)
            if i == j:
                raise ValueError(f"self-loop at node {i}")
            if not (0 <= i < node_count and 0 <= j < node_count):
                raise ValueError(f"edge ({i}, {j}) outside 0..{node_count - 1}")
            normalized.add(_normalize_edge(i, j))
        object.__setattr__(self, "node_count", node_count)
        object.__setattr__(self, "edges", frozenset(normalized))

    def degrees(self) -> np.ndarray:
        deg = np.zeros(self.node_count, dtype=int)
        for i, j in self.edges:
            deg[i] += 1
            deg[j] += 1
        return deg

    def neighbors(self, node: int) -> list[int]:
        out = [j for i, j in self.edges if i == node]
        out += [i for i, j in self.edges if j == node]
        return sorted(out)

    def is_connected(self) -> bool:
        adj: dict[int, list[int]] = {k: [] for k in range(self.node_count)}
        for i, j in self.edges:
            adj[i].append(j)
            adj[j].append(i)
        seen = {0}
        stack = [0]
        while stack:
            node = stack.pop()
            for nb in adj[node]:
                if nb not in seen:
                    seen.add(nb)
                    stack.append(nb)
        return len(seen) == self.node_count

    def sorted_edges(self) -> list[tuple[int, int]]:
        return sorted(self.edges)


def _check_size(K: int) -> None:
    if K < 2:
        raise ValueError(f"graph builders need K >= 2, got {K}")


def build_erdos_renyi(K: int, edge_prob: float, seed: int) -> Graph:
    """Sample G(K, edge_prob), retrying with ``seed + 1`` while disconnected."""
    _check_size(K)
    if not 0.0 < edge_prob <= 1.0:
        raise ValueError(f"edge_prob must lie in (0, 1], got {edge_prob}")
    pairs = list(itertools.combinations(range(K), 2))
    for attempt in range(ER_RETRIES + 1):
        rng = np.random.default_rng(seed + attempt)
        keep = rng.random(len(pairs)) < edge_prob
        g = Graph(K, [pr for pr, k in zip(pairs, keep) if k])
        if g.is_connected():
            return g
    raise ConnectivityFailure(
        f"Erdos-Renyi(K={K}, p={edge_prob}) disconnected for seeds "
        f"{seed}..{seed + ER_RETRIES}"
    )


def build_line(K: int) -> Graph:
    _check_size(K)
    return Graph(K, [(i, i + 1) for i in range(K - 1)])


def build_ring(K: int) -> Graph:
    _check_size(K)
    return Graph(K, [(i, (i + 1) % K) for i in range(K)])


def build_complete(K: int) -> Graph:
    _check_size(K)
    return Graph(K, itertools.combinations(range(K), 2))


def build_graph(kind: str, K: int, edge_prob: float = 0.5, seed: int = 0) -> Graph:
    """Dispatch on a topology name as used by run configurations."""
    if kind == "erdos_renyi":
        return build_erdos_renyi(K, edge_prob, seed)
    if kind == "line":
        return build_line(K)
    if kind == "ring":
        return build_ring(K)
    if kind == "complete":
        return build_complete(K)
    raise ValueError(f"unknown topology kind {kind!r}")


def second_eigenvalue_modulus(weights: np.ndarray) -> float:
    """|lambda_2| of a symmetric matrix, eigenvalues ordered by modulus."""
    W = np.asarray(weights, dtype=float)
    if W.shape[0] == 1:
        return 0.0
    try:
        eig = np.linalg.eigvalsh(0.5 * (W + W.T))
    except np.linalg.LinAlgError as exc:
        raise SpectralFailure(str(exc)) from exc
    mods = np.sort(np.abs(eig))[::-1]
    return float(mods[1])


@dataclass(frozen=True)
class MixingMatrix:
    """Gossip weights ``W`` with its cached spectral quantities.

    ``graph`` is optional; when present, :func:`validate` also checks that
    weights are supported on the graph's edges.
    """

    weights: np.ndarray
    graph: Graph | None = None
    lam: float = field(init=False)
    spectral_gap: float = field(init=False)

    def __post_init__(self):
        W = np.array(self.weights, dtype=float)
        if W.ndim != 2 or W.shape[0] != W.shape[1]:
            raise ValueError(f"mixing matrix must be square, got shape {W.shape}")
        W.setflags(write=False)
        object.__setattr__(self, "weights", W)
        lam = second_eigenvalue_modulus(W)
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "spectral_gap", 1.0 - lam)

    @property
    def K(self) -> int:
        return self.weights.shape[0]

    def apply(self, stacked: np.ndarray) -> np.ndarray:
        """One gossip round on a ``(K, dim)`` stack of worker vectors."""
        return self.weights @ stacked


def metropolis_weights(g: Graph) -> MixingMatrix:
    """Metropolis-Hastings weights ``1 / (1 + max(d_i, d_j))`` on each edge."""
    if not g.is_connected():
        raise ConnectivityFailure("metropolis_weights needs a connected graph")
    deg = g.degrees()
    W = np.zeros((g.node_count, g.node_count))
    for i, j in g.edges:
        w = 1.0 / (1.0 + max(deg[i], deg[j]))
        W[i, j] = W[j, i] = w
    np.fill_diagonal(W, 1.0 - W.sum(axis=1))
    return MixingMatrix(W, graph=g)


def spectral_gap(m: MixingMatrix | np.ndarray) -> float:
    if isinstance(m, MixingMatrix):
        return m.spectral_gap
    return 1.0 - second_eigenvalue_modulus(m)


def validate(m: MixingMatrix | np.ndarray, graph: Graph | None = None) -> list[str]:
    """Return the names of violated mixing-matrix conditions (empty if valid).

    Possible entries: ``Nonnegativity``, ``Symmetry``, ``RowStochastic``,
    ``ColumnStochastic``, ``SpectralGap``, ``Support``.
    """
    if isinstance(m, MixingMatrix):
        W = m.weights
        graph = graph if graph is not None else m.graph
    else:
        W = np.asarray(m, dtype=float)
    K = W.shape[0]
    violations = []
    if np.any(W < 0):
        violations.append("Nonnegativity")
    if np.max(np.abs(W - W.T)) > SYMMETRY_TOL:
        violations.append("Symmetry")
    if np.max(np.abs(W.sum(axis=1) - 1.0)) > STOCHASTIC_TOL:
        violations.append("RowStochastic")
    if np.max(np.abs(W.sum(axis=0) - 1.0)) > STOCHASTIC_TOL:
        violations.append("ColumnStochastic")
    if K > 1:
        mods = np.sort(np.abs(np.linalg.eigvals(W)))[::-1]
        if not mods[1] < 1.0 - STOCHASTIC_TOL:
            violations.append("SpectralGap")
    if graph is not None:
        allowed = np.eye(K, dtype=bool)
        for i, j in graph.edges:
            allowed[i, j] = allowed[j, i] = True
        if np.any((W > 0) & ~allowed):
            violations.append("Support")
    return violations


def dump_edge_list(g: Graph, path: str | Path) -> None:
    """Write ``i j`` per line (0-indexed), preceded by a ``# nodes K`` header."""
    lines = [f"# nodes {g.node_count}"] + [f"{i} {j}" for i, j in g.sorted_edges()]
    Path(path).write_text("\n".join(lines) + "\n")


def load_edge_list(path: str | Path, node_count: int | None = None) -> Graph:
    edges = []
    for raw in Path(path).read_text().splitlines():
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            parts = line[1:].split()
            if len(parts) == 2 and parts[0] == "nodes" and node_count is None:
                node_count = int(parts[1])
            continue
        i, j = line.split()
        edges.append((int(i), int(j)))
    if node_count is None:
        node_count = 1 + max((max(e) for e in edges), default=0)
    return Graph(node_count, edges)
