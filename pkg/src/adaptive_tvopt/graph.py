"""Undirected weighted communication graphs.

Laplacian, incidence matrix and algebraic connectivity, plus the
connectivity checks the distributed controllers rely on.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np


class TopologyError(ValueError):
    """Raised for malformed adjacency matrices."""


@dataclass(frozen=True)
class Topology:
    """Fixed undirected graph given by a symmetric weighted adjacency.

    ``edge_list`` holds every pair ``(i, j)`` with ``i < j`` and
    ``weights[i, j] > 0``, in lexicographic order. The smaller index is
    the tail of the edge when building the incidence matrix.
    """

    weights: np.ndarray
    edge_list: tuple[tuple[int, int], ...] = field(init=False)

    def __post_init__(self):
        w = np.array(self.weights, dtype=float)
        if w.ndim != 2 or w.shape[0] != w.shape[1] or w.shape[0] == 0:
            raise TopologyError(f"adjacency must be a nonempty square matrix, got shape {w.shape}")
        if not np.all(np.isfinite(w)):
            raise TopologyError("adjacency contains non-finite entries")
        if np.any(np.diag(w) != 0.0):
            raise TopologyError("self-loops are not allowed (nonzero diagonal)")
        if np.any(w < 0.0):
            raise TopologyError("adjacency weights must be nonnegative")
        if not np.array_equal(w, w.T):
            raise TopologyError("adjacency must be symmetric (undirected graph)")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        n = w.shape[0]
        edges = tuple((i, j) for i, j in combinations(range(n), 2) if w[i, j] > 0.0)
        object.__setattr__(self, "edge_list", edges)

    @property
    def n_agents(self) -> int:
        return self.weights.shape[0]

    def neighbors(self, i: int) -> tuple[int, ...]:
        """One-hop neighbours of ``i`` in increasing order."""
        return tuple(int(j) for j in np.flatnonzero(self.weights[i] > 0.0))

    def closed_neighborhood(self, i: int) -> frozenset[int]:
        return frozenset((i, *self.neighbors(i)))

    # -- named generators -------------------------------------------------

    @classmethod
    def cycle(cls, n: int) -> "Topology":
        if n < 3:
            raise TopologyError("a cycle needs at least 3 nodes")
        w = np.zeros((n, n))
        for i in range(n):
            j = (i + 1) % n
            w[i, j] = w[j, i] = 1.0
        return cls(w)

    @classmethod
    def complete(cls, n: int) -> "Topology":
        return cls(np.ones((n, n)) - np.eye(n))

    @classmethod
    def star(cls, n: int) -> "Topology":
        w = np.zeros((n, n))
        w[0, 1:] = w[1:, 0] = 1.0
        return cls(w)

    @classmethod
    def path(cls, n: int) -> "Topology":
        w = np.zeros((n, n))
        for i in range(n - 1):
            w[i, i + 1] = w[i + 1, i] = 1.0
        return cls(w)

    @classmethod
    def from_generator(cls, name: str, size: int) -> "Topology":
        generators = {"cycle": cls.cycle, "complete": cls.complete, "star": cls.star, "path": cls.path}
        try:
            return generators[name](int(size))
        except KeyError:
            raise TopologyError(
                f"unknown graph generator {name!r}; expected one of {sorted(generators)}"
            ) from None


@dataclass(frozen=True)
class SpectralData:
    laplacian: np.ndarray
    incidence: np.ndarray
    lambda2: float


def laplacian(topology: Topology) -> np.ndarray:
    w = topology.weights
    return np.diag(w.sum(axis=1)) - w


def incidence(topology: Topology) -> np.ndarray:
    """N x |E| incidence matrix; -1 where an edge leaves, +1 where it enters."""
    d = np.zeros((topology.n_agents, len(topology.edge_list)))
    for k, (i, j) in enumerate(topology.edge_list):
        d[i, k] = -1.0
        d[j, k] = 1.0
    return d


def build_spectral(topology: Topology) -> SpectralData:
    lap = laplacian(topology)
    eig = np.linalg.eigvalsh(lap)
    lambda2 = float(eig[1]) if eig.size > 1 else 0.0
    return SpectralData(laplacian=lap, incidence=incidence(topology), lambda2=max(lambda2, 0.0))


def is_connected(topology: Topology) -> bool:
    n = topology.n_agents
    seen = {0}
    queue = deque([0])
    while queue:
        i = queue.popleft()
        for j in topology.neighbors(i):
            if j not in seen:
                seen.add(j)
                queue.append(j)
    return len(seen) == n


def uncovered_pairs(topology: Topology) -> list[tuple[int, int]]:
    """Pairs that are neither adjacent nor share a common neighbour."""
    adj = topology.weights > 0.0
    # (adj @ adj)[i, j] > 0 iff i and j have a common neighbour
    common = (adj.astype(int) @ adj.astype(int)) > 0
    n = topology.n_agents
    return [(i, j) for i, j in combinations(range(n), 2) if not (adj[i, j] or common[i, j])]


def has_two_hop_cover(topology: Topology) -> bool:
    return not uncovered_pairs(topology)


def consensus_gain_condition(k1: float, k2: float, lambda2: float) -> bool:
    """Whether ``k1 / (2 k2**2) < lambda2`` (double-integrator consensus gains)."""
    if k1 <= 0 or k2 <= 0:
        raise ValueError("k1 and k2 must be positive")
    return k1 / (2.0 * k2 * k2) < lambda2
