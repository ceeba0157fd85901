"""Small random instances shared by the test modules."""
from __future__ import annotations

import numpy as np

from satdesign.graph import ClusteredGraph
from satdesign.outcomes import OutcomeModel


def random_graph(sizes, rng: np.random.Generator, p: float = 0.35) -> ClusteredGraph:
    """Sparse Erdos-Renyi graph with every unit given at least one neighbour."""
    sizes = np.asarray(sizes)
    N = int(sizes.sum())
    membership = np.repeat(np.arange(sizes.size), sizes)
    edges = set()
    for i in range(N):
        for k in range(i + 1, N):
            if rng.random() < p:
                edges.add((i, k))
    deg = np.zeros(N, int)
    for i, k in edges:
        deg[i] += 1
        deg[k] += 1
    for i in np.flatnonzero(deg == 0):
        k = int(rng.choice([x for x in range(N) if x != i]))
        edges.add((min(i, k), max(i, k)))
    return ClusteredGraph.from_edges(membership, sorted(edges), M=sizes.size)


def random_model(N: int, rng: np.random.Generator, sutva: bool = False) -> OutcomeModel:
    alpha = rng.normal(0, 1, N)
    beta = rng.normal(1, 0.5, N)
    gamma = np.zeros(N) if sutva else rng.normal(0.5, 0.7, N)
    return OutcomeModel(alpha, beta, gamma)


def random_counts(sizes, rng: np.random.Generator, interior: bool = False) -> np.ndarray:
    sizes = np.asarray(sizes)
    lo = 1 if interior else 0
    while True:
        n = np.array([rng.integers(lo, s - lo + 1) for s in sizes])
        if 0 < n.sum() < sizes.sum():
            return n
