from __future__ import annotations

import logging

import numpy as np

from ..designs import as_pi, is_integer_consistent
from ..errors import ConsistencyError, InvalidInputError, UnsupportedConfigurationError
from ..graph import ClusteredGraph

log = logging.getLogger("satdesign.analytics")


def exact_counts(pi, g: ClusteredGraph) -> np.ndarray:
    p = as_pi(pi)
    if p.shape != (g.M,):
        raise InvalidInputError("proportion vector length differs from the cluster count")
    if not is_integer_consistent(p, g.sizes):
        raise ConsistencyError("pi_j * N_j is not an integer for some cluster")
    return np.round(p * g.sizes).astype(np.int64)


def resolve_nt(counts: np.ndarray, n_t: int | None, N: int) -> int:
    total = int(counts.sum())
    if n_t is not None and int(n_t) != total:
        raise ConsistencyError(f"sum of treated counts {total} differs from n_t={n_t}")
    if not 0 < total < N:
        raise InvalidInputError("the design must treat some but not all units")
    return total


def require_equal_sizes(g: ClusteredGraph) -> None:
    if not g.equal_sizes:
        raise UnsupportedConfigurationError("this formula assumes equal cluster sizes")


def cluster_slices(x: np.ndarray, g: ClusteredGraph) -> list[np.ndarray]:
    return [x[g.cluster_units(j)] for j in range(g.M)]


def svar(x: np.ndarray) -> float:
    """Sample variance, defined as 0 for fewer than two entries."""
    if x.size < 2:
        return 0.0
    return float(np.sum((x - x.mean()) ** 2) / (x.size - 1))


def scov(x: np.ndarray, y: np.ndarray) -> float:
    if x.size < 2:
        return 0.0
    return float(np.sum((x - x.mean()) * (y - y.mean())) / (x.size - 1))


def floor_variance(v: float, what: str) -> float:
    if v < 0:
        if v < -1e-9 * max(1.0, abs(v)):
            log.warning("%s is negative (%.3e); clamped to 0", what, v)
        return 0.0
    return v
