"""Proportion vectors, canonical designs and two-stage assignment samplers."""
from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import special

from .errors import InvalidInputError
from .graph import ClusteredGraph
from .rng import stream

FLOOR_EPS = 1e-9
CONSISTENCY_TOL = 1e-9


def treated_counts(pi, sizes) -> np.ndarray:
    pi = np.asarray(pi, dtype=float)
    sizes = np.asarray(sizes)
    return np.floor(pi * sizes + FLOOR_EPS).astype(np.int64)


def is_integer_consistent(pi, sizes) -> bool:
    x = np.asarray(pi, dtype=float) * np.asarray(sizes, dtype=float)
    return bool(np.all(np.abs(x - np.round(x)) <= CONSISTENCY_TOL))


@dataclass(frozen=True)
class ProportionVector:
    pi: np.ndarray
    sizes: np.ndarray | None = None

    def __post_init__(self):
        pi = np.asarray(self.pi, dtype=float).copy()
        if pi.ndim != 1 or pi.size == 0:
            raise InvalidInputError("proportion vector must be a non-empty vector")
        if np.any(pi < -1e-12) or np.any(pi > 1 + 1e-12) or not np.all(np.isfinite(pi)):
            raise InvalidInputError("proportions must lie in [0, 1]")
        pi = np.clip(pi, 0.0, 1.0)
        pi.setflags(write=False)
        object.__setattr__(self, "pi", pi)
        if self.sizes is not None:
            sizes = np.asarray(self.sizes, dtype=np.int64)
            if sizes.shape != pi.shape:
                raise InvalidInputError("sizes must match the proportion vector")
            object.__setattr__(self, "sizes", sizes)

    @property
    def M(self) -> int:
        return self.pi.size

    @property
    def integer_consistent(self) -> bool | None:
        if self.sizes is None:
            return None
        return is_integer_consistent(self.pi, self.sizes)

    def counts(self, sizes=None) -> np.ndarray:
        sizes = self.sizes if sizes is None else sizes
        if sizes is None:
            raise InvalidInputError("cluster sizes are required to derive treated counts")
        return treated_counts(self.pi, sizes)

    def with_sizes(self, sizes) -> "ProportionVector":
        return ProportionVector(self.pi, np.asarray(sizes))

    def snapped(self, sizes=None) -> "ProportionVector":
        """Nearest integer-consistent vector (rounding each n_j)."""
        sizes = np.asarray(self.sizes if sizes is None else sizes)
        n = np.clip(np.round(self.pi * sizes), 0, sizes)
        return ProportionVector(n / sizes, sizes)


def as_pi(pi) -> np.ndarray:
    return pi.pi if isinstance(pi, ProportionVector) else np.asarray(pi, dtype=float)


def stratified_pi(M: int, mean: float) -> ProportionVector:
    if not 0 <= mean <= 1:
        raise InvalidInputError("mean must lie in [0, 1]")
    return ProportionVector(np.full(M, float(mean)))


def cluster_based_pi(M: int, treated_clusters: int) -> ProportionVector:
    if not 0 <= treated_clusters <= M:
        raise InvalidInputError("treated_clusters must lie in [0, M]")
    pi = np.zeros(M)
    pi[M - treated_clusters:] = 1.0
    return ProportionVector(pi)


def beta_quantile_pi(lam: float, M: int) -> ProportionVector:
    """pi_j = F^{-1}(j / (M + 1)) for the symmetric Beta(lam, lam) law."""
    if lam < 0 or math.isnan(lam):
        raise InvalidInputError("lambda must be non-negative")
    q = np.arange(1, M + 1) / (M + 1)
    if math.isinf(lam):
        pi = np.full(M, 0.5)
    elif lam == 0:
        pi = np.where(q < 0.5, 0.0, np.where(q > 0.5, 1.0, 0.5))
    else:
        pi = special.betaincinv(lam, lam, q)
        # mirror the lower half so the vector is exactly symmetric about 1/2
        half = M // 2
        pi[M - half:] = 1.0 - pi[:half][::-1]
        if M % 2:
            pi[half] = 0.5
    return ProportionVector(pi)


def beta_quantile_bisect(lam: float, q: float, tol: float = 1e-12) -> float:
    """Inverse regularised incomplete beta by bisection; used as a cross-check."""
    lo, hi = 0.0, 1.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if special.betainc(lam, lam, mid) < q:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def symmetric_two_point_pi(M: int, mean: float, d: float) -> ProportionVector:
    half = M // 2
    pi = np.full(M, float(mean))
    pi[:half] = mean - d
    pi[M - half:] = mean + d
    if np.any(pi < -1e-12) or np.any(pi > 1 + 1e-12):
        raise InvalidInputError("two-point design leaves [0, 1]")
    return ProportionVector(pi)


def symmetric_three_point_pi(M: int, mean: float, fraction_at_extremes: float) -> ProportionVector:
    if mean > 0.5 + 1e-12:
        raise InvalidInputError("three-point design needs mean <= 1/2")
    if not 0 <= fraction_at_extremes <= 1:
        raise InvalidInputError("fraction must lie in [0, 1]")
    k = int(round(fraction_at_extremes * M / 2))
    k = min(k, M // 2)
    pi = np.full(M, float(mean))
    pi[:k] = 0.0
    pi[M - k:] = 2.0 * mean
    return ProportionVector(pi)


# ---------------------------------------------------------------- designs


class Mode(str, enum.Enum):
    DETERMINISTIC = "deterministic"
    PERMUTATION = "permutation"
    INDEPENDENT = "independent"


@dataclass(frozen=True)
class Distribution:
    """Law of a single cluster's proportion in the independent mode.

    kind is one of ``beta`` (params: lam), ``point`` (c), ``two_point``
    (lo, hi, weight = P(hi)) or ``table`` (values, probs).
    """

    kind: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        k = self.kind
        p = self.params
        if k == "beta":
            if p.get("lam", -1) < 0:
                raise InvalidInputError("beta law needs lam >= 0")
        elif k == "point":
            if not 0 <= p.get("c", -1) <= 1:
                raise InvalidInputError("point mass must lie in [0, 1]")
        elif k == "two_point":
            if not (0 <= p["lo"] <= 1 and 0 <= p["hi"] <= 1 and 0 <= p["weight"] <= 1):
                raise InvalidInputError("invalid two-point law")
        elif k == "table":
            v = np.asarray(p["values"], dtype=float)
            w = np.asarray(p["probs"], dtype=float)
            if v.shape != w.shape or np.any(w < 0) or abs(w.sum() - 1) > 1e-12:
                raise InvalidInputError("invalid quantile table")
            if np.any(v < 0) or np.any(v > 1):
                raise InvalidInputError("table values must lie in [0, 1]")
        else:
            raise InvalidInputError(f"unknown distribution kind {k!r}")

    def support(self) -> tuple[np.ndarray, np.ndarray]:
        """Finite support and probabilities, for exact averaging."""
        k, p = self.kind, self.params
        if k == "point":
            return np.array([p["c"]]), np.array([1.0])
        if k == "two_point":
            return np.array([p["lo"], p["hi"]]), np.array([1 - p["weight"], p["weight"]])
        if k == "table":
            return np.asarray(p["values"], float), np.asarray(p["probs"], float)
        if k == "beta" and (p["lam"] == 0 or math.isinf(p["lam"])):
            if p["lam"] == 0:
                return np.array([0.0, 1.0]), np.array([0.5, 0.5])
            return np.array([0.5]), np.array([1.0])
        raise InvalidInputError("continuous law has no finite support")

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        k, p = self.kind, self.params
        if k == "beta" and 0 < p["lam"] < math.inf:
            return rng.beta(p["lam"], p["lam"], size)
        vals, probs = self.support()
        u = rng.random(size)
        idx = np.searchsorted(np.cumsum(probs), u, side="right")
        return vals[np.minimum(idx, vals.size - 1)]


@dataclass(frozen=True)
class DesignSpec:
    mode: Mode
    pi: ProportionVector | None = None
    distribution: Distribution | None = None

    def __post_init__(self):
        mode = Mode(self.mode)
        object.__setattr__(self, "mode", mode)
        if mode in (Mode.DETERMINISTIC, Mode.PERMUTATION) and self.pi is None:
            raise InvalidInputError(f"{mode.value} mode needs a proportion vector")
        if mode is Mode.INDEPENDENT and self.distribution is None:
            raise InvalidInputError("independent mode needs a distribution")

    @classmethod
    def deterministic(cls, pi) -> "DesignSpec":
        return cls(Mode.DETERMINISTIC, pi=_pv(pi))

    @classmethod
    def permutation(cls, pi) -> "DesignSpec":
        return cls(Mode.PERMUTATION, pi=_pv(pi))

    @classmethod
    def independent(cls, dist: Distribution) -> "DesignSpec":
        return cls(Mode.INDEPENDENT, distribution=dist)


def _pv(pi) -> ProportionVector:
    return pi if isinstance(pi, ProportionVector) else ProportionVector(pi)


@dataclass(frozen=True)
class Assignment:
    Z: np.ndarray
    n_t: int
    counts: np.ndarray
    pi: np.ndarray


def stage_one(spec: DesignSpec, M: int, seed: int, replication: int) -> np.ndarray:
    if spec.mode is Mode.DETERMINISTIC:
        pi = spec.pi.pi.copy()
    elif spec.mode is Mode.PERMUTATION:
        pi = spec.pi.pi[stream(seed, "stage1", replication).permutation(spec.pi.M)]
    else:
        pi = spec.distribution.sample(stream(seed, "stage1", replication), M)
    if pi.size != M:
        raise InvalidInputError("proportion vector length differs from the cluster count")
    return pi


def _stage_two_keys(g: ClusteredGraph, seed: int, replication: int) -> np.ndarray:
    # one Philox stream per replication; unit i always consumes draw i, so
    # cluster j's keys depend only on (seed, replication, cluster j's units)
    return stream(seed, "stage2", replication).random(g.N)


def sample_assignment(spec: DesignSpec, g: ClusteredGraph, seed: int, replication: int) -> Assignment:
    Z, pis = sample_assignments(spec, g, seed, [replication])
    pi = pis[0]
    counts = treated_counts(pi, g.sizes)
    return Assignment(Z[0], int(counts.sum()), counts, pi)


def sample_assignments(spec: DesignSpec, g: ClusteredGraph, seed: int, replications: Sequence[int]):
    """Batch sampler returning (Z as R x N int8 matrix, per-replication pi)."""
    reps = list(replications)
    R = len(reps)
    pis = np.empty((R, g.M))
    keys = np.empty((R, g.N))
    for r, rep in enumerate(reps):
        pis[r] = stage_one(spec, g.M, seed, rep)
        keys[r] = _stage_two_keys(g, seed, rep)
    counts = treated_counts(pis, g.sizes[None, :])
    if spec.mode is Mode.DETERMINISTIC and not is_integer_consistent(spec.pi.pi, g.sizes):
        warnings.warn("flooring changes the intended treated counts", stacklevel=2)
    Z = np.zeros((R, g.N), dtype=np.int8)
    for j in range(g.M):
        units = g.cluster_units(j)
        rank = np.argsort(np.argsort(keys[:, units], axis=1, kind="stable"), axis=1, kind="stable")
        Z[:, units] = (rank < counts[:, j:j + 1]).astype(np.int8)
    return Z, pis
