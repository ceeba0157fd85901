"""Closed forms for the difference in means when outcomes obey SUTVA."""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from ..graph import ClusteredGraph
from ..outcomes import PotentialTable
from ..stats import MomentSummary
from ._common import cluster_slices, exact_counts, require_equal_sizes, resolve_nt, svar
from ..errors import InvalidInputError


class Regime(str, enum.Enum):
    STRATIFIED = "stratified"
    CLUSTER_BASED = "cluster_based"
    INDIFFERENT = "indifferent"


@dataclass
class SutvaSummary:
    n_t: int
    W: np.ndarray
    totals: np.ndarray
    within: np.ndarray
    between: float

    @classmethod
    def build(cls, t: PotentialTable, g: ClusteredGraph, n_t: int) -> "SutvaSummary":
        N = t.N
        if t.N != g.N:
            raise InvalidInputError("table and graph sizes differ")
        if not 0 < n_t < N:
            raise InvalidInputError("n_t must satisfy 0 < n_t < N")
        W = (n_t / N) * t.Y0 + ((N - n_t) / N) * t.Y1
        parts = cluster_slices(W, g)
        totals = np.array([p.sum() for p in parts])
        within = np.array([p.size * svar(p) for p in parts])
        between = g.M * svar(totals) if g.M >= 2 else 0.0
        return cls(n_t, W, totals, within, between)


def _scale(N: int, n_t: int) -> float:
    n_c = N - n_t
    return N * N / (n_t * n_t * n_c * n_c)


def sutva_cond_expectation(t: PotentialTable, pi, g: ClusteredGraph, n_t: int | None = None) -> float:
    n = exact_counts(pi, g)
    n_t = resolve_nt(n, n_t, g.N)
    p = n / g.sizes
    Y1 = np.array([x.sum() for x in cluster_slices(t.Y1, g)])
    Y0 = np.array([x.sum() for x in cluster_slices(t.Y0, g)])
    return float(np.dot(p, Y1) / n_t - np.dot(1 - p, Y0) / (g.N - n_t))


def sutva_cond_variance(t: PotentialTable, pi, g: ClusteredGraph, n_t: int | None = None) -> float:
    n = exact_counts(pi, g)
    n_t = resolve_nt(n, n_t, g.N)
    p = n / g.sizes
    s = SutvaSummary.build(t, g, n_t)
    return float(_scale(g.N, n_t) * np.sum(p * (1 - p) * s.within))


@dataclass
class MarginalVariance:
    base: float
    slope: float
    value: float


def sutva_marginal_variance(t: PotentialTable, moments: MomentSummary, g: ClusteredGraph, n_t: int) -> MarginalVariance:
    require_equal_sizes(g)
    s = SutvaSummary.build(t, g, n_t)
    N, n_c = g.N, g.N - n_t
    base = float(s.within.sum() / (n_t * n_c))
    slope = float(_scale(N, n_t) * (s.between - s.within.sum()))
    return MarginalVariance(base, slope, base + slope * moments.mu2c)


def sutva_regime(t: PotentialTable, g: ClusteredGraph, n_t: int, rel_tol: float = 1e-12) -> Regime:
    """Stratified when between-cluster spread of W totals dominates, else cluster-based."""
    require_equal_sizes(g)
    s = SutvaSummary.build(t, g, n_t)
    lhs, rhs = s.between, s.within.sum()
    if abs(lhs - rhs) <= rel_tol * max(abs(lhs), abs(rhs), 1e-300):
        return Regime.INDIFFERENT
    return Regime.STRATIFIED if lhs > rhs else Regime.CLUSTER_BASED


@dataclass
class QuadraticForm:
    """Objective pi' Q pi + c' pi + const."""

    Q: np.ndarray
    c: np.ndarray
    const: float = 0.0

    def __call__(self, pi) -> float:
        p = np.asarray(pi, dtype=float)
        return float(p @ self.Q @ p + self.c @ p + self.const)

    def grad(self, pi) -> np.ndarray:
        p = np.asarray(pi, dtype=float)
        return 2 * self.Q @ p + self.c


def sutva_mse_form(t: PotentialTable, g: ClusteredGraph, n_t: int) -> QuadraticForm:
    """Conditional MSE as a quadratic form, valid on {pi : sum_j pi_j N_j = n_t}."""
    s = SutvaSummary.build(t, g, n_t)
    K = _scale(g.N, n_t)
    Wbar = s.W.mean()
    Wt = s.totals - g.sizes * Wbar
    Q = K * (np.outer(Wt, Wt) - np.diag(s.within))
    return QuadraticForm(Q, K * s.within)


def sutva_cond_mse(t: PotentialTable, pi, g: ClusteredGraph, n_t: int | None = None):
    """Returns (value, QuadraticForm)."""
    n = exact_counts(pi, g)
    n_t = resolve_nt(n, n_t, g.N)
    form = sutva_mse_form(t, g, n_t)
    return form(n / g.sizes), form
