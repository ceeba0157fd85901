"""Closed forms for the stratified (within-cluster) difference-in-means estimator."""
from __future__ import annotations

import numpy as np

from ..designs import as_pi
from ..errors import DegenerateAssignmentError, InvalidInputError
from ..graph import ClusteredGraph
from ..outcomes import OutcomeModel, PotentialTable, interference_tensors
from ..stats import harmonic_mean
from ._common import cluster_slices, exact_counts, require_equal_sizes, svar


def _weights(g: ClusteredGraph, weights) -> np.ndarray:
    lam = g.sizes / g.N if weights is None else np.asarray(weights, dtype=float)
    if lam.shape != (g.M,):
        raise InvalidInputError("one weight per cluster is required")
    return lam


def _cluster_variances(t: PotentialTable, g: ClusteredGraph):
    Y1 = cluster_slices(t.Y1, g)
    Y0 = cluster_slices(t.Y0, g)
    St = np.array([svar(y) for y in Y1])
    Sc = np.array([svar(y) for y in Y0])
    Stc = np.array([svar(a - b) for a, b in zip(Y1, Y0)])
    return St, Sc, Stc


def stratified_cond_expectation(t: PotentialTable | OutcomeModel, g: ClusteredGraph, weights=None) -> float:
    """SUTVA expectation sum_j (lambda_j / N_j) sum_{i in C_j} (Y_i(1) - Y_i(0))."""
    lam = _weights(g, weights)
    effect = t.Y1 - t.Y0 if isinstance(t, PotentialTable) else t.beta
    tot = np.bincount(g.membership, weights=effect, minlength=g.M)
    return float(np.sum(lam * tot / g.sizes))


def stratified_cond_variance(t: PotentialTable, pi, g: ClusteredGraph, weights=None) -> float:
    """Variance for a fixed proportion vector: sum_j lambda_j^2 (S_t/n_j + S_c/(N_j-n_j) - S_tc/N_j)."""
    lam = _weights(g, weights)
    n = exact_counts(pi, g)
    act = lam != 0
    if np.any((n[act] == 0) | (n[act] == g.sizes[act])):
        raise DegenerateAssignmentError("a weighted cluster is fully treated or fully control")
    St, Sc, Stc = _cluster_variances(t, g)
    N_ = g.sizes
    with np.errstate(divide="ignore", invalid="ignore"):
        per = St / n + Sc / (N_ - n) - Stc / N_
    return float(np.sum((lam**2 * per)[act]))


def stratified_marginal_variance(t: PotentialTable, pi, g: ClusteredGraph, weights=None) -> float:
    """Variance when pi is randomly permuted across clusters (harmonic-mean form)."""
    require_equal_sizes(g)
    lam = _weights(g, weights)
    p = as_pi(pi)
    if np.any(p <= 0) or np.any(p >= 1):
        raise DegenerateAssignmentError("every proportion must lie strictly inside (0, 1)")
    exact_counts(p, g)
    h_t = harmonic_mean(p)
    h_c = harmonic_mean(1 - p)
    St, Sc, Stc = _cluster_variances(t, g)
    N = g.N
    N_ = g.sizes
    return float(np.sum(lam**2 * (N / N_) * (St / (h_t * N) + Sc / (h_c * N) - Stc / N)))


def stratified_expectation_interference(model: OutcomeModel, g: ClusteredGraph, weights=None) -> float:
    """Exact expectation under the linear interference model, for any pi with 0 < n_j < N_j.

    Within a cluster treated and control units see the same saturation, so
    only the direct effect survives, minus a small term from the one-unit
    difference in treated neighbours: for i != k in the same cluster,
    E[Z_i Z_k]/n_j - E[(1-Z_i) Z_k]/(N_j-n_j) = -1/(N_j (N_j - 1)).
    """
    lam = _weights(g, weights)
    n_t = max(1, min(g.N - 1, g.N // 2))  # T does not depend on n_t
    T = interference_tensors(model, g, n_t).Tjl
    Tjj = np.diag(T)
    N_ = g.sizes.astype(float)
    beta_j = np.bincount(g.membership, weights=model.beta, minlength=g.M) / N_
    with np.errstate(divide="ignore", invalid="ignore"):
        corr = np.where(N_ > 1, Tjj / (N_ * (N_ - 1)), 0.0)
    return float(np.sum(lam * (beta_j - corr)))
