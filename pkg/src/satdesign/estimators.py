"""Point estimators for one realised assignment (or a batch of them)."""
from __future__ import annotations

import numpy as np

from .designs import Assignment
from .errors import DegenerateAssignmentError, InvalidInputError
from .graph import ClusteredGraph


def _z(Z) -> np.ndarray:
    return np.asarray(Z.Z if isinstance(Z, Assignment) else Z, dtype=float)


def diff_in_means(Y, Z) -> float:
    Y = np.asarray(Y, dtype=float)
    z = _z(Z)
    if Y.shape != z.shape:
        raise InvalidInputError("outcome and assignment lengths differ")
    n_t = z.sum()
    n_c = z.size - n_t
    if n_t == 0 or n_c == 0:
        raise DegenerateAssignmentError("difference in means needs treated and control units")
    return float(np.dot(z, Y) / n_t - np.dot(1 - z, Y) / n_c)


def diff_in_means_batch(Y: np.ndarray, Z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Row-wise estimates and a validity mask for an R x N batch."""
    Z = np.asarray(Z, dtype=float)
    n_t = Z.sum(axis=1)
    n_c = Z.shape[1] - n_t
    ok = (n_t > 0) & (n_c > 0)
    est = np.full(Z.shape[0], np.nan)
    sy = np.einsum("rn,rn->r", Z, Y)
    tot = Y.sum(axis=1)
    est[ok] = sy[ok] / n_t[ok] - (tot[ok] - sy[ok]) / n_c[ok]
    return est, ok


def default_weights(g: ClusteredGraph) -> np.ndarray:
    return g.sizes / g.N


def stratified_estimator(Y, Z, g: ClusteredGraph, weights=None) -> float:
    est, ok = stratified_batch(np.asarray(Y, dtype=float)[None, :], _z(Z)[None, :], g, weights)
    if not ok[0]:
        raise DegenerateAssignmentError("a weighted cluster is fully treated or fully control")
    return float(est[0])


def stratified_batch(Y: np.ndarray, Z: np.ndarray, g: ClusteredGraph, weights=None):
    lam = default_weights(g) if weights is None else np.asarray(weights, dtype=float)
    if lam.shape != (g.M,):
        raise InvalidInputError("one weight per cluster is required")
    Z = np.asarray(Z, dtype=float)
    if Z.shape != Y.shape or Z.shape[1] != g.N:
        raise InvalidInputError("outcome and assignment shapes differ")
    oh = g.onehot
    n = np.asarray((oh.T @ Z.T).T)
    sy = np.asarray((oh.T @ (Z * Y).T).T)
    tot = np.asarray((oh.T @ Y.T).T)
    nc = g.sizes[None, :] - n
    active = lam != 0
    ok = np.all((n[:, active] > 0) & (nc[:, active] > 0), axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        per = sy / n - (tot - sy) / nc
    per[:, ~active] = 0.0
    est = np.where(ok, per @ lam, np.nan)
    return est, ok
