"""Coefficients V0..V4 of the marginal variance polynomial in the moments of pi.

    Var = V0 + V1 mu2c + V2 mu2c^2 + V3 mu3c + V4 (mu4c - mu2c^2)

The full tier collects terms from the variance of the conditional
expectation and the permutation average of the conditional variance.  The
simplified tier assumes block-fixed interference and replaces graph sums by
row-normalised edge densities.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import AssumptionViolationError, UnsupportedConfigurationError
from ..graph import ClusteredGraph, cluster_edge_stats
from ..outcomes import InterferenceTensors, OutcomeModel
from ..stats import MomentSummary
from ._common import cluster_slices, require_equal_sizes, scov, svar
from .interference import ConditionalMoments

FULL = "full"
SIMPLIFIED = "simplified_block_fixed"


@dataclass
class VarianceCoefficients:
    V0: float
    V1: float
    V2: float
    V3: float
    V4: float
    tier: str
    N: int
    M: int
    n_t: int
    parts: dict = field(default_factory=dict)

    def as_tuple(self):
        return (self.V0, self.V1, self.V2, self.V3, self.V4)

    def as_dict(self) -> dict:
        return {"V0": self.V0, "V1": self.V1, "V2": self.V2, "V3": self.V3, "V4": self.V4,
                "tier": self.tier, "N": self.N, "M": self.M, "n_t": self.n_t}


def variance_from_moments(V: VarianceCoefficients, m: MomentSummary) -> float:
    return float(V.V0 + V.V1 * m.mu2c + V.V2 * m.mu2c**2 + V.V3 * m.mu3c + V.V4 * (m.mu4c - m.mu2c**2))


def _check_full(g: ClusteredGraph) -> None:
    require_equal_sizes(g)
    if np.any(g.sizes < 2):
        raise UnsupportedConfigurationError("every cluster needs at least two units")
    if g.M < 4:
        raise UnsupportedConfigurationError("fourth-order permutation moments need M >= 4")


def variance_coefficients_full(tens: InterferenceTensors, g: ClusteredGraph) -> VarianceCoefficients:
    _check_full(g)
    N, M, n_t, n_c = g.N, g.M, tens.n_t, tens.n_c
    mu = n_t / N
    K = N * N / (n_t**2 * n_c**2)
    a = mu * (1 - mu)
    b = 1 - 2 * mu
    n = g.sizes.astype(float)

    Wt = tens.W + mu * tens.gamma
    Wt_cl = cluster_slices(Wt, g)
    Wplus = np.array([x.sum() for x in Wt_cl])
    Dplus = np.diag(tens.Djl).copy()
    gh = (tens.gamma + tens.H) / M

    SW = SWD = SDall = SDd = 0.0
    for j in range(M):
        u = g.cluster_units(j)
        Dt = tens.Dl[u] - gh[u, None]  # columns are D~^{(l)(j)}
        wj = Wt[u]
        SW += n[j] * svar(wj)
        SWD += n[j] * scov(wj, Dt[:, j])
        SDall += n[j] * float(np.sum(Dt.var(axis=0, ddof=1)))
        SDd += n[j] * svar(Dt[:, j])

    cm = ConditionalMoments(tens, g)
    # F carries the double-centred sums with a zeroed diagonal; rebuild the diagonal
    Fd = _within_interaction(cm)
    denom = np.outer(n - 1, n - 1)
    Sx = (cm.F + np.diag(Fd)) / denom
    Xall = float(np.sum(np.outer(n, n) * Sx))
    Xd = float(np.sum(n * n * np.diag(Sx)))
    off = tens.Djl.copy()
    Aoff = 0.0
    for j in range(M):
        row = np.delete(off[j], j)
        Aoff += svar(row)
    Bw = svar(Wplus)
    Bwd = scov(Wplus, Dplus)
    Bd = svar(Dplus)

    V0 = K * (a * SW + 0.5 * a * a * Xall)
    V1 = K * (M * Bw - SW + 2 * b * SWD + a * SDall - a * Xall + 0.5 * b * Xd)
    V2 = K * (0.5 * M * Aoff - SDall + 0.5 * Xall)
    V3 = K * (M * Bwd - 2 * SWD + b * SDd - b * Xd)
    V4 = K * (0.25 * M * Bd - SDd + 0.5 * Xd)
    parts = dict(SW=SW, SWD=SWD, SDall=SDall, SDd=SDd, Xall=Xall, Xd=Xd, Aoff=Aoff, Bw=Bw, Bwd=Bwd, Bd=Bd)
    return VarianceCoefficients(V0, V1, V2, V3, V4, FULL, N, M, n_t, parts)


def _within_interaction(cm: ConditionalMoments) -> np.ndarray:
    """Double-centred sum of squares of each within-cluster block D_jj."""
    n = cm.sizes
    return np.maximum(cm.S2 - 2 * cm.Rsum2 / n + cm.Atot**2 / (n * n), 0.0)


def is_block_fixed(gamma, g: ClusteredGraph, tol: float = 1e-9) -> bool:
    for x in cluster_slices(np.asarray(gamma, dtype=float), g):
        if x.size and np.ptp(x) > tol:
            return False
    return True


def variance_coefficients_simplified(model: OutcomeModel, g: ClusteredGraph, n_t: int) -> VarianceCoefficients:
    require_equal_sizes(g)
    if not is_block_fixed(model.gamma, g):
        raise AssumptionViolationError("interference effects are not constant within clusters")
    if g.M < 2:
        raise UnsupportedConfigurationError("needs at least two clusters")
    N, M = g.N, g.M
    n_c = N - n_t
    nt_h = 2 * n_t * n_c / N
    stats = cluster_edge_stats(g)
    if not np.all(stats.q_defined):
        raise UnsupportedConfigurationError("a cluster has no edges; row-normalised densities undefined")
    q = stats.Q
    w_unit = model.alpha + (n_c / N) * model.beta
    w_cl = cluster_slices(w_unit, g)
    n = g.sizes.astype(float)
    within = sum(n[j] * svar(w_cl[j]) for j in range(M))
    tot = lambda x: np.bincount(g.membership, weights=x, minlength=M)
    gam = tot(model.gamma)
    comb = tot(w_unit) + (n_t / N) * gam
    gtil = np.diag(q) * gam

    V0 = (2 / nt_h) * within / N
    V1 = (4 * M / nt_h**2) * (svar(comb) - within / M)
    V2 = 0.0
    for j in range(M):
        vals = np.array([q[j, l] * gam[j] + q[l, j] * gam[l] for l in range(M) if l != j])
        V2 += svar(vals)
    V2 *= 2 * M / nt_h**2
    V3 = (8 * M / nt_h**2) * scov(comb, gtil)
    V4 = (4 * M / nt_h**2) * svar(gtil)
    return VarianceCoefficients(V0, V1, V2, V3, V4, SIMPLIFIED, N, M, n_t)
