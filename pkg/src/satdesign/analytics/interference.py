"""Exact conditional moments of the difference in means under the linear interference model.

Write the estimator as
    tau = -N*alpha_bar/n_c + s * (U'Z + 1/2 Z'DZ),   s = N / (n_t n_c).
Given pi, clusters are sampled independently and the within-cluster
indicator vector is a uniform draw of n_j out of N_j units.  Centring Z at
its mean splits U'Z + Z'DZ/2 into orthogonal pieces: one per cluster
(linear plus within-cluster quadratic) and one bilinear piece per pair of
clusters.  The per-cluster variance needs inclusion probabilities of up to
four distinct units, p_r = n(n-1).../(N(N-1)...), which makes the result
exact for any cluster size.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from ..errors import InvalidInputError, UnsupportedConfigurationError
from ..graph import ClusteredGraph
from ..outcomes import InterferenceTensors
from ._common import cluster_slices, exact_counts, floor_variance, resolve_nt, svar
from ..stats import cross_interaction


def falling_ratio(n, N, r: int):
    """p_r = prod_{s<r} (n - s) / (N - s), vectorised; 0 when r exceeds N."""
    n = np.asarray(n, dtype=float)
    N = np.asarray(N, dtype=float)
    out = np.ones(np.broadcast(n, N).shape)
    for s in range(r):
        den = N - s
        safe = np.where(den > 0, den, 1.0)
        out = out * np.where(den > 0, (n - s) / safe, 0.0)
    return out


def _falling_derivative(n, N, r: int, order: int):
    n = np.asarray(n, dtype=float)
    N = np.asarray(N, dtype=float)
    total = np.zeros(np.broadcast(n, N).shape)
    for skip in itertools.permutations(range(r), order):
        term = np.ones_like(total)
        for s in range(r):
            den = N - s
            safe = np.where(den > 0, den, 1.0)
            f = np.where(den > 0, 1.0 / safe, 0.0)
            term = term * (f if s in skip else (n - s) * f)
        total += term
    return total


def falling_ratio_grad(n, N, r: int):
    """d p_r / d n."""
    return _falling_derivative(n, N, r, 1)


def falling_ratio_hess(n, N, r: int):
    """d^2 p_r / d n^2."""
    return _falling_derivative(n, N, r, 2)


class ConditionalMoments:
    """Pre-computed pieces for fast evaluation of conditional moments and their gradients.

    The evaluation treats pi as a continuous variable (n_j = pi_j N_j enters
    the inclusion probabilities as a polynomial), which coincides with the
    exact moments whenever pi_j N_j are integers.
    """

    def __init__(self, tens: InterferenceTensors, g: ClusteredGraph):
        if tens.N != g.N or tens.M != g.M:
            raise InvalidInputError("tensors and graph differ")
        self.tens = tens
        self.g = g
        N, M = g.N, g.M
        self.N, self.M = N, M
        self.sizes = g.sizes.astype(float)
        self.memb = g.membership
        self.s = N / (tens.n_t * tens.n_c)
        self.const = -N * tens.alpha_bar / tens.n_c
        self.tte = tens.beta_bar + tens.gamma_bar
        self.Ucl = np.bincount(self.memb, weights=tens.U, minlength=M)
        self.Tjl = tens.Tjl
        self.Tjj = np.diag(tens.Tjl).copy()
        with np.errstate(divide="ignore", invalid="ignore"):
            self.inv_nm1 = np.where(self.sizes > 1, 1.0 / np.maximum(self.sizes - 1, 1), 0.0)
        Dl = tens.Dl
        self.Dl = Dl
        self.r = Dl[np.arange(N), self.memb]
        oh = g.onehot
        D2 = tens.D.multiply(tens.D)
        SQ = np.asarray((oh.T @ sp.csr_matrix(D2) @ oh).todense())
        Rsq = np.asarray(oh.T @ (Dl * Dl))
        Djl = tens.Djl
        n = self.sizes
        F = SQ - Rsq / n[None, :] - Rsq.T / n[:, None] + Djl**2 / np.outer(n, n)
        F = np.maximum(F, 0.0)
        np.fill_diagonal(F, 0.0)
        self.F = F
        self.S2 = np.diag(SQ).copy()
        self.Atot = np.diag(Djl).copy()
        self.Rsum2 = np.diag(Rsq).copy()
        self.C4 = self.Atot**2 - 2 * self.S2 - 4 * (self.Rsum2 - self.S2)

    # ------------------------------------------------------------ expectation
    def expectation(self, pi) -> float:
        p = np.asarray(pi, dtype=float)
        q = p @ self.Ucl + p @ self.Tjl @ p - np.sum(p * (1 - p) * self.Tjj * self.inv_nm1)
        return float(self.const + self.s * q)

    def expectation_grad(self, pi) -> np.ndarray:
        p = np.asarray(pi, dtype=float)
        return self.s * (self.Ucl + (self.Tjl + self.Tjl.T) @ p - (1 - 2 * p) * self.Tjj * self.inv_nm1)

    # ------------------------------------------------------------ variance
    def _pieces(self, p):
        n = p * self.sizes
        P = [falling_ratio(n, self.sizes, r) for r in (1, 2, 3, 4)]
        e = self.tens.U + self.Dl @ p - p[self.memb] * self.r
        M = self.M
        Se2 = np.bincount(self.memb, weights=e * e, minlength=M)
        E = np.bincount(self.memb, weights=e, minlength=M)
        Ser = np.bincount(self.memb, weights=e * self.r, minlength=M)
        return n, P, e, Se2, E, Ser

    def variance(self, pi) -> float:
        p = np.asarray(pi, dtype=float)
        _, (p1, p2, p3, p4), _, Se2, E, Ser = self._pieces(p)
        A, S2, R2, C4 = self.Atot, self.S2, self.Rsum2, self.C4
        within = (
            (p1 - p2) * Se2
            + (p2 - p1 * p1) * E * E
            + 2 * (p2 - p1 * p2) * Ser
            + (p3 - p1 * p2) * (E * A - 2 * Ser)
            + 0.25 * (2 * p2 * S2 + 4 * p3 * (R2 - S2) + p4 * C4 - p2 * p2 * A * A)
        )
        c = p * (1 - p) * self.sizes * self.inv_nm1
        cross = 0.5 * c @ self.F @ c
        return float(self.s**2 * (within.sum() + cross))

    def variance_grad(self, pi) -> np.ndarray:
        p = np.asarray(pi, dtype=float)
        n, (p1, p2, p3, p4), e, Se2, E, Ser = self._pieces(p)
        A, S2, R2, C4 = self.Atot, self.S2, self.Rsum2, self.C4
        m = self.memb
        # through e (the other clusters' proportions)
        gi = (
            2 * (p1 - p2)[m] * e
            + 2 * ((p2 - p1 * p1) * E)[m]
            + 2 * (p2 - p1 * p2)[m] * self.r
            + (p3 - p1 * p2)[m] * (A[m] - 2 * self.r)
        )
        own = np.bincount(m, weights=gi * self.r, minlength=self.M)
        grad = gi @ self.Dl - own
        # through the inclusion probabilities of the cluster itself
        d1 = Se2 - 2 * p1 * E * E - p2 * E * A
        d2 = -Se2 + E * E + 2 * Ser - p1 * E * A + 0.5 * S2 - 0.5 * p2 * A * A
        d3 = (E * A - 2 * Ser) + (R2 - S2)
        d4 = 0.25 * C4
        N_ = self.sizes
        dn = [falling_ratio_grad(n, N_, r) for r in (1, 2, 3, 4)]
        grad = grad + N_ * (d1 * dn[0] + d2 * dn[1] + d3 * dn[2] + d4 * dn[3])
        c = p * (1 - p) * N_ * self.inv_nm1
        dc = (1 - 2 * p) * N_ * self.inv_nm1
        grad = grad + dc * (self.F @ c)
        return self.s**2 * grad

    def variance_hess(self, pi) -> np.ndarray:
        p = np.asarray(pi, dtype=float)
        n, (p1, p2, p3, p4), e, Se2, E, Ser = self._pieces(p)
        A, S2, R2, C4 = self.Atot, self.S2, self.Rsum2, self.C4
        N_ = self.sizes
        d1n = [falling_ratio_grad(n, N_, r) for r in (1, 2, 3, 4)]
        d2n = [falling_ratio_hess(n, N_, r) for r in (1, 2, 3, 4)]
        q1, q2, q3, _ = d1n
        d1 = Se2 - 2 * p1 * E * E - p2 * E * A
        d2 = -Se2 + E * E + 2 * Ser - p1 * E * A + 0.5 * S2 - 0.5 * p2 * A * A
        d3 = (E * A - 2 * Ser) + (R2 - S2)
        d4 = 0.25 * C4
        M = self.M
        H = np.zeros((M, M))
        diag = N_**2 * (
            d1 * d2n[0] + d2 * d2n[1] + d3 * d2n[2] + d4 * d2n[3]
            - 2 * E * E * q1 * q1 - 2 * E * A * q1 * q2 - 0.5 * A * A * q2 * q2
        )
        for j in range(M):
            u = self.g.cluster_units(j)
            B = self.Dl[u].copy()
            B[:, j] = 0.0
            b1 = B.sum(axis=0)
            H += 2 * (p1[j] - p2[j]) * (B.T @ B) + 2 * (p2[j] - p1[j] ** 2) * np.outer(b1, b1)
            r = self.r[u]
            dg = N_[j] * (
                2 * (q1[j] - q2[j]) * e[u]
                + 2 * (q2[j] - 2 * p1[j] * q1[j]) * E[j]
                + 2 * (q2[j] - q1[j] * p2[j] - p1[j] * q2[j]) * r
                + (q3[j] - q1[j] * p2[j] - p1[j] * q2[j]) * (A[j] - 2 * r)
            )
            h = B.T @ dg
            H[j, :] += h
            H[:, j] += h
        H[np.diag_indices(M)] += diag
        k = N_ * self.inv_nm1
        c = p * (1 - p) * k
        dc = (1 - 2 * p) * k
        H += np.outer(dc, dc) * self.F
        H[np.diag_indices(M)] += -2 * k * (self.F @ c)
        return self.s**2 * H

    def expectation_hess(self) -> np.ndarray:
        return self.s * (self.Tjl + self.Tjl.T + 2 * np.diag(self.Tjj * self.inv_nm1))

    # ------------------------------------------------------------ mse
    def mse(self, pi) -> float:
        b = self.expectation(pi) - self.tte
        return b * b + self.variance(pi)

    def mse_grad(self, pi) -> np.ndarray:
        b = self.expectation(pi) - self.tte
        return 2 * b * self.expectation_grad(pi) + self.variance_grad(pi)

    def mse_hess(self, pi) -> np.ndarray:
        b = self.expectation(pi) - self.tte
        gb = self.expectation_grad(pi)
        return 2 * np.outer(gb, gb) + 2 * b * self.expectation_hess() + self.variance_hess(pi)


def _exact_pi(pi, g, tens):
    n = exact_counts(pi, g)
    resolve_nt(n, tens.n_t, g.N)
    return n / g.sizes


def cond_expectation_interference(tens: InterferenceTensors, pi, g: ClusteredGraph) -> float:
    p = _exact_pi(pi, g, tens)
    return ConditionalMoments(tens, g).expectation(p)


def cond_variance_interference(tens: InterferenceTensors, pi, g: ClusteredGraph) -> float:
    p = _exact_pi(pi, g, tens)
    return floor_variance(ConditionalMoments(tens, g).variance(p), "conditional variance")


@dataclass
class ConditionalMSE:
    value: float
    bias: float
    variance: float
    expectation: float
    tte: float


def cond_mse_interference(tens: InterferenceTensors, pi, g: ClusteredGraph) -> ConditionalMSE:
    p = _exact_pi(pi, g, tens)
    cm = ConditionalMoments(tens, g)
    ex = cm.expectation(p)
    var = floor_variance(cm.variance(p), "conditional variance")
    bias = ex - cm.tte
    return ConditionalMSE(bias * bias + var, bias, var, ex, cm.tte)


def cond_variance_interference_lemma(tens: InterferenceTensors, pi, g: ClusteredGraph) -> float:
    """Closed form that keeps only the leading within-cluster terms.

    Sum_j N_j pi_j (1-pi_j) S[G + U + (2 pi_j - 1)/(N_j - 2) r] plus the
    cross-interaction part, where G_i = sum_l pi_l D_i^(l) and r_i is the
    within-cluster row sum of D.  It drops terms of relative order 1/N_j and
    is kept as a reference next to the exact evaluation.
    """
    if np.any(g.sizes < 3):
        raise UnsupportedConfigurationError("needs every cluster to hold at least 3 units")
    p = _exact_pi(pi, g, tens)
    G = tens.Dl @ p
    r = tens.Dl[np.arange(g.N), g.membership]
    total = 0.0
    for j in range(g.M):
        u = g.cluster_units(j)
        Nj = u.size
        vec = G[u] + tens.U[u] + (2 * p[j] - 1) / (Nj - 2) * r[u]
        total += Nj * p[j] * (1 - p[j]) * svar(vec)
    D = tens.D.tocsr()
    for j in range(g.M):
        uj = g.cluster_units(j)
        for l in range(g.M):
            ul = g.cluster_units(l)
            w = g.sizes[j] * g.sizes[l] * p[j] * (1 - p[j]) * p[l] * (1 - p[l])
            if w == 0:
                continue
            block = D[uj][:, ul].toarray()
            total += 0.5 * w * cross_interaction(block)
    N = g.N
    return float(N * N / (tens.n_t**2 * tens.n_c**2) * total)


def perfect_clustering_objective(tens: InterferenceTensors, g: ClusteredGraph):
    """Conditional MSE, up to an additive constant, in the reduced form for graphs without cut edges.

    Drops the same 1/N_j terms as cond_variance_interference_lemma and the
    1/(N_j - 1) correction of the expectation.  Returns a callable of pi.
    """
    N, n_t, n_c = g.N, tens.n_t, tens.n_c
    mu = n_t / N
    K = N * N / (n_t**2 * n_c**2)
    gam = cluster_slices(tens.gamma, g)
    Wv = cluster_slices(tens.W, g)
    Hv = cluster_slices(tens.H, g)
    gtot = np.array([x.sum() for x in gam])
    Wtot = np.array([x.sum() for x in Wv])
    Wbar = tens.W.mean()
    lin = Wtot - g.sizes * Wbar - mu * gtot
    shift = n_t * n_c / N * tens.gamma_bar

    def f(pi) -> float:
        p = np.asarray(pi, dtype=float)
        b = np.sum(p * p * gtot) + np.sum(p * lin) - shift
        v = 0.0
        for j in range(g.M):
            v += g.sizes[j] * p[j] * (1 - p[j]) * svar(Wv[j] - mu * Hv[j] + p[j] * (gam[j] + Hv[j]))
        return float(K * (b * b + v))

    return f
