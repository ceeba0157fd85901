"""Marginal (permutation-averaged) bias and variance under interference."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..designs import as_pi
from ..errors import InvalidInputError
from ..graph import ClusteredGraph, gamma_prime
from ..outcomes import InterferenceTensors, OutcomeModel
from ..rng import stream
from ..stats import MomentSummary, central_moments
from ._common import exact_counts, require_equal_sizes
from .interference import ConditionalMoments
from .sutva import Regime


@dataclass
class MarginalBias:
    expectation: float
    bias: float
    gamma_prime: float


def marginal_bias_interference(g: ClusteredGraph, model: OutcomeModel, moments: MomentSummary, n_t: int) -> MarginalBias:
    """Leading-order expectation beta_bar + N^2/(n_t n_c) (gamma' - (gamma_bar - gamma')/(M-1)) mu2c."""
    require_equal_sizes(g)
    if g.M < 2:
        raise InvalidInputError("needs at least two clusters")
    N, M = g.N, g.M
    n_c = N - n_t
    gp = gamma_prime(g, model.gamma)
    gbar = float(model.gamma.mean())
    ex = float(model.beta.mean() + N * N / (n_t * n_c) * (gp - (gbar - gp) / (M - 1)) * moments.mu2c)
    return MarginalBias(ex, ex - (model.beta.mean() + gbar), gp)


@dataclass
class BiasRegime:
    regime: Regime
    gamma_prime: float
    threshold: float
    minimized_bias: float


def bias_regime(g: ClusteredGraph, gamma, rel_tol: float = 1e-12) -> BiasRegime:
    """Cluster-based when gamma' exceeds gamma_bar / M, stratified when below."""
    gamma = np.asarray(gamma, dtype=float)
    M = g.M
    gp = gamma_prime(g, gamma)
    gbar = float(gamma.mean())
    thr = gbar / M
    if abs(gp - thr) <= rel_tol * max(abs(gp), abs(thr), 1e-300):
        return BiasRegime(Regime.INDIFFERENT, gp, thr, gbar)
    if gp > thr:
        b = M / (M - 1) * (gbar - gp) if M > 1 else gbar - gp
        return BiasRegime(Regime.CLUSTER_BASED, gp, thr, float(b))
    return BiasRegime(Regime.STRATIFIED, gp, thr, gbar)


def permutation_pair_moments(moments: MomentSummary, M: int):
    """E[pi_j^2] and E[pi_j pi_l] (j != l) under a uniformly random permutation."""
    mu, v = moments.mean, moments.mu2c
    return mu * mu + v, mu * mu - v / (M - 1)


def marginal_expectation_exact(tens: InterferenceTensors, g: ClusteredGraph, moments: MomentSummary) -> float:
    """Permutation average of the exact conditional expectation (no asymptotic terms dropped)."""
    require_equal_sizes(g)
    M = g.M
    if M < 2:
        raise InvalidInputError("needs at least two clusters")
    cm = ConditionalMoments(tens, g)
    diag, off = permutation_pair_moments(moments, M)
    mu = moments.mean
    Tjl = cm.Tjl
    tr = np.trace(Tjl)
    q = mu * cm.Ucl.sum() + diag * tr + off * (Tjl.sum() - tr)
    q -= (mu - diag) * np.sum(cm.Tjj * cm.inv_nm1)
    return float(cm.const + cm.s * q)


@dataclass
class PermutationAverage:
    mean_expectation: float
    var_expectation: float
    mean_variance: float
    total_variance: float
    se_total: float
    se_mean_expectation: float
    count: int
    exact: bool


def permutation_average(
    tens: InterferenceTensors,
    g: ClusteredGraph,
    pi,
    n_perm: int = 5000,
    seed: int = 0,
    exact_max_m: int = 8,
) -> PermutationAverage:
    """Average exact conditional moments over permutations of pi.

    Every distinct ordering is visited when M <= exact_max_m, otherwise
    n_perm uniformly random permutations are drawn.
    """
    require_equal_sizes(g)
    p = as_pi(pi)
    exact_counts(p, g)
    cm = ConditionalMoments(tens, g)
    if g.M <= exact_max_m:
        from ..montecarlo.enumerate import distinct_permutations

        perms = [np.array(x) for x in distinct_permutations(p.tolist())]
        exact = True
    else:
        rng = stream(seed, "permutation-average")
        perms = [p[rng.permutation(g.M)] for _ in range(n_perm)]
        exact = False
    e = np.array([cm.expectation(x) for x in perms])
    v = np.array([cm.variance(x) for x in perms])
    R = e.size
    ebar = float(e.mean())
    var_e = float(np.mean((e - ebar) ** 2))
    vbar = float(v.mean())
    if exact or R < 2:
        se, se_e = 0.0, 0.0
    else:
        h = v + (e - ebar) ** 2 * R / (R - 1)
        var_e = var_e * R / (R - 1)
        se = float(h.std(ddof=1) / math.sqrt(R))
        se_e = float(e.std(ddof=1) / math.sqrt(R))
    return PermutationAverage(ebar, var_e, vbar, vbar + var_e, se, se_e, R, exact)


def moments_of(pi) -> MomentSummary:
    return central_moments(as_pi(pi))
