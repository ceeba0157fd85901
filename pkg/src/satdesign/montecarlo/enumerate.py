"""Exhaustive enumeration of every assignment a design can produce.

This is the reference against which all exact closed forms are checked.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from ..designs import Distribution, Mode, as_pi, treated_counts
from ..errors import InvalidInputError, TooLargeError
from ..estimators import diff_in_means_batch, stratified_batch
from ..graph import ClusteredGraph
from ..outcomes import OutcomeModel, evaluate, tte

CHUNK = 1 << 15


@dataclass
class ExactMoments:
    mean: float
    variance: float
    mse: float
    tte: float
    count: int
    weight_excluded: float = 0.0

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def distinct_permutations(values) -> list[tuple]:
    """Distinct orderings of a multiset, in lexicographic order."""
    a = sorted(values)
    out = [tuple(a)]
    n = len(a)
    while True:
        i = n - 2
        while i >= 0 and a[i] >= a[i + 1]:
            i -= 1
        if i < 0:
            return out
        k = n - 1
        while a[k] <= a[i]:
            k -= 1
        a[i], a[k] = a[k], a[i]
        a[i + 1:] = reversed(a[i + 1:])
        out.append(tuple(a))


def _assignment_count(counts, sizes) -> int:
    return math.prod(math.comb(int(s), int(c)) for s, c in zip(sizes, counts))


class _Accumulator:
    """Weighted first and second moments with a shift for stability."""

    def __init__(self):
        self.shift = None
        self.w = 0.0
        self.s1 = 0.0
        self.s2 = 0.0

    def add(self, values: np.ndarray, weight: float) -> None:
        if values.size == 0:
            return
        if self.shift is None:
            self.shift = float(values[0])
        d = values - self.shift
        self.w += weight * values.size
        self.s1 += weight * math.fsum(d)
        self.s2 += weight * math.fsum(d * d)

    def result(self):
        m = self.s1 / self.w
        return self.shift + m, max(self.s2 / self.w - m * m, 0.0)


def _conditional_pass(counts, model, g, estimator, weights, acc, weight, Y_shift=None):
    """Feed every assignment with the given per-cluster counts into acc.

    Returns (visited, degenerate) counts.
    """
    combos = []
    for j in range(g.M):
        units = g.cluster_units(j)
        nj = int(counts[j])
        rows = list(itertools.combinations(range(units.size), nj))
        mat = np.zeros((len(rows), units.size), dtype=np.int8)
        for r, c in enumerate(rows):
            mat[r, list(c)] = 1
        combos.append((units, mat))
    sizes = [m.shape[0] for _, m in combos]
    total = math.prod(sizes)
    strides = np.cumprod([1] + sizes[:-1])
    visited = 0
    bad = 0
    for start in range(0, total, CHUNK):
        k = np.arange(start, min(total, start + CHUNK))
        Z = np.zeros((k.size, g.N), dtype=np.int8)
        for j, (units, mat) in enumerate(combos):
            idx = (k // strides[j]) % sizes[j]
            Z[:, units] = mat[idx]
        Y = evaluate(model, g, Z)
        if estimator == "dim":
            est, ok = diff_in_means_batch(Y, Z)
        else:
            est, ok = stratified_batch(Y, Z, g, weights)
        visited += k.size
        bad += int((~ok).sum())
        acc.add(est[ok], weight)
    return visited, bad


def enumerate_exact(
    pi,
    model: OutcomeModel,
    g: ClusteredGraph,
    mode: Mode | str = Mode.DETERMINISTIC,
    estimator: str = "dim",
    weights=None,
    limit: int = 10**7,
    distribution: Distribution | None = None,
) -> ExactMoments:
    """Exact mean, variance and MSE of the estimator over the design.

    ``mode`` selects deterministic, permutation (all distinct orderings of pi,
    equally likely) or independent (i.i.d. draws from a finite-support
    ``distribution``; pi is then ignored). Draws on which the estimator is
    undefined are excluded and the remaining mass renormalised.
    """
    mode = Mode(mode)
    if estimator not in ("dim", "stratified"):
        raise InvalidInputError("estimator must be 'dim' or 'stratified'")
    sizes = g.sizes
    if mode is Mode.INDEPENDENT:
        if distribution is None:
            raise InvalidInputError("independent mode needs a distribution")
        vals, probs = distribution.support()
        cases = []
        for combo in itertools.product(range(vals.size), repeat=g.M):
            p = vals[list(combo)]
            cases.append((p, float(np.prod(probs[list(combo)]))))
    elif mode is Mode.PERMUTATION:
        perms = distinct_permutations(as_pi(pi).tolist())
        cases = [(np.array(p), 1.0 / len(perms)) for p in perms]
    else:
        cases = [(as_pi(pi), 1.0)]

    total = sum(_assignment_count(treated_counts(p, sizes), sizes) for p, _ in cases)
    if total > limit:
        raise TooLargeError(f"enumeration would visit {total} assignments (limit {limit})", total)

    # each case carries probability w spread uniformly over its assignments
    acc = _Accumulator()
    visited = 0
    excluded = 0.0
    for p, w in cases:
        counts = treated_counts(p, sizes)
        n = _assignment_count(counts, sizes)
        v, bad = _conditional_pass(counts, model, g, estimator, weights, acc, w / n)
        visited += v
        excluded += w * bad / n
        if v != n:
            raise AssertionError("enumeration visit count mismatch")
    if acc.w == 0:
        raise InvalidInputError("every enumerated assignment is degenerate")
    mean, var = acc.result()
    t = tte(model)
    return ExactMoments(mean, var, var + (mean - t) ** 2, t, visited, excluded)
