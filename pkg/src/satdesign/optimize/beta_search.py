"""Search over quantile-discretised symmetric Beta(lam, lam) proportion vectors."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

from ..analytics.coefficients import VarianceCoefficients, variance_from_moments
from ..designs import beta_quantile_pi
from ..stats import central_moments

DEFAULT_GRID = tuple(
    [round(0.02 * k, 2) for k in range(21)] + [0.6, 0.8, 1.0, 1.5, 2.0, 5.0, math.inf]
)


@dataclass
class BetaSearchResult:
    lambda_star: float
    objective_star: float
    curve: list = field(default_factory=list)  # (lambda, objective) pairs, grid order

    def as_dict(self) -> dict:
        enc = lambda x: "inf" if math.isinf(x) else x
        return {
            "lambda_star": enc(self.lambda_star),
            "objective_star": self.objective_star,
            "curve": [[enc(l), v] for l, v in self.curve],
        }


def beta_objective(V: VarianceCoefficients, M: int, lam: float) -> float:
    return variance_from_moments(V, central_moments(beta_quantile_pi(lam, M).pi))


def _golden(f, a: float, b: float, tol: float):
    inv = (math.sqrt(5) - 1) / 2
    c, d = b - inv * (b - a), a + inv * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - inv * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + inv * (b - a)
            fd = f(d)
    x = 0.5 * (a + b)
    return x, f(x)


def beta_shape_search(V: VarianceCoefficients, M: int, grid=DEFAULT_GRID, refine: bool = True,
                      tol: float = 1e-4) -> BetaSearchResult:
    grid = sorted(set(float(x) for x in grid))
    curve = [(lam, beta_objective(V, M, lam)) for lam in grid]
    vals = [v for _, v in curve]
    best = min(range(len(grid)), key=lambda k: (vals[k], k))
    lam_star, f_star = curve[best]
    if refine and 0 < best < len(grid) - 1 and not math.isinf(grid[best + 1]):
        x, fx = _golden(lambda l: beta_objective(V, M, l), grid[best - 1], grid[best + 1], tol)
        if fx < f_star:
            lam_star, f_star = x, fx
    return BetaSearchResult(lam_star, f_star, curve)
