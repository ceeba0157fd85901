"""Closed-form optimum of the moment polynomial over symmetric proportion vectors.

A symmetric vector with mean m <= 1/2 is described by squared displacements
y_j = (pi_j - m)^2 in [0, m^2].  Its moments are mu2c = mean(y), mu3c = 0 and
mu4c - mu2c^2 = Var(y), so the objective

    V0 + V1 mu2c + V2 mu2c^2 + V4 (mu4c - mu2c^2)

depends on y only through (mu2c, v = Var(y)).  For fixed mu2c, v ranges over
[0, m^2 mu2c - mu2c^2]: v = 0 is a two-point design (all y equal) and the
upper end is a three-point design (y in {0, m^2}).
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from ..analytics.coefficients import VarianceCoefficients, variance_from_moments
from ..designs import ProportionVector, symmetric_three_point_pi, symmetric_two_point_pi
from ..errors import InvalidInputError
from ..stats import central_moments


class Case(str, enum.Enum):
    TWO_POINT = "TwoPoint"
    THREE_POINT = "ThreePoint"


@dataclass(frozen=True)
class Bounds:
    lo: float
    hi: float


def variance_bound_pi(mean: float) -> Bounds:
    if not 0 <= mean <= 1:
        raise InvalidInputError("mean must lie in [0, 1]")
    return Bounds(0.0, mean * (1 - mean))


def fourth_moment_bound(mu2c: float, mean: float) -> Bounds:
    """Range of mu4c - mu2c^2 over symmetric vectors with the given mu2c.

    Squared displacements live in [0, mean^2]; the variance of a variable on
    that interval with mean mu2c is at most mean^2 * mu2c - mu2c^2.
    """
    if mean > 0.5 + 1e-12 or mean < 0:
        raise InvalidInputError("mean must lie in [0, 1/2]")
    if mu2c < -1e-15 or mu2c > mean * mean * (1 + 1e-12) + 1e-15:
        raise InvalidInputError("mu2c must lie in [0, mean^2]")
    return Bounds(0.0, max(0.0, mean * mean * mu2c - mu2c * mu2c))


@dataclass(frozen=True)
class SymmetricOptimum:
    pi_star: ProportionVector
    d: float
    case: Case
    objective_value: float
    continuous_objective: float
    fraction_at_extremes: float
    mirrored: bool

    def as_dict(self) -> dict:
        return {
            "pi_star": [float(v) for v in self.pi_star.pi],
            "d": self.d,
            "case": self.case.value,
            "objective_value": self.objective_value,
            "continuous_objective": self.continuous_objective,
            "fraction_at_extremes": self.fraction_at_extremes,
            "mirrored": self.mirrored,
        }


def family_objective(V: VarianceCoefficients, mean: float, mu2c: float, v4: float) -> float:
    """Objective at moments (mu2c, mu3c = 0, mu4c - mu2c^2 = v4)."""
    return float(V.V0 + V.V1 * mu2c + V.V2 * mu2c**2 + V.V4 * v4)


def _argmin_quadratic(a: float, b: float, hi: float) -> float:
    """argmin of a*y + b*y^2 over [0, hi]; ties resolved toward smaller y."""
    cands = [0.0, hi]
    if b > 0:
        y = -a / (2 * b)
        if 0 < y < hi:
            cands.append(y)
    vals = [a * y + b * y * y for y in cands]
    best = min(vals)
    tol = 1e-15 * max(abs(a) * hi, abs(b) * hi * hi, 1e-300)
    return min(y for y, v in zip(cands, vals) if v <= best + tol)


def symmetric_family_optimum(V: VarianceCoefficients, mean: float, M: int) -> SymmetricOptimum:
    if not 0 <= mean <= 1:
        raise InvalidInputError("mean must lie in [0, 1]")
    mirrored = mean > 0.5
    m = 1 - mean if mirrored else mean
    hi = m * m
    if V.V4 >= 0:
        case = Case.TWO_POINT
        y = _argmin_quadratic(V.V1, V.V2, hi)
        v4 = 0.0
        frac = 0.0
    else:
        case = Case.THREE_POINT
        # v4 at its maximum m^2 y - y^2
        y = _argmin_quadratic(V.V1 + V.V4 * hi, V.V2 - V.V4, hi)
        v4 = max(0.0, hi * y - y * y)
        frac = y / hi if hi > 0 else 0.0
    d = math.sqrt(y)
    if case is Case.TWO_POINT:
        pi = symmetric_two_point_pi(M, m, min(d, m)).pi
    else:
        pi = symmetric_three_point_pi(M, m, frac).pi
    if mirrored:
        pi = (1.0 - pi)[::-1]
    pv = ProportionVector(np.array(pi))
    return SymmetricOptimum(
        pi_star=pv,
        d=d,
        case=case,
        objective_value=variance_from_moments(V, central_moments(pv.pi)),
        continuous_objective=family_objective(V, m, y, v4),
        fraction_at_extremes=frac,
        mirrored=mirrored,
    )
