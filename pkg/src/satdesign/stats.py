"""Statistical kernels used by every analytic formula.

Two conventions coexist on purpose: ``sample_cov`` divides by ``n - 1``
while ``central_moments`` divides by ``M``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, InvalidInputError


@dataclass(frozen=True)
class MomentSummary:
    mean: float
    mu2c: float
    mu3c: float
    mu4c: float

    def __post_init__(self):
        if self.mu2c < -1e-15 or self.mu4c < -1e-15:
            raise InvalidInputError("central moments of even order must be non-negative")
        if self.mu4c < self.mu2c**2 - 1e-12 * max(1.0, self.mu2c**2):
            raise InvalidInputError("fourth central moment below the squared variance")

    def as_dict(self) -> dict:
        return {"mean": self.mean, "mu2c": self.mu2c, "mu3c": self.mu3c, "mu4c": self.mu4c}


def _vec(x, name="x") -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if arr.ndim != 1:
        raise InvalidInputError(f"{name} must be one-dimensional")
    return arr


def sample_cov(a, b) -> float:
    a = _vec(a, "a")
    b = _vec(b, "b")
    if a.shape != b.shape:
        raise InvalidInputError("length mismatch")
    n = a.size
    if n < 2:
        raise InvalidInputError("sample covariance needs at least two entries")
    return float(np.sum((a - a.mean()) * (b - b.mean())) / (n - 1))


def sample_var(a) -> float:
    return sample_cov(a, a)


def central_moments(pi) -> MomentSummary:
    pi = _vec(pi, "pi")
    if pi.size == 0:
        raise InvalidInputError("empty proportion vector")
    if not np.all(np.isfinite(pi)):
        raise InvalidInputError("non-finite entries")
    mean = float(pi.mean())
    dev = pi - mean
    m2 = float(np.mean(dev**2))
    m3 = float(np.mean(dev**3))
    m4 = float(np.mean(dev**4))
    # guard against rounding pushing mu4c a hair below mu2c**2
    m4 = max(m4, m2 * m2)
    return MomentSummary(mean, m2, m3, m4)


def cross_interaction(X) -> float:
    """Double-centred sum of squares divided by ``(m-1)(n-1)``."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise InvalidInputError("expected a matrix")
    m, n = X.shape
    if m < 2 or n < 2:
        raise InvalidInputError("cross interaction needs at least a 2x2 matrix")
    R = X - X.mean(axis=1, keepdims=True) - X.mean(axis=0, keepdims=True) + X.mean()
    return float(np.sum(R * R) / ((m - 1) * (n - 1)))


def harmonic_mean(x) -> float:
    x = _vec(x, "x")
    if x.size == 0:
        raise InvalidInputError("empty vector")
    if np.any(x <= 0):
        raise DomainError("harmonic mean needs strictly positive entries")
    return float(1.0 / np.mean(1.0 / x))
