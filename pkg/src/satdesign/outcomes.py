"""Potential-outcome models and the interference tensors derived from them."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .errors import InvalidInputError, ModelMismatchError
from .graph import ClusteredGraph


@dataclass(frozen=True)
class OutcomeModel:
    """Linear interference model Y_i = alpha_i + beta_i Z_i + gamma_i * rho_i."""

    alpha: np.ndarray
    beta: np.ndarray
    gamma: np.ndarray

    def __post_init__(self):
        arrs = [np.asarray(v, dtype=float) for v in (self.alpha, self.beta, self.gamma)]
        if any(a.ndim != 1 for a in arrs) or len({a.size for a in arrs}) != 1:
            raise InvalidInputError("alpha, beta, gamma must be vectors of equal length")
        if not all(np.all(np.isfinite(a)) for a in arrs):
            raise InvalidInputError("outcome parameters must be finite")
        for name, a in zip(("alpha", "beta", "gamma"), arrs):
            a.setflags(write=False)
            object.__setattr__(self, name, a)

    @property
    def N(self) -> int:
        return self.alpha.size

    @classmethod
    def sutva(cls, Y1, Y0) -> "OutcomeModel":
        Y1 = np.asarray(Y1, dtype=float)
        Y0 = np.asarray(Y0, dtype=float)
        return cls(Y0, Y1 - Y0, np.zeros_like(Y0))


@dataclass(frozen=True)
class PotentialTable:
    Y1: np.ndarray
    Y0: np.ndarray

    def __post_init__(self):
        Y1 = np.asarray(self.Y1, dtype=float)
        Y0 = np.asarray(self.Y0, dtype=float)
        if Y1.shape != Y0.shape or Y1.ndim != 1:
            raise InvalidInputError("Y1 and Y0 must be vectors of equal length")
        if not (np.all(np.isfinite(Y1)) and np.all(np.isfinite(Y0))):
            raise InvalidInputError("potential outcomes must be finite")
        object.__setattr__(self, "Y1", Y1)
        object.__setattr__(self, "Y0", Y0)

    @property
    def N(self) -> int:
        return self.Y1.size


def _check(model: OutcomeModel, g: ClusteredGraph) -> None:
    if model.N != g.N:
        raise InvalidInputError("model and graph sizes differ")


def neighbor_weights(g: ClusteredGraph) -> sp.csr_matrix:
    """Row-normalised adjacency; rows of isolated units stay zero."""
    inv = np.zeros(g.N)
    nz = g.degree > 0
    inv[nz] = 1.0 / g.degree[nz]
    return sp.diags(inv) @ g.adj


def evaluate(model: OutcomeModel, g: ClusteredGraph, Z) -> np.ndarray:
    """Observed outcomes; ``Z`` may be a vector or a batch (R x N)."""
    _check(model, g)
    Z = np.asarray(Z, dtype=float)
    if Z.shape[-1] != g.N:
        raise InvalidInputError("assignment length does not match the graph")
    rho = (neighbor_weights(g) @ Z.T).T
    return model.alpha + model.beta * Z + model.gamma * rho


def tte(model: OutcomeModel) -> float:
    return float(model.beta.mean() + model.gamma.mean())


def sutva_table(model: OutcomeModel) -> PotentialTable:
    if np.any(model.gamma != 0):
        raise ModelMismatchError("model has interference; a SUTVA table would misrepresent it")
    return PotentialTable(model.alpha + model.beta, model.alpha.copy())


@dataclass(frozen=True)
class InterferenceTensors:
    n_t: int
    N: int
    M: int
    T: sp.csr_matrix
    D: sp.csr_matrix
    Dl: np.ndarray
    Djl: np.ndarray
    Tjl: np.ndarray
    H: np.ndarray
    W: np.ndarray
    U: np.ndarray
    alpha_bar: float
    beta_bar: float
    gamma_bar: float
    gamma: np.ndarray

    @property
    def n_c(self) -> int:
        return self.N - self.n_t


def interference_tensors(model: OutcomeModel, g: ClusteredGraph, n_t: int) -> InterferenceTensors:
    _check(model, g)
    N = g.N
    if not (0 < n_t < N):
        raise InvalidInputError("n_t must satisfy 0 < n_t < N")
    n_c = N - n_t
    T = sp.csr_matrix(sp.diags(model.gamma) @ neighbor_weights(g))
    D = sp.csr_matrix(T + T.T)
    Dl = np.asarray((D @ g.onehot).todense())
    Djl = np.asarray(g.onehot.T @ Dl)
    Tjl = np.asarray(g.onehot.T @ np.asarray((T @ g.onehot).todense()))
    H = np.asarray(T.sum(axis=0)).ravel()
    W = model.alpha + (n_c / N) * model.beta
    U = W - (n_t / N) * H
    return InterferenceTensors(
        n_t=int(n_t), N=N, M=g.M, T=T, D=D, Dl=Dl, Djl=Djl, Tjl=Tjl, H=H, W=W, U=U,
        alpha_bar=float(model.alpha.mean()), beta_bar=float(model.beta.mean()),
        gamma_bar=float(model.gamma.mean()), gamma=model.gamma,
    )


# ---------------------------------------------------------------- generation / I/O

def center_within_clusters(x, g: ClusteredGraph) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    means = np.bincount(g.membership, weights=x, minlength=g.M) / g.sizes
    return x - means[g.membership]


def write_outcomes(model: OutcomeModel, path: Path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["unit", "alpha", "beta", "gamma"])
        for i in range(model.N):
            w.writerow([i, repr(float(model.alpha[i])), repr(float(model.beta[i])), repr(float(model.gamma[i]))])


def read_outcomes(path: Path) -> OutcomeModel:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or set(reader.fieldnames) != {"unit", "alpha", "beta", "gamma"}:
            raise InvalidInputError("outcome CSV needs columns unit,alpha,beta,gamma")
        rows = list(reader)
    n = len(rows)
    a, b, c = np.zeros(n), np.zeros(n), np.zeros(n)
    seen = np.zeros(n, dtype=bool)
    for r in rows:
        i = int(r["unit"])
        if not 0 <= i < n or seen[i]:
            raise InvalidInputError("unit ids must cover 0..N-1 exactly once")
        seen[i] = True
        a[i], b[i], c[i] = float(r["alpha"]), float(r["beta"]), float(r["gamma"])
    return OutcomeModel(a, b, c)
