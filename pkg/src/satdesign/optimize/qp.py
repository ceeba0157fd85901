"""Multi-start local minimisation over {pi in [0,1]^M : sum(pi) = M * mean}.

The objectives of interest are indefinite quadratics (SUTVA conditional MSE)
and quartics (conditional MSE under linear interference), so the solver only
promises a good local minimum.  Each descent alternates two kinds of moves:

* a step on the current face (coordinates strictly inside the box), along the
  Newton direction when the reduced Hessian is positive definite and along the
  most negative curvature direction otherwise;
* a pairwise exchange e_i - e_k between the most violating coordinates, which
  releases coordinates from the bounds when the first-order conditions fail.

Every move uses an exact one-dimensional minimisation: along any line a degree
d polynomial objective is itself a degree d polynomial in the step length.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from numpy.polynomial import Polynomial
from scipy.linalg import null_space

from ..errors import InvalidInputError
from ..rng import stream

log = logging.getLogger(__name__)

BOUND_EPS = 1e-12


class QuadraticObjective:
    """f(pi) = pi' Q pi + c' pi + const."""

    degree = 2

    def __init__(self, Q, c, const: float = 0.0):
        Q = np.asarray(Q, dtype=float)
        if Q.ndim != 2 or Q.shape[0] != Q.shape[1]:
            raise InvalidInputError("Q must be square")
        if not np.allclose(Q, Q.T, rtol=1e-10, atol=1e-14 * max(1.0, np.abs(Q).max())):
            raise InvalidInputError("Q must be symmetric")
        self.Q = 0.5 * (Q + Q.T)
        self.c = np.asarray(c, dtype=float)
        if self.c.shape != (Q.shape[0],):
            raise InvalidInputError("c must match Q")
        self.const = float(const)

    @classmethod
    def from_form(cls, form) -> "QuadraticObjective":
        return cls(form.Q, form.c, getattr(form, "const", 0.0))

    def value(self, x) -> float:
        return float(x @ self.Q @ x + self.c @ x + self.const)

    def grad(self, x) -> np.ndarray:
        return 2 * self.Q @ x + self.c

    def hess(self, x) -> np.ndarray:
        return 2 * self.Q

    def line(self, x, d, lo, hi) -> Polynomial:
        return Polynomial([self.value(x), self.grad(x) @ d, d @ self.Q @ d])


class SmoothObjective:
    """Objective given by callables; restrictions to lines are fitted exactly
    when the objective is a polynomial of at most `degree`."""

    def __init__(self, value, grad, hess, degree: int = 4):
        self._value, self._grad, self._hess = value, grad, hess
        self.degree = degree

    def value(self, x) -> float:
        return float(self._value(x))

    def grad(self, x) -> np.ndarray:
        return np.asarray(self._grad(x), dtype=float)

    def hess(self, x) -> np.ndarray:
        return np.asarray(self._hess(x), dtype=float)

    def line(self, x, d, lo, hi) -> Polynomial:
        ts = np.linspace(lo, hi, self.degree + 1)
        ys = [self.value(x + t * d) for t in ts]
        return Polynomial.fit(ts, ys, self.degree, domain=[lo, hi]).convert()


def _argmin_poly(p: Polynomial, lo: float, hi: float) -> float:
    cands = [lo, hi, 0.0] if lo <= 0.0 <= hi else [lo, hi]
    if p.degree() >= 2:
        for r in p.deriv().roots():
            if abs(r.imag) <= 1e-12 * max(1.0, abs(r.real)) and lo < r.real < hi:
                cands.append(float(r.real))
    vals = [p(t) for t in cands]
    best = min(vals)
    # prefer the shortest step among (near) ties
    tol = 1e-15 * max(1.0, abs(best))
    return min((abs(t), t) for t, v in zip(cands, vals) if v <= best + tol)[1]


def _step_bounds(x, d):
    pos, neg = math.inf, math.inf
    up, dn = d > 0, d < 0
    if up.any():
        pos = min(pos, float(np.min((1 - x[up]) / d[up])))
        neg = min(neg, float(np.min(x[up] / d[up])))
    if dn.any():
        pos = min(pos, float(np.min(x[dn] / -d[dn])))
        neg = min(neg, float(np.min((1 - x[dn]) / -d[dn])))
    return max(neg, 0.0), max(pos, 0.0)


@lru_cache(maxsize=256)
def _face_basis(n: int) -> np.ndarray:
    return null_space(np.ones((1, n)))


def _line_move(obj, x, f, d):
    neg, pos = _step_bounds(x, d)
    if pos + neg <= 1e-15:
        return False, x, f
    t = _argmin_poly(obj.line(x, d, -neg, pos), -neg, pos)
    if t == 0.0:
        return False, x, f
    y = x + t * d
    # land exactly on the bound that limited the step
    if t == pos or t == -neg:
        hit = np.abs(y) <= 1e-12
        y[hit] = 0.0
        top = np.abs(1 - y) <= 1e-12
        y[top] = 1.0
    y = np.clip(y, 0.0, 1.0)
    fy = obj.value(y)
    if fy < f - 1e-15 * abs(f):
        return True, y, fy
    return False, x, f


def _face_direction(obj, x, g, free):
    H = obj.hess(x)[np.ix_(free, free)]
    Z = _face_basis(free.size)
    Hr = Z.T @ H @ Z
    gr = Z.T @ g[free]
    w, V = np.linalg.eigh(0.5 * (Hr + Hr.T))
    scale = max(float(np.abs(w).max()), 1e-300)
    if w[0] < -1e-9 * scale:
        dz = V[:, 0]
    else:
        if not np.any(gr):
            return None
        dz = -V @ ((V.T @ gr) / np.maximum(w, 1e-12 * scale))
    d = np.zeros_like(x)
    d[free] = Z @ dz
    return d


def local_descent(obj, x0, max_iter: int | None = None, kkt_tol: float = 1e-10):
    """Descend from a feasible x0.  Returns (x, f, iterations)."""
    x = np.array(x0, dtype=float)
    M = x.size
    f = obj.value(x)
    max_iter = max_iter or (200 + 40 * M)
    it = 0
    for it in range(1, max_iter + 1):
        g = obj.grad(x)
        moved = False
        free = np.flatnonzero((x > BOUND_EPS) & (x < 1 - BOUND_EPS))
        if free.size >= 2:
            d = _face_direction(obj, x, g, free)
            if d is not None:
                moved, x, f = _line_move(obj, x, f, d)
        if moved:
            continue
        up = np.flatnonzero(x < 1 - BOUND_EPS)
        dn = np.flatnonzero(x > BOUND_EPS)
        if up.size == 0 or dn.size == 0:
            break
        i = up[np.argmin(g[up])]
        k = dn[np.argmax(g[dn])]
        scale = float(np.abs(g).max()) + 1e-300
        if i == k or g[k] - g[i] <= kkt_tol * scale:
            # first order holds; a pair of distinct candidates may still differ
            if i == k:
                up2 = up[up != k]
                dn2 = dn[dn != i]
                if up2.size == 0 or dn2.size == 0:
                    break
                i2, k2 = up2[np.argmin(g[up2])], dn2[np.argmax(g[dn2])]
                if g[k] - g[i2] > g[k2] - g[i]:
                    i = i2
                else:
                    k = k2
                if g[k] - g[i] <= kkt_tol * scale:
                    break
            else:
                break
        d = np.zeros(M)
        d[i], d[k] = 1.0, -1.0
        moved, x, f = _line_move(obj, x, f, d)
        if not moved:
            break
    return x, f, it


# ---------------------------------------------------------------- snapping


def _repair_sum(x, total):
    """Project onto {sum = total} within the box by shifting free coordinates."""
    for _ in range(3):
        gap = total - x.sum()
        if abs(gap) <= 1e-13:
            break
        room = (1 - x) if gap > 0 else x
        avail = room.sum()
        if avail <= 0:
            break
        x = x + gap * room / avail
        x = np.clip(x, 0.0, 1.0)
    return x


def snap_counts(pi, sizes, n_t: int) -> np.ndarray:
    """Integer counts n_j near pi_j N_j with sum n_t."""
    sizes = np.asarray(sizes, dtype=np.int64)
    raw = np.asarray(pi, dtype=float) * sizes
    n = np.clip(np.round(raw), 0, sizes).astype(np.int64)
    gap = int(n_t - n.sum())
    resid = raw - n
    while gap != 0:
        if gap > 0:
            cand = np.flatnonzero(n < sizes)
            j = cand[np.argmax(resid[cand])]
            n[j] += 1
            resid[j] -= 1
            gap -= 1
        else:
            cand = np.flatnonzero(n > 0)
            j = cand[np.argmin(resid[cand])]
            n[j] -= 1
            resid[j] += 1
            gap += 1
    return n


def discrete_descent(obj, n, sizes, max_iter: int = 10000, screen: int = 12):
    """Best-improvement search over single-unit transfers between clusters.

    Quadratic objectives are scanned exactly; others are screened with the
    local quadratic model and the `screen` most promising moves are evaluated.
    """
    sizes = np.asarray(sizes, dtype=float)
    n = np.array(n, dtype=np.int64)
    x = n / sizes
    f = obj.value(x)
    step = 1.0 / sizes
    exact_quadratic = isinstance(obj, QuadraticObjective)
    for _ in range(max_iter):
        g = obj.grad(x)
        H = obj.hess(x)
        a = g * step
        hd = np.diag(H) * step * step
        # delta for (i += 1, k -= 1) in the quadratic model
        pred = a[:, None] - a[None, :] + 0.5 * (hd[:, None] + hd[None, :]) - H * np.outer(step, step)
        ok = (n < sizes)[:, None] & (n > 0)[None, :]
        np.fill_diagonal(ok, False)
        pred = np.where(ok, pred, np.inf)
        if exact_quadratic:
            flat = int(np.argmin(pred))
            if not pred.flat[flat] < -1e-15 * max(abs(f), 1e-300):
                break
            i, k = divmod(flat, n.size)
            n[i] += 1
            n[k] -= 1
            x = n / sizes
            f = obj.value(x)
            continue
        order = np.argsort(pred, axis=None, kind="stable")[:screen]
        best = (f, None)
        for flat in order:
            if not np.isfinite(pred.flat[flat]):
                break
            i, k = divmod(int(flat), n.size)
            y = x.copy()
            y[i] += step[i]
            y[k] -= step[k]
            fy = obj.value(y)
            if fy < best[0] - 1e-15 * abs(best[0]):
                best = (fy, (i, k))
        if best[1] is None:
            break
        i, k = best[1]
        n[i] += 1
        n[k] -= 1
        x = n / sizes
        f = best[0]
    return n, f


# ---------------------------------------------------------------- driver


@dataclass
class QpResult:
    pi_hat: np.ndarray
    objective: float
    starts_tried: int
    dominated_baselines: dict
    baseline_objectives: dict
    best_start: int
    local_objectives: list = field(default_factory=list)
    pi_snapped: np.ndarray | None = None
    objective_snapped: float | None = None
    counts_snapped: np.ndarray | None = None

    def as_dict(self) -> dict:
        out = {
            "pi_hat": [float(v) for v in self.pi_hat],
            "objective": self.objective,
            "starts_tried": self.starts_tried,
            "best_start": self.best_start,
            "dominated_baselines": dict(self.dominated_baselines),
            "baseline_objectives": dict(self.baseline_objectives),
        }
        if self.pi_snapped is not None:
            out["pi_snapped"] = [float(v) for v in self.pi_snapped]
            out["objective_snapped"] = self.objective_snapped
            out["counts_snapped"] = [int(v) for v in self.counts_snapped]
        return out


def _vertex_starts(M: int, total: float, cap: int, rng) -> list:
    k = int(math.floor(total + 1e-12))
    frac = total - k
    if k >= M:
        return [np.ones(M)]

    def vertex(ones):
        v = np.zeros(M)
        v[list(ones)] = 1.0
        if frac > 1e-12:
            rest = [j for j in range(M) if j not in set(ones)]
            v[rest[0]] = frac
        return v

    count = math.comb(M, k)
    if count <= cap:
        from itertools import combinations

        return [vertex(c) for c in combinations(range(M - 1, -1, -1), k)]
    seen, out = set(), []
    # canonical cluster-based vertex first, then seeded random ones
    first = tuple(range(M - k, M))
    seen.add(first)
    out.append(vertex(first))
    while len(out) < cap:
        c = tuple(sorted(rng.choice(M, size=k, replace=False).tolist()))
        if c not in seen:
            seen.add(c)
            out.append(vertex(c))
    return out


def _random_start(M: int, total: float, rng) -> np.ndarray:
    x = rng.uniform(0.0, 1.0, size=M)
    return _repair_sum(x, total)


def deterministic_qp(
    objective,
    M: int,
    mean: float,
    *,
    sizes=None,
    n_t: int | None = None,
    seed: int = 0,
    vertex_cap: int = 64,
    extra_random: int = 4,
    threads: int = 1,
    discrete_refine: int | None = None,
) -> QpResult:
    """Minimise `objective` over {pi in [0,1]^M : sum pi = M * mean}.

    `objective` is a QuadraticObjective, a SmoothObjective or anything with
    Q and c attributes.  When `sizes` is given the best local solutions are
    snapped to integer-consistent counts and refined by unit transfers.
    """
    if not isinstance(objective, (QuadraticObjective, SmoothObjective)):
        objective = QuadraticObjective.from_form(objective)
    total = M * mean
    if not (0 <= mean <= 1) or not math.isfinite(total):
        raise InvalidInputError("infeasible mean")
    rng = stream(seed, "qp-starts")
    strat = np.full(M, float(mean))
    verts = _vertex_starts(M, total, vertex_cap, rng)
    n_random = max(0, M + 2 - 1 - len(verts)) + extra_random
    starts = [strat] + verts + [_random_start(M, total, rng) for _ in range(n_random)]

    base_strat = objective.value(strat)
    base_vert = min(objective.value(v) for v in verts)

    def run(x0):
        return local_descent(objective, x0)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            results = list(ex.map(run, starts))
    else:
        results = [run(s) for s in starts]
    vals = [r[1] for r in results]
    best = int(np.argmin(vals))  # first index among ties
    x = results[best][0]
    fx = vals[best]
    res = QpResult(
        pi_hat=x,
        objective=fx,
        starts_tried=len(starts),
        dominated_baselines={
            "stratified": bool(fx <= base_strat + 1e-12 * max(1.0, abs(base_strat))),
            "cluster_based": bool(fx <= base_vert + 1e-12 * max(1.0, abs(base_vert))),
        },
        baseline_objectives={"stratified": base_strat, "cluster_based": base_vert},
        best_start=best,
        local_objectives=vals,
    )
    if sizes is not None:
        sizes = np.asarray(sizes, dtype=np.int64)
        if n_t is None:
            n_t = int(round(float(np.dot(np.full(M, mean), sizes))))
        order = np.argsort(vals, kind="stable")
        k = len(order) if discrete_refine is None and M <= 8 else (discrete_refine or 3)
        best_snap = None
        seen = set()
        for idx in order[:k]:
            n0 = snap_counts(results[idx][0], sizes, n_t)
            key = tuple(n0.tolist())
            if key in seen:
                continue
            seen.add(key)
            n, fn = discrete_descent(objective, n0, sizes)
            if best_snap is None or fn < best_snap[1]:
                best_snap = (n, fn)
        res.counts_snapped = best_snap[0]
        res.pi_snapped = best_snap[0] / sizes
        res.objective_snapped = objective.value(res.pi_snapped)
    return res
