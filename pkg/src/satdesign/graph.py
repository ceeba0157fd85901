"""Clustered interference graphs, SBM sampling and cluster-level edge statistics."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import InvalidInputError
from .rng import stream


@dataclass(frozen=True)
class BlockMatrix:
    A: np.ndarray

    def __post_init__(self):
        A = np.asarray(self.A, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise InvalidInputError("block matrix must be square")
        if not np.allclose(A, A.T, atol=0, rtol=0):
            raise InvalidInputError("block matrix must be symmetric")
        if np.any(A < 0) or np.any(A > 1):
            raise InvalidInputError("block entries must lie in [0, 1]")
        object.__setattr__(self, "A", A)

    @classmethod
    def distance_decay(cls, M: int, scale: float = 2.0) -> "BlockMatrix":
        idx = np.arange(M)
        return cls(np.exp(-np.abs(idx[:, None] - idx[None, :]) / scale))


class ClusteredGraph:
    """Undirected simple graph with a partition of its units into clusters.

    The adjacency is kept as a symmetric CSR matrix with sorted column
    indices, so row ``i`` is the sorted neighbor list of unit ``i``.
    """

    def __init__(self, membership, adjacency: sp.spmatrix, M: int | None = None):
        membership = np.asarray(membership, dtype=np.int64)
        if membership.ndim != 1 or membership.size == 0:
            raise InvalidInputError("membership must be a non-empty vector")
        if membership.min() < 0:
            raise InvalidInputError("cluster ids must be non-negative")
        M = int(membership.max()) + 1 if M is None else int(M)
        if membership.max() >= M:
            raise InvalidInputError("cluster id out of range")
        N = membership.size
        adj = sp.csr_matrix(adjacency, dtype=np.float64)
        if adj.shape != (N, N):
            raise InvalidInputError("adjacency shape does not match membership")
        adj.data[:] = 1.0
        adj.eliminate_zeros()
        adj.sum_duplicates()
        adj.sort_indices()
        if adj.diagonal().any():
            raise InvalidInputError("self-loops are not allowed")
        if (adj != adj.T).nnz:
            raise InvalidInputError("adjacency must be symmetric")
        sizes = np.bincount(membership, minlength=M)
        if np.any(sizes < 1):
            raise InvalidInputError("every cluster needs at least one unit")
        self.N = N
        self.M = M
        self.membership = membership
        self.adj = adj
        self.sizes = sizes
        self.degree = np.diff(adj.indptr).astype(np.int64)
        self.equal_sizes = bool(np.all(sizes == sizes[0]))
        # units ordered by cluster, used for block slicing
        self.order = np.argsort(membership, kind="stable")
        self.offsets = np.concatenate([[0], np.cumsum(sizes)])
        self._onehot = sp.csr_matrix(
            (np.ones(N), (np.arange(N), membership)), shape=(N, M)
        )

    @classmethod
    def from_edges(cls, membership, edges: Sequence[tuple[int, int]] | np.ndarray, M: int | None = None):
        membership = np.asarray(membership, dtype=np.int64)
        N = membership.size
        e = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        if e.size and (e.min() < 0 or e.max() >= N):
            raise InvalidInputError("edge endpoint out of range")
        if np.any(e[:, 0] == e[:, 1]):
            raise InvalidInputError("self-loops are not allowed")
        rows = np.concatenate([e[:, 0], e[:, 1]])
        cols = np.concatenate([e[:, 1], e[:, 0]])
        adj = sp.csr_matrix((np.ones(rows.size), (rows, cols)), shape=(N, N))
        return cls(membership, adj, M)

    @classmethod
    def equal_clusters(cls, sizes: Sequence[int]) -> np.ndarray:
        return np.repeat(np.arange(len(sizes)), sizes)

    def neighbors(self, i: int) -> np.ndarray:
        return self.adj.indices[self.adj.indptr[i]:self.adj.indptr[i + 1]]

    def cluster_units(self, j: int) -> np.ndarray:
        return self.order[self.offsets[j]:self.offsets[j + 1]]

    def edges(self) -> np.ndarray:
        coo = sp.triu(self.adj, k=1).tocoo()
        e = np.column_stack([coo.row, coo.col]).astype(np.int64)
        return e[np.lexsort((e[:, 1], e[:, 0]))]

    @property
    def onehot(self) -> sp.csr_matrix:
        """N x M cluster indicator matrix."""
        return self._onehot

    def neighbor_cluster_counts(self) -> np.ndarray:
        """Dense N x M matrix of |N_i ∩ C_l|."""
        return np.asarray((self.adj @ self._onehot).todense())

    def intra_fraction(self) -> np.ndarray:
        counts = self.neighbor_cluster_counts()
        own = counts[np.arange(self.N), self.membership]
        out = np.zeros(self.N)
        nz = self.degree > 0
        out[nz] = own[nz] / self.degree[nz]
        return out

    def relabel_clusters(self, perm) -> "ClusteredGraph":
        """Return the same graph with cluster j renamed perm[j]."""
        perm = np.asarray(perm, dtype=np.int64)
        return ClusteredGraph(perm[self.membership], self.adj, self.M)


def sbm_generate(block: BlockMatrix, sizes: Sequence[int], seed: int) -> ClusteredGraph:
    A = block.A
    sizes = np.asarray(sizes, dtype=np.int64)
    M = sizes.size
    if A.shape != (M, M):
        raise InvalidInputError("block matrix does not match the number of clusters")
    membership = ClusteredGraph.equal_clusters(sizes)
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    rows, cols = [], []
    for j in range(M):
        for l in range(j, M):
            p = A[j, l]
            if p <= 0:
                continue
            rng = stream(seed, "sbm", j, l)
            nj, nl = sizes[j], sizes[l]
            if j == l:
                iu, ku = np.triu_indices(nj, k=1)
                hit = rng.random(iu.size) < p
                r, c = iu[hit], ku[hit]
            else:
                hit = rng.random((nj, nl)) < p
                r, c = np.nonzero(hit)
            rows.append(r + offsets[j])
            cols.append(c + offsets[l])
    if rows:
        r = np.concatenate(rows)
        c = np.concatenate(cols)
    else:
        r = c = np.zeros(0, dtype=np.int64)
    return ClusteredGraph.from_edges(membership, np.column_stack([r, c]), M)


@dataclass
class GraphStats:
    P: np.ndarray
    Q: np.ndarray
    q_defined: np.ndarray
    intra_fraction: np.ndarray
    rho_C: float
    edge_counts: np.ndarray


def cluster_edge_stats(g: ClusteredGraph) -> GraphStats:
    counts = g.neighbor_cluster_counts()
    # S[j, l] = sum over i in C_j of |N_i ∩ C_l|; intra edges appear twice on the diagonal
    S = np.asarray(g.onehot.T @ counts)
    n = g.sizes.astype(float)
    P = S / np.outer(n, n)
    edge_counts = S.copy()
    np.fill_diagonal(edge_counts, np.diag(S) / 2)
    rowsum = P.sum(axis=1)
    defined = rowsum > 0
    Q = np.full_like(P, np.nan)
    Q[defined] = P[defined] / rowsum[defined, None]
    frac = g.intra_fraction()
    return GraphStats(P, Q, defined, frac, float(frac.mean()), edge_counts)


def gamma_prime(g: ClusteredGraph, gamma) -> float:
    gamma = np.asarray(gamma, dtype=float)
    if gamma.shape != (g.N,):
        raise InvalidInputError("gamma must have one entry per unit")
    return float(np.mean(gamma * g.intra_fraction()))


@dataclass
class AssumptionReport:
    min_degree: int
    dense_threshold: float
    dense_ok: bool
    edge_prob_max_deviation: float
    edge_prob_ok: bool
    unconfoundedness_max_deviation: list[float] = field(default_factory=list)
    unconfoundedness_ok: list[bool] = field(default_factory=list)
    dense_probability: float | None = None
    edge_prob_probability: float | None = None
    unconfoundedness_probability: list[float | None] = field(default_factory=list)

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def _clip01(x: float) -> float:
    return float(min(1.0, max(0.0, x)))


def check_assumptions(
    g: ClusteredGraph,
    model=None,
    eps2: float = 0.0,
    eps3: float = 2.0,
    f: Callable | Sequence[Callable] | None = None,
    eps_f: float | Sequence[float] | None = None,
    block: BlockMatrix | None = None,
) -> AssumptionReport:
    """Evaluate the dense-connection, proxy-edge and unconfoundedness inequalities.

    The high-probability lower bounds for an SBM are attached when ``block`` is
    given (the dense bound needs the row sums of the block matrix).
    """
    if f is not None and model is None:
        raise InvalidInputError("a test function needs an outcome model")
    N, M = g.N, g.M
    logNM = math.log(N * M)
    min_deg = int(g.degree.min())
    thr = eps2 * N / M
    dense_ok = bool(min_deg >= thr)

    stats = cluster_edge_stats(g)
    counts = g.neighbor_cluster_counts()
    sizes = g.sizes.astype(float)
    frac = counts / sizes[None, :]
    p_unit = stats.P[g.membership]  # p_{j(i), l}
    radius = eps3 * np.sqrt(p_unit * logNM / sizes[None, :])
    dev = np.abs(frac - p_unit)
    edge_dev = float(dev.max())
    edge_ok = bool(np.all(dev <= radius + 1e-12))

    report = AssumptionReport(min_deg, thr, dense_ok, edge_dev, edge_ok)

    if f is not None:
        fs = list(f) if isinstance(f, (list, tuple)) else [f]
        if eps_f is None:
            raise InvalidInputError("eps_f is required with a test function")
        epss = list(eps_f) if isinstance(eps_f, (list, tuple)) else [eps_f] * len(fs)
        for fn, ef in zip(fs, epss):
            vals = np.asarray(fn(model.alpha, model.beta, model.gamma), dtype=float)
            fsum = np.asarray(g.adj @ sp.csr_matrix(g.onehot.multiply(vals[:, None])).toarray())
            fbar = np.asarray(g.onehot.T @ vals).ravel() / sizes
            d = np.abs(fsum / sizes[None, :] - counts / sizes[None, :] * fbar[None, :])
            bound = ef * np.sqrt(logNM / sizes)
            report.unconfoundedness_max_deviation.append(float(d.max()))
            report.unconfoundedness_ok.append(bool(np.all(d <= bound[None, :] + 1e-12)))
            fmax = float(np.max(np.abs(vals))) if vals.size else 0.0
            if fmax > 0 and ef > 2 * math.sqrt(3) * fmax:
                report.unconfoundedness_probability.append(
                    _clip01(1 - (N * M) ** (1 - ef**2 / (12 * fmax**2)))
                )
            else:
                report.unconfoundedness_probability.append(None)

    if block is not None:
        A_low = float(block.A.sum(axis=1).min())
        if 0 < eps2 < A_low:
            report.dense_probability = _clip01(1 - math.exp(-N * (A_low - eps2) ** 2 / (4 * M * A_low)))
    if eps3 > math.sqrt(3):
        report.edge_prob_probability = _clip01(1 - (N * M) ** (1 - eps3**2 / 3))
    return report


# ---------------------------------------------------------------- file I/O

def write_graph(g: ClusteredGraph, edges_path: Path, membership_path: Path) -> None:
    edges_path = Path(edges_path)
    membership_path = Path(membership_path)
    with edges_path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["u", "v"])
        for u, v in g.edges():
            w.writerow([int(u), int(v)])
    with membership_path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["unit", "cluster"])
        for i, c in enumerate(g.membership):
            w.writerow([i, int(c)])


def read_graph(edges_path: Path, membership_path: Path) -> ClusteredGraph:
    with Path(membership_path).open(newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    if not rows or set(rows[0]) != {"unit", "cluster"}:
        raise InvalidInputError("membership CSV needs columns unit,cluster")
    units = np.array([int(r["unit"]) for r in rows])
    clusters = np.array([int(r["cluster"]) for r in rows])
    membership = np.empty(units.size, dtype=np.int64)
    if sorted(units.tolist()) != list(range(units.size)):
        raise InvalidInputError("membership must list every unit 0..N-1 exactly once")
    membership[units] = clusters
    with Path(edges_path).open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or set(reader.fieldnames) != {"u", "v"}:
            raise InvalidInputError("edge CSV needs columns u,v")
        edges = [(int(r["u"]), int(r["v"])) for r in reader]
    return ClusteredGraph.from_edges(membership, np.array(edges, dtype=np.int64).reshape(-1, 2))
