"""Graphs, outcome models and designs built from configuration sections."""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .config import as_float
from .designs import (
    DesignSpec,
    Distribution,
    ProportionVector,
    beta_quantile_pi,
    cluster_based_pi,
    stratified_pi,
    symmetric_three_point_pi,
    symmetric_two_point_pi,
)
from .errors import InvalidInputError, SchemaError
from .graph import BlockMatrix, ClusteredGraph, read_graph, sbm_generate
from .outcomes import OutcomeModel, center_within_clusters, read_outcomes
from .rng import stream


def derived_seed(seed: int, *labels) -> int:
    """A 63-bit integer seed keyed by (seed, labels)."""
    return int(stream(seed, *labels).integers(0, 2**63 - 1))


def cluster_sizes(gcfg: dict) -> np.ndarray:
    if "sizes" in gcfg:
        return np.asarray(gcfg["sizes"], dtype=np.int64)
    if "clusters" in gcfg and "cluster_size" in gcfg:
        return np.full(int(gcfg["clusters"]), int(gcfg["cluster_size"]), dtype=np.int64)
    raise SchemaError("graph needs sizes or clusters + cluster_size")


def block_matrix(bcfg: dict, M: int) -> BlockMatrix:
    kind = bcfg["kind"]
    if kind == "distance_decay":
        return BlockMatrix.distance_decay(M, float(bcfg.get("scale", 2.0)))
    if kind == "diagonal":
        A = np.full((M, M), float(bcfg.get("p_out", 0.0)))
        np.fill_diagonal(A, float(bcfg.get("p_in", 0.0)))
        return BlockMatrix(A)
    if kind == "matrix":
        A = np.asarray(bcfg["A"], dtype=float)
        if A.shape != (M, M):
            raise SchemaError("block matrix does not match the number of clusters")
        return BlockMatrix(A)
    raise SchemaError(f"unknown block kind {kind!r}")


def build_graph(gcfg: dict, seed: int, base_dir: Path | None = None) -> ClusteredGraph:
    if gcfg["source"] == "files":
        base = Path(base_dir or ".")
        try:
            return read_graph(base / gcfg["edges_file"], base / gcfg["membership_file"])
        except KeyError as exc:
            raise SchemaError("file graph source needs edges_file and membership_file") from exc
    sizes = cluster_sizes(gcfg)
    block = block_matrix(gcfg.get("block", {"kind": "distance_decay"}), sizes.size)
    return sbm_generate(block, sizes, seed)


def draw_law(law: dict, g: ClusteredGraph, rng: np.random.Generator) -> np.ndarray:
    kind = law["kind"]
    N, M = g.N, g.M
    if kind == "constant":
        return np.full(N, float(law.get("value", 0.0)))
    if kind == "normal":
        return rng.normal(float(law.get("mean", 0.0)), float(law.get("sd", 1.0)), N)
    if kind == "uniform":
        return rng.uniform(float(law.get("low", 0.0)), float(law.get("high", 1.0)), N)
    if kind in ("cluster_uniform", "cluster_normal"):
        if kind == "cluster_uniform":
            level = rng.uniform(float(law.get("low", 0.0)), float(law.get("high", 1.0)), M)
        else:
            level = rng.normal(float(law.get("mean", 0.0)), float(law.get("sd", 1.0)), M)
        out = level[g.membership]
        noise = float(law.get("noise_sd", 0.0))
        if noise > 0:
            out = out + rng.normal(0.0, noise, N)
        return out
    raise SchemaError(f"unknown law {kind!r}")


def draw_outcomes(ocfg: dict, g: ClusteredGraph, seed: int, base_dir: Path | None = None) -> OutcomeModel:
    if ocfg["source"] == "file":
        model = read_outcomes(Path(base_dir or ".") / ocfg["file"])
        if model.N != g.N:
            raise InvalidInputError("outcome file and graph sizes differ")
        return model
    # each parameter has its own stream so changing one law leaves the others intact
    alpha = draw_law(ocfg["alpha"], g, stream(seed, "alpha"))
    beta = draw_law(ocfg["beta"], g, stream(seed, "beta"))
    gamma = draw_law(ocfg["gamma"], g, stream(seed, "gamma"))
    if ocfg.get("center_alpha", False):
        alpha = center_within_clusters(alpha, g)
    return OutcomeModel(alpha, beta, gamma)


def family_pi(fcfg: dict, M: int, mean: float) -> ProportionVector:
    kind = fcfg["kind"]
    if kind == "stratified":
        return stratified_pi(M, mean)
    if kind == "cluster_based":
        k = M * mean
        if abs(k - round(k)) > 1e-9:
            raise InvalidInputError("cluster-based design needs M * mean to be an integer")
        return cluster_based_pi(M, int(round(k)))
    if kind == "beta":
        if abs(mean - 0.5) > 1e-12:
            raise InvalidInputError("Beta quantile designs have mean 1/2")
        return beta_quantile_pi(as_float(fcfg.get("lam", 1.0)), M)
    if kind == "two_point":
        return symmetric_two_point_pi(M, mean, float(fcfg.get("d", 0.0)))
    if kind == "three_point":
        return symmetric_three_point_pi(M, mean, float(fcfg.get("fraction", 0.0)))
    raise SchemaError(f"unknown design family {kind!r}")


def lattice_pi(pi, sizes) -> ProportionVector:
    """Round pi_j N_j to integers; symmetric families stay symmetric."""
    sizes = np.asarray(sizes)
    n = np.clip(np.round(np.asarray(pi) * sizes), 0, sizes)
    return ProportionVector(n / sizes, sizes)


def design_spec(dcfg: dict, g: ClusteredGraph, mean: float) -> DesignSpec:
    mode = dcfg["mode"]
    if mode == "independent":
        dist = dict(dcfg.get("distribution") or {})
        if not dist:
            raise SchemaError("independent mode needs a distribution")
        kind = dist.pop("kind")
        if "lam" in dist:
            dist["lam"] = as_float(dist["lam"])
        return DesignSpec.independent(Distribution(kind, dist))
    if "pi" in dcfg:
        pi = ProportionVector(np.asarray(dcfg["pi"], dtype=float), g.sizes)
    elif "family" in dcfg:
        pi = lattice_pi(family_pi(dcfg["family"], g.M, mean).pi, g.sizes)
    else:
        raise SchemaError("design needs pi or family")
    if pi.M != g.M:
        raise InvalidInputError("proportion vector length differs from the cluster count")
    return DesignSpec.deterministic(pi) if mode == "deterministic" else DesignSpec.permutation(pi)
