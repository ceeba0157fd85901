"""Monte Carlo evaluation of a design by repeated assignment draws."""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from ..designs import DesignSpec, sample_assignments
from ..errors import InvalidInputError
from ..estimators import diff_in_means_batch, stratified_batch
from ..graph import ClusteredGraph
from ..outcomes import OutcomeModel, evaluate, tte

# Replications are processed in fixed chunks so the floating point work done
# for replication r never depends on the number of worker threads.
CHUNK = 250


@dataclass(frozen=True)
class EstimateSummary:
    mean_tau: float
    bias: float
    variance: float
    mse: float
    se_mean: float
    se_bias: float
    se_variance: float
    se_mse: float
    R: int
    valid: int
    degenerate: int
    seed: int
    tte: float

    @property
    def exclusion_rate(self) -> float:
        return self.degenerate / self.R

    def as_dict(self) -> dict:
        out = asdict(self)
        out["exclusion_rate"] = self.exclusion_rate
        return out


def summarize(estimates: np.ndarray, target: float, R: int, seed: int) -> EstimateSummary:
    """Moments with the divide-by-R convention over the valid estimates."""
    x = np.asarray(estimates, dtype=float)
    n = x.size
    if n == 0:
        nan = math.nan
        return EstimateSummary(nan, nan, nan, nan, nan, nan, nan, nan, R, 0, R, seed, target)
    mean = math.fsum(x) / n
    c = x - mean
    var = math.fsum(c * c) / n
    err2 = (x - target) ** 2
    mse = math.fsum(err2) / n
    m4 = math.fsum(c**4) / n
    se_mean = math.sqrt(var / n)
    se_var = math.sqrt(max(m4 - var * var, 0.0) / n)
    se_mse = math.sqrt(max(math.fsum((err2 - mse) ** 2) / n, 0.0) / n)
    return EstimateSummary(
        mean_tau=mean,
        bias=mean - target,
        variance=var,
        mse=mse,
        se_mean=se_mean,
        se_bias=se_mean,
        se_variance=se_var,
        se_mse=se_mse,
        R=R,
        valid=n,
        degenerate=R - n,
        seed=seed,
        tte=target,
    )


def estimates(spec: DesignSpec, model: OutcomeModel, g: ClusteredGraph, replications, seed: int,
              estimator: str = "dim", weights=None) -> tuple[np.ndarray, np.ndarray]:
    """Estimates and validity mask for the given replication indices."""
    Z, _ = sample_assignments(spec, g, seed, replications)
    Y = evaluate(model, g, Z)
    if estimator == "dim":
        return diff_in_means_batch(Y, Z)
    if estimator == "stratified":
        return stratified_batch(Y, Z, g, weights)
    raise InvalidInputError(f"unknown estimator {estimator!r}")


def replicate(spec: DesignSpec, model: OutcomeModel, g: ClusteredGraph, R: int, seed: int,
              estimator: str = "dim", weights=None, threads: int = 1) -> EstimateSummary:
    if R < 2:
        raise InvalidInputError("at least two replications are required")
    chunks = [range(a, min(a + CHUNK, R)) for a in range(0, R, CHUNK)]

    def work(ch):
        return estimates(spec, model, g, ch, seed, estimator, weights)

    if threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            parts = list(ex.map(work, chunks))
    else:
        parts = [work(ch) for ch in chunks]
    est = np.concatenate([p[0] for p in parts])
    ok = np.concatenate([p[1] for p in parts])
    return summarize(est[ok], tte(model), R, seed)
