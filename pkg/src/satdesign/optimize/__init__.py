from .beta_search import DEFAULT_GRID, BetaSearchResult, beta_objective, beta_shape_search
from .qp import (
    QpResult,
    QuadraticObjective,
    SmoothObjective,
    deterministic_qp,
    discrete_descent,
    local_descent,
    snap_counts,
)
from .symmetric import (
    Case,
    SymmetricOptimum,
    family_objective,
    fourth_moment_bound,
    symmetric_family_optimum,
    variance_bound_pi,
)

__all__ = [
    "DEFAULT_GRID",
    "BetaSearchResult",
    "beta_objective",
    "beta_shape_search",
    "QpResult",
    "QuadraticObjective",
    "SmoothObjective",
    "deterministic_qp",
    "discrete_descent",
    "local_descent",
    "snap_counts",
    "Case",
    "SymmetricOptimum",
    "family_objective",
    "fourth_moment_bound",
    "symmetric_family_optimum",
    "variance_bound_pi",
]
