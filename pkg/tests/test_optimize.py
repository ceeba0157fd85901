import math

import numpy as np
import pytest

from helpers import random_graph, random_model
from satdesign.analytics.coefficients import VarianceCoefficients
from satdesign.analytics.interference import ConditionalMoments
from satdesign.designs import beta_quantile_pi
from satdesign.errors import InvalidInputError
from satdesign.optimize import (
    Case,
    QuadraticObjective,
    SmoothObjective,
    beta_shape_search,
    deterministic_qp,
    family_objective,
    fourth_moment_bound,
    local_descent,
    snap_counts,
    symmetric_family_optimum,
    variance_bound_pi,
)
from satdesign.outcomes import interference_tensors
from satdesign.stats import central_moments


def coeffs(V0=1.0, V1=0.0, V2=0.0, V4=0.0, M=8):
    return VarianceCoefficients(V0, V1, V2, 0.0, V4, "test", 80, M, 40)


def test_moment_bounds():
    assert variance_bound_pi(0.3).hi == pytest.approx(0.21)
    b = fourth_moment_bound(0.04, 0.5)
    assert (b.lo, b.hi) == (0.0, pytest.approx(0.25 * 0.04 - 0.04**2))
    with pytest.raises(InvalidInputError):
        fourth_moment_bound(0.5, 0.5)


def test_symmetric_optimum_regimes():
    assert np.all(symmetric_family_optimum(coeffs(V1=1.0), 0.5, 8).pi_star.pi == 0.5)
    so = symmetric_family_optimum(coeffs(V1=-1.0), 0.5, 8)
    assert sorted(so.pi_star.pi) == [0] * 4 + [1] * 4 and so.case is Case.TWO_POINT
    so = symmetric_family_optimum(coeffs(V1=-0.02, V2=1.0), 0.5, 8)
    assert so.d == pytest.approx(0.1)
    so = symmetric_family_optimum(coeffs(V1=-0.05, V2=0.1, V4=-1.0), 0.5, 8)
    assert so.case is Case.THREE_POINT
    assert set(np.round(so.pi_star.pi, 12)) <= {0.0, 0.5, 1.0}


def test_symmetric_optimum_mirrors_high_means():
    so = symmetric_family_optimum(coeffs(V1=-1.0), 0.7, 6)
    assert so.mirrored
    assert so.pi_star.pi.mean() == pytest.approx(0.7)
    assert sorted(so.pi_star.pi) == pytest.approx([0.4] * 3 + [1.0] * 3)


def test_realised_objective_matches_continuous_when_lattice_exact():
    so = symmetric_family_optimum(coeffs(V1=-0.02, V2=1.0, V4=0.3), 0.5, 8)
    assert so.objective_value == pytest.approx(so.continuous_objective, rel=1e-12)


def test_family_objective_brute_force():
    rng = np.random.default_rng(0)
    for _ in range(30):
        V = coeffs(rng.normal(), rng.normal(), rng.normal(), rng.normal())
        m = 0.5
        so = symmetric_family_optimum(V, m, 8)
        for y in np.linspace(0, m * m, 41):
            for v in np.linspace(0, fourth_moment_bound(y, m).hi, 11):
                assert so.continuous_objective <= family_objective(V, m, y, v) + 1e-12


def test_beta_search_finds_interior_minimum():
    # V1 = -V2 / 6 puts the optimum of mu2c at 1/12, the Beta(1, 1) value
    V = coeffs(V1=-1 / 6, V2=1.0)
    res = beta_shape_search(V, 40)
    assert 0.5 < res.lambda_star < 2.0
    on_grid = min(v for _, v in res.curve)
    assert res.objective_star <= on_grid + 1e-15
    assert res.as_dict()["curve"][-1][0] == "inf"


def test_beta_search_endpoints():
    assert beta_shape_search(coeffs(V1=1.0), 20).lambda_star == math.inf
    assert beta_shape_search(coeffs(V1=-1.0), 20).lambda_star == 0.0


def test_local_descent_on_convex_quadratic():
    Q = np.diag([1.0, 2.0, 3.0])
    obj = QuadraticObjective(Q, np.zeros(3), 0.0)
    x = local_descent(obj, np.array([1.0, 0.5, 0.0]))
    x = x[0] if isinstance(x, tuple) else x
    # minimise sum q_j x_j^2 subject to sum x = 1.5
    w = 1 / np.diag(Q)
    assert np.asarray(x) == pytest.approx(1.5 * w / w.sum(), abs=1e-9)


def test_qp_dominates_baselines_and_respects_constraints():
    rng = np.random.default_rng(3)
    g = random_graph([6] * 6, rng, p=0.3)
    cm = ConditionalMoments(interference_tensors(random_model(g.N, rng), g, 18), g)
    res = deterministic_qp(SmoothObjective(cm.mse, cm.mse_grad, cm.mse_hess), 6, 0.5,
                           sizes=g.sizes, n_t=18, seed=1)
    assert res.pi_hat.sum() == pytest.approx(3.0, abs=1e-9)
    assert np.all((res.pi_hat >= -1e-12) & (res.pi_hat <= 1 + 1e-12))
    assert all(res.dominated_baselines.values())
    assert res.objective <= min(res.baseline_objectives.values()) + 1e-12
    assert res.counts_snapped.sum() == 18
    assert res.objective_snapped == pytest.approx(cm.mse(res.pi_snapped))


def test_qp_is_deterministic_given_seed():
    Q = np.array([[1.0, -2.0, 0.5], [-2.0, 1.0, 0.0], [0.5, 0.0, -1.0]])
    obj = QuadraticObjective(Q, np.array([0.1, -0.3, 0.2]), 0.0)
    a = deterministic_qp(obj, 3, 0.4, seed=9)
    b = deterministic_qp(obj, 3, 0.4, seed=9, threads=4)
    assert np.array_equal(a.pi_hat, b.pi_hat)


def test_qp_rejects_infeasible_mean():
    with pytest.raises(InvalidInputError):
        deterministic_qp(QuadraticObjective(np.eye(2), np.zeros(2), 0.0), 2, 1.5)


def test_snap_counts_keeps_total():
    n = snap_counts(np.array([0.34, 0.33, 0.33]), np.array([10, 10, 10]), 10)
    assert n.sum() == 10 and np.all(n >= 0)


def test_beta_quantile_mean_is_half():
    for lam in (0.1, 0.8, 3.0):
        assert central_moments(beta_quantile_pi(lam, 40).pi).mean == pytest.approx(0.5, abs=1e-15)
