import math

import numpy as np
import pytest
from scipy import stats

from satdesign.designs import (
    DesignSpec,
    Distribution,
    ProportionVector,
    beta_quantile_bisect,
    beta_quantile_pi,
    cluster_based_pi,
    is_integer_consistent,
    sample_assignment,
    sample_assignments,
    stratified_pi,
    symmetric_three_point_pi,
    symmetric_two_point_pi,
    treated_counts,
)
from satdesign.errors import InvalidInputError
from satdesign.graph import BlockMatrix, sbm_generate


@pytest.fixture
def graph():
    return sbm_generate(BlockMatrix.distance_decay(4, 2.0), [5] * 4, 0)


def test_proportion_vector_bounds():
    with pytest.raises(InvalidInputError):
        ProportionVector([0.2, 1.2])
    with pytest.raises(InvalidInputError):
        ProportionVector([])
    assert ProportionVector([0.5], [4]).integer_consistent
    assert not ProportionVector([0.3], [4]).integer_consistent


def test_counts_floor_with_tolerance():
    assert treated_counts([0.6, 0.25], [5, 4]).tolist() == [3, 1]
    assert treated_counts([0.7], [3]).tolist() == [2]
    assert is_integer_consistent([0.6], [5])


def test_snapped_rounds_counts():
    p = ProportionVector([0.33, 0.9], [6, 10]).snapped()
    assert p.pi.tolist() == [2 / 6, 0.9]


def test_canonical_designs():
    assert stratified_pi(3, 0.4).pi.tolist() == [0.4] * 3
    assert cluster_based_pi(4, 1).pi.tolist() == [0, 0, 0, 1]
    assert sorted(symmetric_two_point_pi(4, 0.5, 0.2).pi.tolist()) == pytest.approx([0.3, 0.3, 0.7, 0.7])
    assert symmetric_three_point_pi(6, 0.25, 2 / 3).pi.tolist() == [0, 0, 0.25, 0.25, 0.5, 0.5]
    with pytest.raises(InvalidInputError):
        symmetric_two_point_pi(4, 0.2, 0.3)


def test_beta_quantiles_endpoints_and_symmetry():
    assert beta_quantile_pi(0.0, 4).pi.tolist() == [0, 0, 1, 1]
    assert beta_quantile_pi(0.0, 3).pi.tolist() == [0, 0.5, 1]
    assert beta_quantile_pi(math.inf, 5).pi.tolist() == [0.5] * 5
    pi = beta_quantile_pi(0.8, 40).pi
    assert np.all(pi + pi[::-1] == 1.0)
    assert beta_quantile_pi(1.0, 9).pi == pytest.approx(np.arange(1, 10) / 10)


@pytest.mark.parametrize("lam", [0.1, 0.5, 2.0, 7.0])
def test_beta_quantile_against_bisection_and_scipy(lam):
    q = np.arange(1, 12) / 12
    pi = beta_quantile_pi(lam, 11).pi
    assert pi == pytest.approx([beta_quantile_bisect(lam, x) for x in q], abs=1e-9)
    assert pi == pytest.approx(stats.beta(lam, lam).ppf(q), abs=1e-9)


def test_distribution_validation_and_support():
    with pytest.raises(InvalidInputError):
        Distribution("table", {"values": [0.1, 0.9], "probs": [0.3, 0.3]})
    with pytest.raises(InvalidInputError):
        Distribution("nope")
    vals, probs = Distribution("beta", {"lam": 0.0}).support()
    assert vals.tolist() == [0, 1] and probs.tolist() == [0.5, 0.5]
    with pytest.raises(InvalidInputError):
        Distribution("beta", {"lam": 2.0}).support()


def test_deterministic_assignment_hits_counts(graph):
    spec = DesignSpec.deterministic([0.2, 0.4, 0.6, 1.0])
    Z, _ = sample_assignments(spec, graph, seed=1, replications=range(50))
    per = np.stack([Z[:, graph.cluster_units(j)].sum(axis=1) for j in range(4)], axis=1)
    assert np.all(per == [1, 2, 3, 5])


def test_permutation_assignment_permutes_pi(graph):
    spec = DesignSpec.permutation([0.0, 0.2, 0.8, 1.0])
    _, pis = sample_assignments(spec, graph, seed=2, replications=range(200))
    assert np.all(np.sort(pis, axis=1) == [0.0, 0.2, 0.8, 1.0])
    assert len({tuple(p) for p in pis}) > 10


def test_assignment_depends_only_on_seed_and_replication(graph):
    spec = DesignSpec.permutation([0.2, 0.4, 0.6, 0.8])
    Z_all, _ = sample_assignments(spec, graph, 5, range(10))
    single = sample_assignment(spec, graph, 5, 7)
    assert np.array_equal(Z_all[7], single.Z)
    Z_other, _ = sample_assignments(spec, graph, 5, [7, 3])
    assert np.array_equal(Z_other[0], Z_all[7])


def test_second_stage_is_uniform_within_cluster(graph):
    spec = DesignSpec.deterministic([0.4, 0.4, 0.4, 0.4])
    Z, _ = sample_assignments(spec, graph, 3, range(4000))
    freq = Z[:, graph.cluster_units(0)].mean(axis=0)
    assert np.all(np.abs(freq - 0.4) < 0.04)


def test_independent_mode_samples_law(graph):
    spec = DesignSpec.independent(Distribution("two_point", {"lo": 0.2, "hi": 0.8, "weight": 0.25}))
    _, pis = sample_assignments(spec, graph, 4, range(2000))
    assert set(np.unique(pis)) <= {0.2, 0.8}
    assert abs((pis == 0.8).mean() - 0.25) < 0.02


def test_inconsistent_deterministic_design_warns(graph):
    with pytest.warns(UserWarning):
        sample_assignments(DesignSpec.deterministic([0.3, 0.5, 0.5, 0.5]), graph, 0, [0])


def test_spec_requires_inputs():
    with pytest.raises(InvalidInputError):
        DesignSpec("permutation")
    with pytest.raises(InvalidInputError):
        DesignSpec("independent")
