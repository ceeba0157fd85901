import numpy as np
import pytest

from satdesign.errors import DegenerateAssignmentError, InvalidInputError, ModelMismatchError
from satdesign.estimators import diff_in_means, diff_in_means_batch, stratified_batch, stratified_estimator
from satdesign.graph import ClusteredGraph
from satdesign.outcomes import (
    OutcomeModel,
    center_within_clusters,
    evaluate,
    interference_tensors,
    read_outcomes,
    sutva_table,
    tte,
    write_outcomes,
)


@pytest.fixture
def path_graph():
    return ClusteredGraph.from_edges([0, 0, 1, 1], [(0, 1), (1, 2), (2, 3)])


def test_diff_in_means_by_hand():
    assert diff_in_means([3.0, 1.0, 2.0, 0.0], [1, 0, 1, 0]) == pytest.approx(2.0)
    with pytest.raises(DegenerateAssignmentError):
        diff_in_means([1.0, 2.0], [1, 1])


def test_batch_marks_degenerate_rows():
    Y = np.array([[1.0, 2.0], [1.0, 2.0]])
    est, ok = diff_in_means_batch(Y, np.array([[1, 0], [0, 0]]))
    assert ok.tolist() == [True, False]
    assert est[0] == pytest.approx(-1.0) and np.isnan(est[1])


def test_stratified_estimator_weights(path_graph):
    Y = np.array([4.0, 0.0, 10.0, 2.0])
    Z = np.array([1, 0, 0, 1])
    assert stratified_estimator(Y, Z, path_graph) == pytest.approx(0.5 * 4 + 0.5 * -8)
    assert stratified_estimator(Y, Z, path_graph, weights=[1.0, 0.0]) == pytest.approx(4.0)
    with pytest.raises(DegenerateAssignmentError):
        stratified_estimator(Y, np.array([1, 1, 0, 1]), path_graph)
    _, ok = stratified_batch(Y[None, :], np.array([[1, 1, 0, 1]]), path_graph, weights=[0.0, 1.0])
    assert ok[0]


def test_evaluate_linear_interference(path_graph):
    model = OutcomeModel(np.zeros(4), np.ones(4), np.full(4, 2.0))
    Y = evaluate(model, path_graph, [1, 0, 0, 0])
    # unit 1 has neighbours {0, 2}: rho = 1/2
    assert Y.tolist() == [1.0, 1.0, 0.0, 0.0]


def test_isolated_unit_gets_no_spillover():
    g = ClusteredGraph.from_edges([0, 0, 1], [(0, 1)])
    Y = evaluate(OutcomeModel(np.zeros(3), np.zeros(3), np.ones(3)), g, [1, 1, 0])
    assert Y[2] == 0.0


def test_tte_and_sutva_table():
    model = OutcomeModel([1.0, 2.0], [0.5, 1.5], [0.0, 0.0])
    assert tte(model) == pytest.approx(1.0)
    t = sutva_table(model)
    assert t.Y1.tolist() == [1.5, 3.5] and t.Y0.tolist() == [1.0, 2.0]
    with pytest.raises(ModelMismatchError):
        sutva_table(OutcomeModel([0.0], [0.0], [1.0]))


def test_model_validation():
    with pytest.raises(InvalidInputError):
        OutcomeModel([0.0, 1.0], [0.0], [0.0, 0.0])
    with pytest.raises(InvalidInputError):
        OutcomeModel([np.inf], [0.0], [0.0])


def test_centering(path_graph):
    x = center_within_clusters(np.array([1.0, 3.0, 5.0, 9.0]), path_graph)
    assert x.tolist() == [-1.0, 1.0, -2.0, 2.0]


def test_outcome_csv_round_trip(tmp_path):
    m = OutcomeModel([0.1, -2.0], [1.0, 0.25], [0.5, 3.0])
    write_outcomes(m, tmp_path / "o.csv")
    assert (tmp_path / "o.csv").read_text().splitlines()[0] == "unit,alpha,beta,gamma"
    r = read_outcomes(tmp_path / "o.csv")
    assert np.array_equal(r.alpha, m.alpha) and np.array_equal(r.gamma, m.gamma)


def test_tensors_need_interior_treated_count(path_graph):
    model = OutcomeModel(np.zeros(4), np.ones(4), np.ones(4))
    with pytest.raises(InvalidInputError):
        interference_tensors(model, path_graph, 0)
