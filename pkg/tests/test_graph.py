import numpy as np
import pytest
import scipy.sparse as sp

from satdesign.errors import InvalidInputError
from satdesign.graph import (
    BlockMatrix,
    ClusteredGraph,
    check_assumptions,
    cluster_edge_stats,
    gamma_prime,
    read_graph,
    sbm_generate,
    write_graph,
)


def test_complete_block_gives_complete_graph():
    g = sbm_generate(BlockMatrix(np.ones((2, 2))), [3, 3], seed=1)
    assert len(g.edges()) == 15
    assert np.all(g.degree == 5)


def test_sbm_is_reproducible_and_seed_sensitive():
    block = BlockMatrix.distance_decay(5, 2.0)
    a = sbm_generate(block, [10] * 5, 3).edges()
    b = sbm_generate(block, [10] * 5, 3).edges()
    c = sbm_generate(block, [10] * 5, 4).edges()
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_distance_decay_entries():
    A = BlockMatrix.distance_decay(4, 2.0).A
    assert A[0, 0] == 1.0
    assert A[0, 3] == pytest.approx(np.exp(-1.5))
    assert np.allclose(A, A.T)


def test_block_matrix_validation():
    with pytest.raises(InvalidInputError):
        BlockMatrix(np.array([[0.5, 0.2], [0.3, 0.5]]))
    with pytest.raises(InvalidInputError):
        BlockMatrix(np.array([[1.5]]))


def test_graph_rejects_self_loops_and_bad_ids():
    with pytest.raises(InvalidInputError):
        ClusteredGraph.from_edges([0, 0, 1], [(0, 0)])
    with pytest.raises(InvalidInputError):
        ClusteredGraph.from_edges([0, 0, 1], [(0, 5)])
    with pytest.raises(InvalidInputError):
        ClusteredGraph([0, 2], sp.csr_matrix((2, 2)), M=3)  # cluster 1 is empty


def test_neighbors_sorted_and_duplicates_merged():
    g = ClusteredGraph.from_edges([0, 0, 1, 1], [(0, 3), (0, 1), (1, 0), (0, 2)])
    assert g.neighbors(0).tolist() == [1, 2, 3]
    assert g.degree.tolist() == [3, 1, 1, 1]


def test_intra_fraction_and_gamma_prime():
    g = ClusteredGraph.from_edges([0, 0, 1, 1], [(0, 1), (0, 2), (2, 3)])
    assert g.intra_fraction().tolist() == [0.5, 1.0, 0.5, 1.0]
    assert gamma_prime(g, np.ones(4)) == pytest.approx(0.75)


def test_isolated_unit_has_zero_intra_fraction():
    g = ClusteredGraph.from_edges([0, 0, 1], [(0, 1)])
    assert g.intra_fraction()[2] == 0.0


def test_edge_stats_row_normalised():
    g = sbm_generate(BlockMatrix.distance_decay(4, 2.0), [8] * 4, 2)
    s = cluster_edge_stats(g)
    assert np.allclose(s.P, s.P.T)
    assert np.allclose(s.Q.sum(axis=1), 1.0)


def test_relabel_preserves_edges():
    g = sbm_generate(BlockMatrix.distance_decay(3, 1.0), [4, 4, 4], 0)
    h = g.relabel_clusters([2, 0, 1])
    assert np.array_equal(g.edges(), h.edges())
    assert h.membership[0] == 2


def test_csv_round_trip(tmp_path):
    g = sbm_generate(BlockMatrix.distance_decay(3, 1.0), [4, 5, 6], 9)
    write_graph(g, tmp_path / "e.csv", tmp_path / "m.csv")
    assert (tmp_path / "e.csv").read_text().splitlines()[0] == "u,v"
    assert (tmp_path / "m.csv").read_text().splitlines()[0] == "unit,cluster"
    h = read_graph(tmp_path / "e.csv", tmp_path / "m.csv")
    assert np.array_equal(g.edges(), h.edges())
    assert np.array_equal(g.membership, h.membership)


def test_read_graph_rejects_wrong_header(tmp_path):
    (tmp_path / "e.csv").write_text("a,b\n0,1\n")
    (tmp_path / "m.csv").write_text("unit,cluster\n0,0\n1,0\n")
    with pytest.raises(InvalidInputError):
        read_graph(tmp_path / "e.csv", tmp_path / "m.csv")


def test_assumption_report_on_complete_graph():
    block = BlockMatrix(np.ones((2, 2)))
    g = sbm_generate(block, [5, 5], 0)
    rep = check_assumptions(g, eps2=1.0, eps3=2.0, block=block)
    assert rep.min_degree == 9
    assert rep.dense_ok
    assert rep.edge_prob_ok and rep.edge_prob_max_deviation == 0.0
    assert 0 < rep.edge_prob_probability < 1


def test_unconfoundedness_check_needs_model():
    g = sbm_generate(BlockMatrix(np.ones((2, 2))), [3, 3], 0)
    with pytest.raises(InvalidInputError):
        check_assumptions(g, f=lambda a, b, c: a)
