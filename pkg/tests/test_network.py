import numpy as np
import pytest

import vgne
from vgne.errors import GraphError
from vgne.network import csr_mix


def test_mix_complete_triangle():
    g = vgne.build_graph("complete", 3)
    out = vgne.mix(np.array([3.0, 6.0, 9.0]), g, 1)
    assert out == pytest.approx([6.0, 6.0, 6.0])


def test_mix_isolated_nodes_identity():
    g = vgne.CommGraph(3, ())
    v = np.array([1.0, -2.0, 7.0])
    assert np.array_equal(vgne.mix(v, g, 1), v)


def test_mix_path_blockwise():
    g = vgne.build_graph("path", 3)
    out = vgne.mix(np.array([0.0, 3.0, 6.0]), g, 1)
    assert out == pytest.approx([1.5, 3.0, 4.5])

    # two-dimensional blocks mix componentwise
    v = np.array([0.0, 10.0, 3.0, 20.0, 6.0, 30.0])
    out = vgne.mix(v, g, 2)
    assert out == pytest.approx([1.5, 15.0, 3.0, 20.0, 4.5, 25.0])


def test_mix_preserves_consensus():
    rng = np.random.default_rng(5)
    g = vgne.build_graph("cycle", 6)
    block = rng.normal(size=2)
    v = np.tile(block, 6)
    assert vgne.mix(v, g, 2) == pytest.approx(v, abs=1e-15)


def test_mix_rejects_wrong_length():
    g = vgne.build_graph("path", 3)
    with pytest.raises(GraphError, match="length 6"):
        vgne.mix(np.zeros(5), g, 2)


def test_graph_normalizes_edges():
    g = vgne.CommGraph(4, ((2, 0), (0, 2), (3, 1)))
    assert g.edges == ((0, 2), (1, 3))
    assert g.num_edges == 2


def test_graph_rejects_bad_edges():
    with pytest.raises(GraphError, match="self loop"):
        vgne.CommGraph(3, ((1, 1),))
    with pytest.raises(GraphError, match="range"):
        vgne.CommGraph(3, ((0, 3),))
    with pytest.raises(GraphError, match="at least one node"):
        vgne.CommGraph(0, ())


def test_mixing_matrix_rows_sum_to_one():
    g = vgne.build_graph("random_regular", 8, degree=3, seed=2)
    W = g.mixing_matrix()
    assert np.abs(W.sum(axis=1) - 1.0).max() <= 1e-14
    assert np.all(W >= 0)


def test_adjacency_symmetric_zero_diagonal():
    g = vgne.build_graph("cycle", 5)
    E = g.adjacency()
    assert np.array_equal(E, E.T)
    assert np.array_equal(np.diag(E), np.zeros(5))


def test_laplacian_annihilates_constants():
    g = vgne.build_graph("random_regular", 10, degree=3, seed=0)
    L = g.laplacian()
    assert np.abs(L @ np.ones(10)).max() <= 1e-14
    # connected graph: eigenvalue 0 is simple
    eigs = np.sort(np.linalg.eigvalsh(L))
    assert eigs[0] == pytest.approx(0.0, abs=1e-12)
    assert eigs[1] > 1e-8


def test_build_graph_shapes():
    cyc = vgne.build_graph("cycle", 4)
    assert np.array_equal(cyc.degrees(), [2, 2, 2, 2])
    assert cyc.is_connected() and cyc.is_regular()

    comp = vgne.build_graph("complete", 5)
    assert np.array_equal(comp.degrees(), [4, 4, 4, 4, 4])
    assert comp.num_edges == 10

    pth = vgne.build_graph("path", 2)
    assert pth.edges == ((0, 1),)

    with pytest.raises(GraphError, match="at least 3"):
        vgne.build_graph("cycle", 2)
    with pytest.raises(GraphError, match="unknown graph kind"):
        vgne.build_graph("star", 4)


def test_random_regular_validation_and_determinism():
    with pytest.raises(GraphError, match="degree and seed"):
        vgne.build_graph("random_regular", 6)

    a = vgne.build_graph("random_regular", 12, degree=3, seed=7)
    b = vgne.build_graph("random_regular", 12, degree=3, seed=7)
    assert a.edges == b.edges
    assert a.is_connected()
    assert np.all(a.degrees() == 3)


def test_doubly_stochastic_iff_regular():
    reg = vgne.build_graph("cycle", 5)
    W = reg.mixing_matrix()
    assert np.abs(W.sum(axis=0) - 1.0).max() <= 1e-14

    star = vgne.CommGraph(4, ((0, 1), (0, 2), (0, 3)))
    assert not star.is_regular()
    cols = star.mixing_matrix().sum(axis=0)
    assert np.abs(cols - 1.0).max() > 0.1


def test_mixing_contracts_disagreement():
    # restricted to the disagreement subspace the weights are a strict
    # contraction on any connected graph
    for kind, n in (("cycle", 7), ("path", 5), ("complete", 4)):
        g = vgne.build_graph(kind, n)
        W = g.mixing_matrix()
        P = np.eye(n) - np.ones((n, n)) / n
        assert np.linalg.norm(P @ W @ P, 2) < 1.0 - 1e-6


def test_csr_mix_matches_dense_kron():
    rng = np.random.default_rng(11)
    g = vgne.build_graph("random_regular", 9, degree=4, seed=3)
    indptr, indices, inv_sizes = g.closed_csr()
    V = rng.normal(size=(9, 3))
    dense = (g.mixing_matrix() @ V).reshape(-1)
    assert csr_mix(V, indptr, indices, inv_sizes).reshape(-1) == pytest.approx(
        dense, abs=1e-12
    )
    # the stacked helper agrees with both
    assert vgne.mix(V.reshape(-1), g, 3) == pytest.approx(dense, abs=1e-12)


def test_closed_csr_layout():
    g = vgne.build_graph("path", 3)
    indptr, indices, inv_sizes = g.closed_csr()
    assert indptr.tolist() == [0, 2, 5, 7]
    assert indices.tolist() == [0, 1, 1, 0, 2, 2, 1]
    assert inv_sizes == pytest.approx([0.5, 1 / 3, 0.5])


def test_aggregate_tracking_on_regular_graph():
    # with v started at the stacked decisions, a doubly stochastic mixing
    # keeps the average of the trackers pinned to the true aggregate
    spec = vgne.random_game(6, 2, 0, seed=40)
    g = vgne.build_graph("cycle", 6)
    x0 = vgne.default_start(spec).x
    state = vgne.ConsensusState(x=x0, v=x0.copy())
    constants = vgne.exact_constants(spec)
    alpha = 0.2 * constants.eta / constants.lip_f**2
    for _ in range(30):
        state = vgne.consensus_step(state, spec, g, alpha)
        est = state.aggregate_estimates(g, spec.decision_dim)
        mean_est = est.reshape(6, 2).mean(axis=0)
        assert mean_est == pytest.approx(vgne.aggregate(state.x, spec), abs=1e-12)
