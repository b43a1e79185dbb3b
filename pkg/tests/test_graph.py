import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from oracles import formation_error_loops
from platoon_setm.graph import (FormationGraph, GraphError, build_laplacian, cycle_graph, formation_error,
                                is_connected, neighbor_set, square_offsets)

CYCLE4 = np.array([[0, 1, 0, 1], [1, 0, 1, 0], [0, 1, 0, 1], [1, 0, 1, 0]], float)
K4 = np.ones((4, 4)) - np.eye(4)


def test_cycle_neighbors():
    g = FormationGraph(CYCLE4, square_offsets(12))
    # vehicle 1 (index 0) talks to vehicles 2 and 4
    assert neighbor_set(g, 0) == {1, 3}


def test_complete_graph_neighbors():
    g = FormationGraph(K4, square_offsets(12))
    assert neighbor_set(g, 2) == {0, 1, 3}


def test_isolated_row_has_no_neighbors():
    # an isolated node makes the graph disconnected, so check the adjacency-level helper
    adj = CYCLE4.copy()
    adj[3, :] = adj[:, 3] = 0
    assert not np.flatnonzero(adj[3] > 0).size
    with pytest.raises(GraphError, match="not connected"):
        FormationGraph(adj, square_offsets(12))


def test_neighbor_index_out_of_range():
    g = cycle_graph(4, square_offsets(12))
    with pytest.raises(IndexError):
        neighbor_set(g, 4)


def test_error_zero_at_desired_configuration():
    g = cycle_graph(4, square_offsets(12))
    assert np.array_equal(formation_error(g, square_offsets(12)), np.zeros((4, 2)))


def test_error_translation_invariant_square():
    g = cycle_graph(4, square_offsets(12))
    z = formation_error(g, square_offsets(12) + np.array([37.5, -4.25]))
    np.testing.assert_allclose(z, 0, atol=1e-12)


def test_two_vehicle_hand_value():
    g = FormationGraph(np.array([[0, 1], [1, 0]], float), np.zeros((2, 2)))
    z = formation_error(g, [[1, 0], [0, 0]])
    np.testing.assert_array_equal(z, [[1, 0], [-1, 0]])


def test_laplacian_cycle():
    lap = build_laplacian(cycle_graph(4, square_offsets(1))).laplacian
    np.testing.assert_array_equal(lap, 2 * np.eye(4) - CYCLE4)
    np.testing.assert_array_equal(lap.sum(axis=1), 0)


def test_laplacian_single_edge():
    lap = build_laplacian(FormationGraph(np.array([[0, 1], [1, 0]], float), np.zeros((2, 2)))).laplacian
    np.testing.assert_array_equal(lap, [[1, -1], [-1, 1]])


def test_laplacian_k4_spectrum():
    lap = build_laplacian(FormationGraph(K4, np.zeros((4, 2)))).laplacian
    # 0 with the all-ones eigenvector, and 4 with multiplicity n - rank(L - 4I) = 3
    np.testing.assert_array_equal(lap @ np.ones(4), 0)
    assert np.linalg.matrix_rank(lap - 4 * np.eye(4)) == 1
    np.testing.assert_allclose(np.linalg.eigvalsh(lap), [0, 4, 4, 4], atol=1e-12)


@pytest.mark.parametrize("adj, message", [
    (np.array([[0, 1], [0, 0]], float), "symmetric"),
    (np.array([[0, -1], [-1, 0]], float), "nonnegative"),
    (np.array([[1, 1], [1, 0]], float), "self-loops"),
])
def test_invalid_adjacency(adj, message):
    with pytest.raises(GraphError, match=message):
        FormationGraph(adj, np.zeros((2, 2)))


def test_offsets_shape_checked():
    with pytest.raises(GraphError, match="offsets"):
        FormationGraph(CYCLE4, np.zeros((3, 2)))


def test_graph_arrays_read_only():
    g = cycle_graph(4, square_offsets(12))
    with pytest.raises(ValueError):
        g.adjacency[0, 1] = 5.0


def _random_connected(rng, n):
    while True:
        upper = np.triu(rng.random((n, n)) < 0.5, 1) * rng.uniform(0.1, 3.0, (n, n))
        adj = upper + upper.T
        if is_connected(adj):
            return adj


@settings(max_examples=60, deadline=None)
@given(n=st.integers(2, 7), seed=st.integers(0, 2**32 - 1), shift=arrays(float, 2, elements=st.floats(-1e3, 1e3)))
def test_error_zero_and_translation_invariant_random(n, seed, shift):
    rng = np.random.default_rng(seed)
    adj = _random_connected(rng, n)
    offsets = rng.uniform(-50, 50, (n, 2))
    g = FormationGraph(adj, offsets)
    np.testing.assert_allclose(formation_error(g, offsets), 0, atol=1e-12)
    p = offsets + rng.normal(0, 3, (n, 2))
    np.testing.assert_allclose(formation_error(g, p + shift), formation_error(g, p), atol=1e-9)


@settings(max_examples=60, deadline=None)
@given(n=st.integers(2, 7), seed=st.integers(0, 2**32 - 1))
def test_stacked_laplacian_identity_matches_loops(n, seed):
    rng = np.random.default_rng(seed)
    adj = _random_connected(rng, n)
    offsets = rng.uniform(-20, 20, (n, 2))
    p = rng.uniform(-20, 20, (n, 2))
    g = FormationGraph(adj, offsets)
    lap = build_laplacian(g).laplacian
    stacked = np.kron(lap, np.eye(2)) @ (p - offsets).reshape(-1)
    loops = np.array(formation_error_loops(adj.tolist(), offsets.tolist(), p.tolist()))
    np.testing.assert_allclose(stacked.reshape(n, 2), loops, atol=1e-12)
    np.testing.assert_allclose(formation_error(g, p), loops, atol=1e-12)


def _reachable_all(adj):
    # depth-first search with an explicit stack, independent of the package's BFS
    n = len(adj)
    seen, stack = {0}, [0]
    while stack:
        i = stack.pop()
        for j in range(n):
            if adj[i][j] > 0 and j not in seen:
                seen.add(j)
                stack.append(j)
    return len(seen) == n


def test_connectivity_agrees_with_search_on_1000_graphs():
    rng = np.random.default_rng(7)
    for _ in range(1000):
        n = int(rng.integers(1, 9))
        upper = np.triu(rng.random((n, n)) < rng.uniform(0.1, 0.6), 1).astype(float)
        adj = upper + upper.T
        assert is_connected(adj) == _reachable_all(adj.tolist())
        if n > 1:
            lam2 = np.sort(np.linalg.eigvalsh(np.diag(adj.sum(1)) - adj))[1]
            assert (lam2 > 1e-9) == is_connected(adj)
