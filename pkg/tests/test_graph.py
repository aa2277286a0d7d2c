import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spatial_ident.errors import GraphError, ZeroDegree
from spatial_ident.graph import (
    ProximityMatrix,
    complete_graph,
    connected_components,
    count_distinct,
    degree_matrix,
    figure1_graphs,
    graph_from_edges,
    is_fully_connected,
    laplacian,
    laplacian_spectrum,
    load_graph,
    normalized_spectrum,
    read_edge_list,
    ring_graph,
    write_dense_csv,
)

from factories import random_areal_graph


@st.composite
def graphs(draw, max_n=10):
    n = draw(st.integers(2, max_n))
    bits = draw(st.lists(st.booleans(), min_size=n * (n - 1) // 2, max_size=n * (n - 1) // 2))
    weights = draw(st.lists(st.floats(0.1, 5.0), min_size=n * (n - 1) // 2, max_size=n * (n - 1) // 2))
    W = np.zeros((n, n))
    iu = np.triu_indices(n, 1)
    W[iu] = np.where(bits, weights, 0.0)
    return ProximityMatrix(W + W.T)


def test_proximity_validation():
    with pytest.raises(GraphError):
        ProximityMatrix(np.array([[1.0, 0.0], [0.0, 0.0]]))
    with pytest.raises(GraphError):
        ProximityMatrix(np.array([[0.0, -1.0], [-1.0, 0.0]]))
    with pytest.raises(GraphError):
        ProximityMatrix(np.zeros((2, 3)))
    with pytest.raises(GraphError):
        ProximityMatrix(np.array([[0.0, np.nan], [np.nan, 0.0]]))
    W = ProximityMatrix([[0, 1], [1, 0]])
    assert not W.entries.flags.writeable


def test_asymmetric_input_is_symmetrised_with_warning():
    with pytest.warns(UserWarning):
        W = ProximityMatrix(np.array([[0.0, 1.0], [0.5, 0.0]]))
    assert W.entries[0, 1] == W.entries[1, 0] == 0.75


def test_degree_examples():
    np.testing.assert_array_equal(degree_matrix(graph_from_edges(2, [(0, 1)])).diag, [1, 1])
    np.testing.assert_array_equal(degree_matrix(ring_graph(6)).diag, [2] * 6)
    np.testing.assert_array_equal(degree_matrix(np.zeros((3, 3))).diag, [0, 0, 0])


def test_components_examples():
    g = figure1_graphs()
    assert sorted(connected_components(g["a"]).sizes) == [2, 2, 2]
    assert connected_components(g["d"]).sizes == [6]
    assert connected_components(np.zeros((4, 4))).sizes == [1, 1, 1, 1]


@given(graphs())
@settings(max_examples=60, deadline=None)
def test_components_partition_and_connectivity(W):
    part = connected_components(W)
    nodes = sorted(i for b in part.blocks for i in b)
    assert nodes == list(range(W.n))
    A = W.entries > 0
    for b in part.blocks:
        others = [i for i in range(W.n) if i not in b]
        assert not A[np.ix_(b, others)].any()
        # reachability inside the block via matrix powers
        R = np.linalg.matrix_power(np.eye(len(b)) + A[np.ix_(b, b)], len(b))
        assert (R > 0).all()


def test_normalized_spectrum_examples():
    lam = normalized_spectrum(complete_graph(6)).eigenvalues
    np.testing.assert_allclose(np.sort(lam), [-0.2] * 5 + [1.0], atol=1e-12)
    ring = np.sort(normalized_spectrum(ring_graph(6)).eigenvalues)
    oracle = np.sort(np.cos(2 * np.pi * np.arange(6) / 6))
    np.testing.assert_allclose(ring, oracle, atol=1e-12)
    np.testing.assert_allclose(np.sort(normalized_spectrum(graph_from_edges(2, [(0, 1)])).eigenvalues), [-1, 1], atol=1e-14)


def test_normalized_spectrum_zero_degree():
    with pytest.raises(ZeroDegree):
        normalized_spectrum(graph_from_edges(3, [(0, 1)]))


@given(graphs())
@settings(max_examples=60, deadline=None)
def test_spectral_decomposition_invariants(W):
    spec = laplacian_spectrum(W)
    L = laplacian(W)
    V = spec.eigenvectors
    assert np.linalg.norm(L - spec.reconstruct()) <= 1e-10 * (1 + np.linalg.norm(L))
    assert np.linalg.norm(V.T @ V - np.eye(W.n)) <= 1e-10 * W.n
    assert np.all(np.diff(spec.eigenvalues) <= 0)
    # multiplicity of zero equals the number of components
    zeros = np.sum(np.abs(spec.eigenvalues) <= 1e-9 * max(1.0, spec.eigenvalues.max()))
    assert zeros == len(connected_components(W))


def test_laplacian_examples():
    np.testing.assert_allclose(np.sort(laplacian_spectrum(complete_graph(6)).eigenvalues), [0, 6, 6, 6, 6, 6], atol=1e-12)
    np.testing.assert_allclose(laplacian_spectrum(np.zeros((3, 3))).eigenvalues, 0, atol=0)
    rng = np.random.default_rng(3)
    W = random_areal_graph(8, rng, weighted=True)
    spec = laplacian_spectrum(W)
    v = spec.eigenvectors[:, -1]
    assert abs(spec.eigenvalues[-1]) < 1e-12
    np.testing.assert_allclose(np.abs(v), 1 / np.sqrt(8), atol=1e-12)


def test_count_distinct_examples():
    assert count_distinct([1, 0.5, 0.5, -0.5, -0.5, -1]) == 4
    assert count_distinct([6, 6, 6, 6, 6, 0]) == 2
    assert count_distinct([0, 0, 0]) == 1
    assert count_distinct(normalized_spectrum(ring_graph(6)).eigenvalues) == 4


def test_fully_connected_and_figure1():
    g = figure1_graphs()
    assert set(g) == {"a", "b", "c", "d"}
    assert all(W.n == 6 for W in g.values())
    assert is_fully_connected(g["b"])
    assert not is_fully_connected(g["d"])


def test_graph_files_roundtrip(tmp_path):
    W = random_areal_graph(7, np.random.default_rng(0), weighted=True)
    write_dense_csv(W, tmp_path / "w.csv")
    np.testing.assert_array_equal(load_graph(tmp_path / "w.csv").entries, W.entries)
    (tmp_path / "e.txt").write_text("# ring\n0 1\n1 2\n2 0 2.5\n")
    E = read_edge_list(tmp_path / "e.txt")
    assert E.n == 3 and E.entries[0, 2] == 2.5 and E.entries[0, 1] == 1.0
