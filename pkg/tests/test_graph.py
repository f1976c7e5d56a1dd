import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given
from hypothesis import strategies as st

from e2cp import KernelMatrix, build_knn_graph, laplacian, normalized_affinity
from e2cp.graph import export_edges, graph_from_weights, knn_indices

from conftest import random_graph


def _brute_knn_weights(a, k):
    """Neighbour sets by enumeration: j is kept when fewer than k others beat it (ties to smaller index)."""
    n = a.shape[0]
    w = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            beats = sum(1 for t in range(n) if t not in (i, j)
                        and (a[i, t] > a[i, j] or (a[i, t] == a[i, j] and t < j)))
            if beats < k:
                w[i, j] = a[i, j] / np.sqrt(a[i, i] * a[j, j])
    return (w + w.T) / 2


def test_four_point_block_kernel():
    a = np.array([[1, .9, .1, .1], [.9, 1, .1, .1], [.1, .1, 1, .9], [.1, .1, .9, 1]])
    w = build_knn_graph(KernelMatrix(a), 1).weights.toarray()
    expected = np.zeros((4, 4))
    expected[0, 1] = expected[1, 0] = expected[2, 3] = expected[3, 2] = 0.9
    np.testing.assert_array_equal(w, expected)


def test_full_neighbourhood_reproduces_kernel():
    g = random_graph(12, k=11, seed=1)
    a = np.array(g.weights.toarray())
    pts_kernel = a + np.eye(12)
    # weights are the kernel itself off the diagonal (unit kernel diagonal)
    assert np.all(np.diag(a) == 0)
    assert np.allclose(pts_kernel, pts_kernel.T)
    assert g.weights.nnz == 12 * 11


def test_one_sided_neighbour_is_halved():
    # 2 is the nearest neighbour of 1 but 1 is not the nearest of 2
    a = np.array([[1, .9, .2], [.9, 1, .5], [.2, .5, 1]])
    w = build_knn_graph(KernelMatrix(a), 1).weights.toarray()
    assert w[0, 1] == 0.9
    assert w[1, 2] == pytest.approx(0.25)
    assert w[0, 2] == 0.0


def test_hub_row_can_exceed_two_k():
    # point 0 sits at the centre and is everybody's nearest neighbour
    ang = np.linspace(0, 2 * np.pi, 6)[:-1]
    pts = np.vstack([[0.0, 0.0], np.column_stack([np.cos(ang), np.sin(ang)])])
    a = np.exp(-((pts[:, None] - pts[None]) ** 2).sum(-1))
    g = build_knn_graph(KernelMatrix(a), 1)
    assert g.weights[0].nnz == 5 > 2 * g.k


def test_ties_go_to_smaller_index():
    a = np.ones((4, 4)) * 0.5 + 0.5 * np.eye(4)
    assert knn_indices(a, 2).tolist() == [[1, 2], [0, 2], [0, 1], [0, 1]]


@given(st.integers(4, 15), st.integers(1, 6), st.integers(0, 10_000))
def test_knn_matches_enumeration(n, k, seed):
    rng = np.random.default_rng(seed)
    # coarse values force ties
    x = rng.integers(0, 4, size=(n, 2)).astype(float)
    a = np.exp(-((x[:, None, :] - x[None, :, :]) ** 2).sum(-1) / 4.0)
    k = min(k, n - 1)
    w = build_knn_graph(KernelMatrix(a), k).weights.toarray()
    np.testing.assert_allclose(w, _brute_knn_weights(a, k), atol=1e-15)


@given(st.integers(5, 40), st.integers(1, 8), st.integers(0, 10_000))
def test_graph_invariants(n, k, seed):
    g = random_graph(n, k, seed)
    w = g.weights
    k = g.k
    assert abs(w - w.T).max() < 1e-15
    assert w.data.min() >= 0 and w.data.max() <= 1
    assert np.all(w.diagonal() == 0)
    # a hub can exceed 2k entries in its own row; the bounds below always hold
    per_row = np.diff(w.indptr)
    assert np.all(per_row >= k) and w.nnz <= 2 * k * n
    np.testing.assert_allclose(g.degrees, np.asarray(w.sum(axis=1)).ravel())
    assert np.all(g.degrees > 0)


@pytest.mark.parametrize("k", [0, 5])
def test_k_out_of_range(k):
    with pytest.raises(ValueError, match="k must lie"):
        build_knn_graph(KernelMatrix(np.eye(5)), k if k == 0 else 5)


def test_isolated_vertex_gets_self_loop():
    g = graph_from_weights(np.array([[0, 1.0, 0], [1.0, 0, 0], [0, 0, 0]]))
    assert g.weights[2, 2] == 1.0 and g.degrees[2] == 1.0


def test_zero_kernel_row_triggers_self_loop():
    a = np.array([[1, 0.5, 0], [0.5, 1, 0], [0, 0, 1.0]])
    g = build_knn_graph(KernelMatrix(a), 1)
    assert g.weights[2, 2] == 1.0


def test_two_node_normalized_affinity():
    g = graph_from_weights(np.array([[0, 0.5], [0.5, 0]]))
    np.testing.assert_allclose(normalized_affinity(g).values.toarray(), [[0, 1], [1, 0]], atol=1e-15)


def test_self_loop_graph_is_identity():
    g = graph_from_weights(np.zeros((4, 4)))
    np.testing.assert_array_equal(normalized_affinity(g).values.toarray(), np.eye(4))
    assert abs(laplacian(g)).max() == 0


@given(st.integers(5, 60), st.integers(1, 8), st.integers(0, 10_000))
def test_normalized_affinity_matches_dense_formula(n, k, seed):
    g = random_graph(n, k, seed)
    w = g.weights.toarray()
    d = w.sum(axis=1)
    dense = w / np.sqrt(np.outer(d, d))
    lb = normalized_affinity(g).values.toarray()
    np.testing.assert_allclose(lb, dense, atol=1e-15)
    assert np.max(np.abs(lb - lb.T)) == 0
    # scaling identity: sqrt(d_i) * sum_j lbar_ij sqrt(d_j) = d_i
    np.testing.assert_allclose(np.sqrt(d) * (lb @ np.sqrt(d)), d, rtol=1e-12)


@given(st.integers(5, 60), st.integers(1, 8), st.integers(0, 10_000))
def test_spectra(n, k, seed):
    g = random_graph(n, k, seed)
    lb = np.linalg.eigvalsh(normalized_affinity(g).values.toarray())
    ll = np.linalg.eigvalsh(laplacian(g).toarray())
    assert lb.min() >= -1 - 1e-10 and lb.max() <= 1 + 1e-10
    assert ll.min() >= -1e-10 and ll.max() <= 2 + 1e-10


def test_laplacian_null_vector():
    g = random_graph(30, 6, seed=4)
    lap = laplacian(g)
    assert sp.issparse(lap)
    v = np.sqrt(g.degrees)
    assert np.linalg.norm(lap @ v) < 1e-12 * np.linalg.norm(v)


def test_export_edges(tmp_path):
    g = graph_from_weights(np.array([[0, 0.25, 0], [0.25, 0, 0.5], [0, 0.5, 0]]))
    p = tmp_path / "e.csv"
    export_edges(g, p)
    assert p.read_text() == "0,1,0.25\n1,2,0.5\n"


def test_graph_from_weights_validation():
    with pytest.raises(ValueError, match="symmetric"):
        graph_from_weights(np.array([[0, 1.0], [0.5, 0]]))
    with pytest.raises(ValueError, match="nonnegative"):
        graph_from_weights(np.array([[0, -1.0], [-1.0, 0]]))
