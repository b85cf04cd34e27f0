import itertools
import math
import time

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import sparse

from oracles import (bridge_bruteforce, knn_bruteforce, matrix_power_distance,
                     random_connected_adjacency, window_knn_adjacency)
from s2dl.diffusion import (TAU, build_spatial_knn, diffusion_distance, diffusion_embedding,
                            dump_graph, markov_chain, time_grid, time_horizon)


def _all_pairs(chain, t):
    n = chain.n_nodes
    i, j = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    return diffusion_distance(chain, i, j, t)


# --- graph construction ---------------------------------------------------

def test_window_knn_matches_double_loop(rng):
    for trial in range(5):
        node_ids = np.sort(rng.choice(100, size=50, replace=False))
        spectra = rng.normal(size=(50, 4))
        g = build_spatial_knn(node_ids, spectra, (10, 10), k_n=4, R=2)
        A = window_knn_adjacency(node_ids, spectra, 10, 4, 2)
        A, bridges = bridge_bruteforce(A, spectra)
        np.testing.assert_array_equal(g.W.toarray(), A)
        assert g.bridge_edges == bridges


def test_window_edges_stay_in_window(rng):
    node_ids = np.sort(rng.choice(400, size=120, replace=False))
    g = build_spatial_knn(node_ids, rng.normal(size=(120, 3)), (20, 20), k_n=5, R=3)
    rc = np.stack(np.divmod(node_ids, 20), axis=1)
    W = g.W.tocoo()
    bridges = set(g.bridge_edges)
    for u, v in zip(W.row, W.col):
        inside = np.abs(rc[u] - rc[v]).max() <= 3
        assert inside or (min(u, v), max(u, v)) in bridges
    assert (g.W != g.W.T).nnz == 0
    assert g.W.diagonal().sum() == 0
    assert g.is_connected()


def test_huge_radius_is_plain_knn(rng):
    node_ids = np.sort(rng.choice(64, size=30, replace=False))
    spectra = rng.normal(size=(30, 3))
    g = build_spatial_knn(node_ids, spectra, (8, 8), k_n=3, R=20)
    ids, _ = knn_bruteforce(spectra, 3)
    A = np.zeros((30, 30), dtype=int)
    for i in range(30):
        A[i, ids[i]] = 1
    A = np.maximum(A, A.T)
    A, bridges = bridge_bruteforce(A, spectra)
    np.testing.assert_array_equal(g.W.toarray(), A)


def test_isolated_node_gets_one_bridge():
    # three nodes in one corner and one alone far away
    node_ids = np.array([0, 1, 10, 99])
    spectra = np.array([[0.0], [1.0], [2.0], [1.4]])
    g = build_spatial_knn(node_ids, spectra, (10, 10), k_n=2, R=1)
    assert g.W[3].nnz == 1
    assert g.bridge_edges == [(1, 3)]  # spectrally closest partner
    assert g.is_connected()


def test_graph_dump(tmp_path, rng):
    node_ids = np.arange(12)
    g = build_spatial_knn(node_ids, rng.normal(size=(12, 2)), (3, 4), k_n=2, R=1)
    chain = markov_chain(g)
    dump_graph(g, tmp_path / "g.csv", chain)
    lines = (tmp_path / "g.csv").read_text().splitlines()
    assert lines[0] == "# R = 1"
    assert any(line.startswith("# spectrum = [1,") for line in lines)
    header = lines.index("i,j,w")
    assert len(lines) - header - 1 == sparse.triu(g.W, 1).nnz


# --- Markov chain -----------------------------------------------------------

def test_two_node_chain():
    chain = markov_chain(sparse.csr_matrix(np.array([[0.0, 1.0], [1.0, 0.0]])))
    np.testing.assert_allclose(chain.P.toarray(), 0.5)
    np.testing.assert_allclose(chain.pi, [0.5, 0.5])
    np.testing.assert_allclose(chain.eigenvalues, [1.0, 0.0], atol=1e-15)
    for t in (1, 2, 5.5):
        assert diffusion_distance(chain, 0, 1, t) == pytest.approx(0.0, abs=1e-15)
    assert diffusion_distance(chain, 0, 1, 0) == pytest.approx(2.0)


@given(st.integers(2, 20), st.integers(0, 2**31))
def test_chain_identities(n, seed):
    A = random_connected_adjacency(np.random.default_rng(seed), n)
    chain = markov_chain(sparse.csr_matrix(A))
    P = chain.P.toarray()
    np.testing.assert_allclose(P.sum(axis=1), 1.0, atol=1e-12)
    np.testing.assert_allclose(chain.pi @ P, chain.pi, atol=1e-8)
    assert abs(chain.pi.sum() - 1) < 1e-12
    np.testing.assert_array_equal(chain.pi, (A.sum(1) + 1) / (A.sum() + n))
    assert chain.eigenvalues[0] == 1.0
    np.testing.assert_array_equal(chain.eigenvectors[:, 0], 1.0)
    assert np.all(np.abs(chain.eigenvalues[1:]) < 1)


def test_pi_matches_power_iteration(rng):
    for _ in range(10):
        A = random_connected_adjacency(rng, 15, p=0.4)
        chain = markov_chain(sparse.csr_matrix(A))
        P = chain.P.toarray()
        p = np.full(15, 1 / 15)
        for _ in range(5000):
            p = p @ P
        np.testing.assert_allclose(p, chain.pi, atol=1e-10)


def test_eigenpairs_match_dense_solver(rng):
    A = random_connected_adjacency(rng, 30, p=0.15)
    chain = markov_chain(sparse.csr_matrix(A), L=30)
    P = chain.P.toarray()
    ref = np.linalg.eigvals(P).real
    ref = ref[np.lexsort((-ref, -np.abs(ref)))]
    np.testing.assert_allclose(chain.eigenvalues, ref, atol=1e-8)
    # right eigenvectors, pi-orthonormal
    V = chain.eigenvectors
    np.testing.assert_allclose(P @ V, V * chain.eigenvalues, atol=1e-8)
    np.testing.assert_allclose(V.T @ (chain.pi[:, None] * V), np.eye(30), atol=1e-8)


def test_sparse_solver_matches_dense(rng):
    n = 700
    A = random_connected_adjacency(rng, n, p=0.004)
    chain = markov_chain(sparse.csr_matrix(A), L=12)  # Lanczos path
    full = markov_chain(sparse.csr_matrix(A), L=n - 1)  # dense path
    np.testing.assert_allclose(chain.eigenvalues, full.eigenvalues[:12], atol=1e-8)
    P = chain.P
    np.testing.assert_allclose(P @ chain.eigenvectors, chain.eigenvectors * chain.eigenvalues, atol=1e-7)
    # subspace alignment for well separated eigenvalues
    gaps = np.abs(np.diff(full.eigenvalues[:13]))
    for k in range(1, 12):
        if min(gaps[k - 1], gaps[k]) > 1e-4:
            overlap = abs(np.sum(chain.pi * chain.eigenvectors[:, k] * full.eigenvectors[:, k]))
            assert overlap == pytest.approx(1.0, abs=1e-6)


def test_disconnected_graph_rejected():
    with pytest.raises(ValueError):
        markov_chain(sparse.csr_matrix(np.zeros((3, 3))))


# --- diffusion distance -------------------------------------------------------

def test_spectral_distance_matches_matrix_powers():
    rng = np.random.default_rng(2024)
    start = time.perf_counter()
    worst = 0.0
    for _ in range(100):
        n = int(rng.integers(2, 26))
        A = random_connected_adjacency(rng, n, p=float(rng.uniform(0.05, 0.6)))
        chain = markov_chain(sparse.csr_matrix(A))
        for t in (0, 1, 2, 4, 8):
            worst = max(worst, np.abs(_all_pairs(chain, t) - matrix_power_distance(A, t)).max())
    assert worst <= 1e-8
    assert time.perf_counter() - start < 10


@given(st.integers(3, 20), st.integers(0, 2**31))
def test_distance_properties(n, seed):
    rng = np.random.default_rng(seed)
    chain = markov_chain(sparse.csr_matrix(random_connected_adjacency(rng, n)))
    D = np.stack([_all_pairs(chain, t) for t in range(0, 9)])
    np.testing.assert_array_equal(np.diagonal(D, axis1=1, axis2=2), 0.0)
    np.testing.assert_allclose(D, np.transpose(D, (0, 2, 1)), atol=1e-12)
    assert np.all(np.diff(D, axis=0) <= 1e-12)
    for i, j, k in itertools.islice(itertools.permutations(range(n), 3), 200):
        assert D[3, i, j] <= D[3, i, k] + D[3, k, j] + 1e-12


def test_truncation_bound(rng):
    for _ in range(20):
        n = int(rng.integers(6, 20))
        A = sparse.csr_matrix(random_connected_adjacency(rng, n))
        full = markov_chain(A)
        L = int(rng.integers(2, n))
        cut = markov_chain(A, L=L)
        for t in (0, 1, 3):
            i, j = np.triu_indices(n, 1)
            tail = full.eigenvectors[:, L:]
            w = np.abs(full.eigenvalues[L:]) ** (2 * t)
            bound = np.sqrt(np.sum(w * (tail[i] - tail[j]) ** 2, axis=1))
            diff = np.abs(diffusion_distance(cut, i, j, t) - diffusion_distance(full, i, j, t))
            assert np.all(diff <= bound + 1e-10)


def test_embedding_distance_agrees(rng):
    chain = markov_chain(sparse.csr_matrix(random_connected_adjacency(rng, 12)))
    E = diffusion_embedding(chain, 2)
    assert np.linalg.norm(E[3] - E[7]) == pytest.approx(diffusion_distance(chain, 3, 7, 2), rel=1e-12)


# --- time horizon ---------------------------------------------------------------

def test_literal_rule_example():
    # log_0.5(0.002) = 8.966, ceil(log2) = 4
    assert time_horizon(lambda2=0.5, min_pi=0.01, rule="literal") == 4
    assert time_grid(4) == [0, 1, 2, 4, 8, 16]


def test_zero_lambda_gives_unit_grid():
    assert time_horizon(lambda2=0.0, min_pi=0.1) == 0
    assert time_grid(0) == [0, 1]


def test_bounded_rule_example():
    T = time_horizon(lambda2=0.99, min_pi=1e-4)
    inner = math.log(TAU * 1e-4 / 2) / math.log(0.99)
    assert T == math.ceil(math.log2(inner)) == 12


def test_horizon_end_is_converged_on_small_chain():
    # lazy walk on a 25-node path: |lambda_2| close to 0.99
    n = 25
    A = np.zeros((n, n), dtype=int)
    for i in range(n - 1):
        A[i, i + 1] = A[i + 1, i] = 1
    chain = markov_chain(sparse.csr_matrix(A))
    assert abs(chain.eigenvalues[1]) > 0.98
    T = time_horizon(chain)
    D = matrix_power_distance(A, 2**T)
    assert D.max() <= TAU
    assert np.all(_all_pairs(chain, 2**T) <= TAU)
    # the literal rule stops earlier
    assert time_horizon(chain, rule="literal") <= T


def test_horizon_rejects_unit_lambda():
    with pytest.raises(ValueError):
        time_horizon(lambda2=1.0, min_pi=0.1)
