from collections import deque

import numpy as np
import pytest

from anydispatch.graph import (GraphError, Network, build_cycle, build_k_hop_cycle,
                               check_uniform_connectivity, from_edges, laplacian, spectrum)


def circulant_eigs(n, k, w=1.0):
    m = np.arange(n)
    return np.sort(sum(2 * w * (1 - np.cos(2 * np.pi * m * d / n)) for d in range(1, k + 1)))


def bfs_connected(adj):
    n = adj.shape[0]
    seen, q = {0}, deque([0])
    while q:
        i = q.popleft()
        for j in np.flatnonzero(adj[i]):
            if j not in seen:
                seen.add(int(j))
                q.append(int(j))
    return len(seen) == n


def test_cycle_structure():
    net = build_cycle(10, 1.0)
    assert net.n == 10
    assert len(net.edges) == 10
    assert all(len(nb) == 2 for nb in net.neighbors)
    assert np.array_equal(net.weights, net.weights.T)


def test_triangle_spectrum():
    sp = spectrum(build_cycle(3, 1.0))
    assert np.allclose(sp.eigenvalues, [0, 3, 3], atol=1e-12)
    assert sp.lambda2 == pytest.approx(3.0)
    assert sp.lambdaN == pytest.approx(3.0)


def test_cycle10_spectrum():
    sp = spectrum(build_cycle(10))
    assert sp.lambda2 == pytest.approx(2 - 2 * np.cos(2 * np.pi / 10), abs=1e-12)
    assert sp.lambda2 == pytest.approx(0.381966, abs=1e-6)
    assert sp.lambdaN == pytest.approx(4.0, abs=1e-12)


@pytest.mark.parametrize("n,k", [(10, 1), (10, 2), (7, 3), (12, 4), (9, 2)])
def test_circulant_eigenvalues(n, k):
    sp = spectrum(build_k_hop_cycle(n, k, 1.0))
    assert np.allclose(sp.eigenvalues, circulant_eigs(n, k), atol=1e-9)


def test_two_hop_ring():
    net = build_k_hop_cycle(10, 2, 1.0)
    assert all(len(nb) == 4 for nb in net.neighbors)
    # circulant maximum sits at m = 3: 4 + sqrt(5)
    assert spectrum(net).lambdaN == pytest.approx(4 + np.sqrt(5), abs=1e-9)


def test_one_hop_is_ring():
    assert np.array_equal(build_k_hop_cycle(10, 1, 1.0).weights, build_cycle(10, 1.0).weights)


@pytest.mark.parametrize("n,k", [(4, 2), (2, 1), (6, 3)])
def test_k_hop_rejects_small_rings(n, k):
    with pytest.raises(GraphError):
        build_k_hop_cycle(n, k)


def test_cycle_rejects_degenerate():
    with pytest.raises(GraphError):
        build_cycle(2)
    with pytest.raises(GraphError):
        build_cycle(5, 0.0)


@pytest.mark.parametrize("w", [
    [[0, 1], [2, 0]],
    [[0, -1], [-1, 0]],
    [[1, 1], [1, 0]],
    [[0, np.nan], [np.nan, 0]],
    [[0, 1, 0], [1, 0, 1]],
])
def test_network_validation(w):
    with pytest.raises(GraphError):
        Network(np.array(w, float))


def test_laplacian_examples():
    assert np.array_equal(laplacian(from_edges(2, [(0, 1)])), [[1, -1], [-1, 1]])
    L = laplacian(build_cycle(3))
    assert np.array_equal(np.diag(L), [2, 2, 2])
    assert np.all(L[~np.eye(3, dtype=bool)] == -1)
    assert np.allclose(laplacian(build_cycle(10)) @ np.ones(10), 0, atol=1e-15)


def test_disconnected_pair_of_edges():
    net = from_edges(4, [(0, 1), (2, 3)])
    sp = spectrum(net)
    assert abs(sp.lambda2) <= 1e-10
    assert not net.is_connected
    assert not sp.connected


def test_connectivity_against_bfs():
    rng = np.random.default_rng(3)
    for _ in range(200):
        n = int(rng.integers(2, 9))
        w = np.triu(rng.random((n, n)) < 0.3, 1).astype(float)
        w = w + w.T
        net = Network(w)
        assert net.is_connected == bfs_connected(w > 0)
        assert spectrum(net).connected == net.is_connected


def test_csr_matches_dense():
    net = build_k_hop_cycle(9, 2, 0.7)
    indptr, indices, weights, link_of = net.csr()
    dense = np.zeros((9, 9))
    for i in range(9):
        for e in range(indptr[i], indptr[i + 1]):
            dense[i, indices[e]] = weights[e]
            a, b, _ = net.edges[link_of[e]]
            assert {a, b} == {i, int(indices[e])}
    assert np.array_equal(dense, net.weights)


def test_weight_scaling_doubles_spectrum():
    a = spectrum(build_k_hop_cycle(11, 3, 1.0))
    b = spectrum(build_k_hop_cycle(11, 3, 2.0))
    assert b.lambda2 == pytest.approx(2 * a.lambda2, rel=1e-12)
    assert b.lambdaN == pytest.approx(2 * a.lambdaN, rel=1e-12)


def test_uniform_connectivity():
    ring = build_cycle(6)
    assert check_uniform_connectivity([ring], 1)
    even = from_edges(6, [(0, 1), (2, 3), (4, 5)])
    odd = from_edges(6, [(1, 2), (3, 4), (5, 0)])
    seq = [even, odd] * 5
    assert check_uniform_connectivity(seq, 2)
    assert not check_uniform_connectivity(seq, 1)
    isolated = from_edges(4, [(0, 1), (1, 2)])
    for window in (1, 2, 5):
        assert not check_uniform_connectivity([isolated] * 6, window)
    with pytest.raises(GraphError):
        check_uniform_connectivity([ring, build_cycle(5)], 2)


def test_laplacian_rayleigh_bounds():
    rng = np.random.default_rng(19)
    for _ in range(1000):
        n = int(rng.integers(3, 9))
        w = np.triu(rng.uniform(0.1, 2.0, (n, n)) * (rng.random((n, n)) < 0.6), 1)
        for i in range(n):
            w[i, (i + 1) % n] = w[(i + 1) % n, i] = max(w[i, (i + 1) % n], w[(i + 1) % n, i], 0.5)
        w = np.triu(w, 1)
        net = Network(w + w.T)
        sp = spectrum(net)
        L = laplacian(net)
        z = rng.normal(size=n) * rng.uniform(0.1, 10)
        zbar = z - z.mean()
        q = z @ L @ z
        nrm = zbar @ zbar
        assert sp.lambda2 * nrm <= q * (1 + 1e-9) + 1e-12
        assert q <= sp.lambdaN * nrm * (1 + 1e-9) + 1e-12
