"""
Unit Tests for the Graph Module
Tests graph construction, Laplacians and connectivity analysis.
"""

import numpy as np
import pytest

from src.backend.errors import GraphError
from src.backend.graph import (Graph, algebraic_connectivity, is_connected, laplacian,
                               laplacian_norm, laplacian_spectrum)


def random_graph(rng, n, density=0.4, components=1):
    """Random weighted graph whose nodes are split into ``components`` blocks with no edges between them."""
    labels = np.arange(n) % components
    w = np.triu(rng.uniform(0.1, 1.0, (n, n)) * (rng.random((n, n)) < density), k=1)
    w = w * (labels[:, None] == labels[None, :])
    # chain inside each block so the block itself is connected
    for c in range(components):
        members = np.flatnonzero(labels == c)
        for a, b in zip(members[:-1], members[1:]):
            w[a, b] = max(w[a, b], 0.5)
    return Graph(w + w.T)


class TestGraphConstruction:
    """Test suite for Graph validation."""

    def test_from_edges_one_based(self):
        """Test building from a one-based edge list."""
        g = Graph.from_edges(3, [(1, 2, 0.5), (2, 3, 1.5)])
        assert g.n_nodes == 3
        assert g.weights[0, 1] == g.weights[1, 0] == 0.5
        assert g.weights[1, 2] == 1.5
        assert g.weights[0, 2] == 0.0
        print("✅ Edge list test passed")

    def test_rejects_asymmetric(self):
        """Test an asymmetric adjacency matrix."""
        with pytest.raises(GraphError, match="symmetric"):
            Graph(np.array([[0.0, 1.0], [0.5, 0.0]]))
        print("✅ Asymmetric adjacency test passed")

    def test_rejects_negative_weight(self):
        """Test a negative edge weight."""
        with pytest.raises(GraphError):
            Graph.from_edges(2, [(1, 2, -0.1)])
        print("✅ Negative weight test passed")

    def test_rejects_self_loop(self):
        """Test an edge from a node to itself."""
        with pytest.raises(GraphError, match="self loop"):
            Graph.from_edges(2, [(1, 1, 0.3)])
        print("✅ Self loop test passed")

    def test_rejects_out_of_range_node(self):
        """Test an edge to a node beyond n_nodes."""
        with pytest.raises(GraphError):
            Graph.from_edges(3, [(1, 4, 0.3)])
        print("✅ Out of range node test passed")

    def test_rejects_conflicting_duplicate(self):
        """Test the same edge listed twice with different weights."""
        with pytest.raises(GraphError, match="conflicts"):
            Graph.from_edges(3, [(1, 2, 0.3), (2, 1, 0.4)])
        print("✅ Conflicting duplicate test passed")

    def test_weights_are_read_only(self, network):
        """Test that the adjacency cannot be changed in place."""
        with pytest.raises(ValueError):
            network.weights[0, 1] = 5.0
        print("✅ Read-only weights test passed")

    def test_neighbors(self, network):
        """Test neighbor lists of the baseline network."""
        assert network.neighbors(0) == [(1, 0.2), (3, 0.4)]
        assert network.neighbors(9) == [(8, 0.1)]
        print("✅ Neighbors test passed")

    def test_with_edge_returns_new_graph(self, network):
        """Test that with_edge leaves the original untouched."""
        g = network.with_edge(0, 9, 0.7)
        assert g.weights[0, 9] == g.weights[9, 0] == 0.7
        assert network.weights[0, 9] == 0.0
        print("✅ With edge test passed")

    def test_edges_rebuild_the_graph(self, network):
        """Test that edges() feeds back into from_edges."""
        rebuilt = Graph.from_edges(10, network.edges(), one_based=False)
        np.testing.assert_array_equal(rebuilt.weights, network.weights)
        print("✅ Edge rebuild test passed")


class TestLaplacian:
    """Test suite for laplacian and its spectrum."""

    def test_two_node(self):
        """Test the Laplacian of a single edge."""
        L = laplacian(Graph.from_edges(2, [(1, 2, 0.2)]))
        np.testing.assert_array_equal(L, [[0.2, -0.2], [-0.2, 0.2]])
        print("✅ Two-node Laplacian test passed")

    def test_baseline_network(self, network):
        """Test degrees and zero row sums of the baseline network."""
        L = laplacian(network)
        assert L[0, 0] == pytest.approx(0.6)
        assert L[3, 3] == pytest.approx(2.1)
        np.testing.assert_allclose(L.sum(axis=1), 0.0, atol=1e-12)
        print("✅ Baseline Laplacian test passed")

    def test_single_node(self):
        """Test the 1 x 1 zero Laplacian."""
        np.testing.assert_array_equal(laplacian(Graph(np.zeros((1, 1)))), [[0.0]])
        print("✅ Single node Laplacian test passed")

    def test_random_graphs_psd_with_ones_kernel(self, rng):
        """Test L 1 = 0 and positive semidefiniteness on random graphs."""
        for _ in range(50):
            g = random_graph(rng, int(rng.integers(2, 15)))
            L = laplacian(g)
            np.testing.assert_allclose(L.sum(axis=1), 0.0, atol=1e-12)
            np.testing.assert_allclose(L @ np.ones(g.n_nodes), 0.0, atol=1e-12)
            assert laplacian_spectrum(g)[0] >= -1e-10
        print("✅ Random Laplacian test passed")

    def test_laplacian_norm_is_largest_eigenvalue(self, network):
        """Test ||L|| against the spectrum."""
        assert laplacian_norm(network) == pytest.approx(np.max(np.linalg.eigvalsh(laplacian(network))))
        print("✅ Laplacian norm test passed")


class TestConnectivity:
    """Test suite for is_connected and algebraic_connectivity."""

    def test_baseline_network_connected(self, network):
        """Test that the baseline network is connected."""
        assert is_connected(network)
        assert algebraic_connectivity(network) > 0.0
        print("✅ Baseline connectivity test passed")

    def test_two_nodes_without_edge(self):
        """Test two isolated nodes."""
        g = Graph(np.zeros((2, 2)))
        assert not is_connected(g)
        assert algebraic_connectivity(g) == pytest.approx(0.0, abs=1e-12)
        print("✅ Isolated nodes test passed")

    def test_path_graph(self):
        """Test a three-node path."""
        assert is_connected(Graph.from_edges(3, [(1, 2, 1.0), (2, 3, 1.0)]))
        print("✅ Path graph test passed")

    def test_two_node_connectivity_value(self):
        """Test lambda_2 = 2 a_12 on one edge."""
        assert algebraic_connectivity(Graph.from_edges(2, [(1, 2, 0.2)])) == pytest.approx(0.4)
        print("✅ Two-node connectivity test passed")

    def test_graph_too_small(self):
        """Test that one node has no algebraic connectivity."""
        with pytest.raises(GraphError, match="graph too small"):
            algebraic_connectivity(Graph(np.zeros((1, 1))))
        print("✅ Graph too small test passed")

    @pytest.mark.parametrize("components", [1, 2, 3])
    def test_connectivity_agrees_with_spectrum(self, rng, components):
        """Test that traversal and lambda_2 agree on the number of components."""
        for _ in range(20):
            g = random_graph(rng, int(rng.integers(components + 1, 12)), components=components)
            assert is_connected(g) == (algebraic_connectivity(g) > 1e-10)
            assert is_connected(g) == (components == 1)
        print(f"✅ Connectivity with {components} components test passed")

    def test_adding_edges_never_decreases_connectivity(self, rng):
        """Test that heavier edges never lower lambda_2."""
        for _ in range(30):
            g = random_graph(rng, 8, density=0.2)
            i, j = rng.choice(8, size=2, replace=False)
            heavier = g.with_edge(int(i), int(j), g.weights[i, j] + rng.uniform(0.1, 1.0))
            assert algebraic_connectivity(heavier) >= algebraic_connectivity(g) - 1e-10
        print("✅ Monotone connectivity test passed")
