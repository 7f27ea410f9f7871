"""Shared fixtures for the simulator test suites."""

import os

# Must be set before src.config.settings is imported by any test module.
os.environ.setdefault('ENVIRONMENT', 'testing')

import numpy as np
import pytest

from src.backend.graph import Graph, baseline_graph
from src.backend.kernel import Kernel


@pytest.fixture
def gaussian_kernel():
    """Gaussian kernel exp(-(x-y)^2) on [-2, 4]."""
    return Kernel.gaussian(1.0)


@pytest.fixture
def network():
    """The 10-node baseline network."""
    return baseline_graph()


@pytest.fixture
def pair_graph():
    """Two nodes joined by a unit-weight edge."""
    return Graph.from_edges(2, [(1, 2, 1.0)])


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture
def random_connected_graph():
    """
    Factory for connected graphs: a random spanning tree plus random extra edges,
    weights uniform on [0.2, 1].
    """
    def build(n_nodes: int, rng: np.random.Generator, extra_edge_prob: float = 0.3) -> Graph:
        w = np.zeros((n_nodes, n_nodes))
        order = rng.permutation(n_nodes)
        for pos in range(1, n_nodes):
            i, j = order[pos], order[rng.integers(pos)]
            w[i, j] = w[j, i] = rng.uniform(0.2, 1.0)
        for i in range(n_nodes):
            for j in range(i + 1, n_nodes):
                if w[i, j] == 0.0 and rng.random() < extra_edge_prob:
                    w[i, j] = w[j, i] = rng.uniform(0.2, 1.0)
        return Graph(w)

    return build
