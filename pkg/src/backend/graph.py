"""
Graph Module
Weighted undirected communication graphs: Laplacian construction and connectivity analysis.

The consensus term of the learning recursion and the joint positivity check both
act through the graph Laplacian L = D - A. Graphs are dense; the networks simulated
here have at most a few hundred nodes.
"""

from dataclasses import dataclass, field
from typing import Iterable, List, Sequence, Tuple

import networkx as nx
import numpy as np

from src.backend.errors import GraphError
from src.utils.helpers import frozen

# Edge list of the 10-node baseline network, 1-based (i, j, a_ij).
BASELINE_EDGES: Tuple[Tuple[int, int, float], ...] = (
    (1, 2, 0.2),
    (1, 4, 0.4),
    (2, 3, 0.1),
    (2, 4, 0.3),
    (3, 5, 0.5),
    (4, 5, 0.6),
    (4, 6, 0.8),
    (5, 6, 0.7),
    (6, 7, 0.3),
    (7, 8, 0.2),
    (8, 9, 0.9),
    (9, 10, 0.1),
)


@dataclass(frozen=True, eq=False)
class Graph:
    """
    Weighted undirected graph given by its adjacency matrix.

    Args:
        weights: symmetric n x n matrix, nonnegative, zero diagonal

    Raises:
        GraphError: if the matrix is not a valid adjacency matrix
    """

    weights: np.ndarray = field(repr=False)

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.ndim != 2 or w.shape[0] != w.shape[1] or w.shape[0] == 0:
            raise GraphError(f"adjacency must be a non-empty square matrix, got shape {w.shape}")
        if not np.all(np.isfinite(w)):
            raise GraphError("adjacency contains non-finite weights")
        if not np.array_equal(w, w.T):
            raise GraphError("adjacency is not symmetric")
        if np.any(np.diag(w) != 0.0):
            raise GraphError("adjacency has nonzero diagonal (self loops)")
        if np.any(w < 0.0):
            raise GraphError("adjacency has negative weights")
        object.__setattr__(self, 'weights', frozen(w))

    @property
    def n_nodes(self) -> int:
        return self.weights.shape[0]

    @classmethod
    def from_edges(cls, n_nodes: int, edges: Iterable[Sequence[float]], one_based: bool = True) -> 'Graph':
        """
        Build a graph from an edge list.

        Args:
            n_nodes (int): number of nodes
            edges: iterable of (i, j, weight)
            one_based (bool): whether node indices start at 1

        Returns:
            Graph: the undirected graph with a_ij = a_ji = weight
        """
        if n_nodes < 1:
            raise GraphError(f"n_nodes must be positive, got {n_nodes}")
        offset = 1 if one_based else 0
        w = np.zeros((n_nodes, n_nodes))
        for edge in edges:
            if len(edge) != 3:
                raise GraphError(f"edge {edge!r} is not of the form (i, j, weight)")
            i, j = int(edge[0]) - offset, int(edge[1]) - offset
            weight = float(edge[2])
            if not (0 <= i < n_nodes and 0 <= j < n_nodes):
                raise GraphError(f"edge {edge!r} references a node outside 1..{n_nodes}"
                                 if one_based else f"edge {edge!r} references a node outside 0..{n_nodes - 1}")
            if i == j:
                raise GraphError(f"edge {edge!r} is a self loop")
            if weight < 0:
                raise GraphError(f"edge {edge!r} has a negative weight")
            if w[i, j] != 0.0 and w[i, j] != weight:
                raise GraphError(f"edge {edge!r} conflicts with an earlier weight {w[i, j]}")
            w[i, j] = w[j, i] = weight
        return cls(w)

    def neighbors(self, i: int) -> List[Tuple[int, float]]:
        """Neighbors of node ``i`` (0-based) with their weights."""
        row = self.weights[i]
        return [(int(j), float(row[j])) for j in np.flatnonzero(row > 0.0)]

    def with_edge(self, i: int, j: int, weight: float) -> 'Graph':
        """Return a copy with edge (i, j) (0-based) set to ``weight``."""
        w = np.array(self.weights)
        w[i, j] = w[j, i] = weight
        return Graph(w)

    def edges(self) -> List[Tuple[int, int, float]]:
        """Edge list (0-based, i < j)."""
        rows, cols = np.nonzero(np.triu(self.weights) > 0.0)
        return [(int(i), int(j), float(self.weights[i, j])) for i, j in zip(rows, cols)]


def baseline_graph() -> Graph:
    """The 10-node weighted network used by the baseline experiment."""
    return Graph.from_edges(10, BASELINE_EDGES)


def laplacian(g: Graph) -> np.ndarray:
    """
    Graph Laplacian L = D - A.

    Returns:
        np.ndarray: read-only symmetric matrix with zero row sums
    """
    degrees = g.weights.sum(axis=1)
    return frozen(np.diag(degrees) - g.weights)


def laplacian_spectrum(g: Graph) -> np.ndarray:
    """Ascending eigenvalues of the Laplacian."""
    return np.linalg.eigvalsh(laplacian(g))


def laplacian_norm(g: Graph) -> float:
    """Spectral norm of the Laplacian, i.e. its largest eigenvalue."""
    return float(laplacian_spectrum(g)[-1])


def is_connected(g: Graph) -> bool:
    """True iff a breadth-first traversal over positive-weight edges reaches every node."""
    nx_graph = nx.from_numpy_array(np.asarray(g.weights > 0.0, dtype=int))
    return nx.is_connected(nx_graph)


def algebraic_connectivity(g: Graph) -> float:
    """
    Second-smallest Laplacian eigenvalue.

    Raises:
        GraphError: "graph too small" when the graph has fewer than two nodes
    """
    if g.n_nodes < 2:
        raise GraphError("graph too small: algebraic connectivity needs at least 2 nodes")
    return float(laplacian_spectrum(g)[1])
