"""Built-in miniature graph sets for self-checks and demos.

Paths and cliques with two-channel degree features are linearly
separable under the nearest-prototype classifier, which makes them
useful both as a smoke-test training set and as the workload for the
gradient self-check.
"""

from __future__ import annotations

import numpy as np

from .data import Graph


def path_graph(graph_id: int, n: int, label: int) -> Graph:
    """Path on n nodes; features are [1, normalized log-degree]."""
    edges = [(i, i + 1) for i in range(n - 1)]
    g = Graph(id=graph_id, node_count=n, edges=edges, features=np.zeros((n, 0)), label=label)
    deg = g.degrees()
    second = np.log1p(deg) / np.log1p(deg.max()) if deg.max() > 0 else np.zeros(n)
    g.features = np.column_stack([np.ones(n), second])
    return g


def clique_graph(graph_id: int, n: int, label: int) -> Graph:
    """Complete graph on n nodes; degree features are all [1, 1]."""
    edges = [(i, j) for i in range(n) for j in range(i + 1, n)]
    g = Graph(id=graph_id, node_count=n, edges=edges, features=np.zeros((n, 0)), label=label)
    g.features = np.column_stack([np.ones(n), np.ones(n)])
    return g


def gradcheck_graphs() -> list[Graph]:
    """Five small mixed-topology graphs for the gradient self-check."""
    return [
        path_graph(0, 4, 0),
        path_graph(1, 6, 0),
        clique_graph(2, 4, 1),
        clique_graph(3, 5, 1),
        path_graph(4, 5, 1),
    ]


def demo_trainset() -> list[Graph]:
    """12 separable graphs: paths are class 0, cliques are class 1."""
    graphs = []
    for i, n in enumerate([4, 5, 6, 7, 8, 9]):
        graphs.append(path_graph(i, n, 0))
    for i, n in enumerate([3, 4, 5, 6, 7, 8]):
        graphs.append(clique_graph(6 + i, n, 1))
    return graphs
