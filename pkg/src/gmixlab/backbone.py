"""Graph encoder: weighted-adjacency GCN layers with pooling.

Propagation uses the symmetric normalization D^{-1/2}(A^r + I)D^{-1/2}
over the rationale-weighted adjacency with self-loop weight fixed at 1.
Hidden layers apply ReLU; the last layer is linear so embeddings are
not confined to the nonnegative cone.  Mean pooling is the default;
max pooling sits behind a flag.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import DiffMatrix
from .data import Graph
from .errors import ContractError, NonFiniteError
from .rationale import RationaleParams, feature_mask_node, masked_adjacency_node

POOLINGS = ("mean", "max")


@dataclass
class GcnParams:
    """Per-layer weight matrices (d_l x d_{l+1}) and 1 x d_{l+1} biases."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    pooling: str = "mean"

    def __post_init__(self):
        self.weights = [np.atleast_2d(np.asarray(w, dtype=np.float64)) for w in self.weights]
        self.biases = [np.atleast_2d(np.asarray(b, dtype=np.float64)) for b in self.biases]
        if not 1 <= len(self.weights) <= 3:
            raise ContractError(f"layer count must be 1..3, got {len(self.weights)}")
        if len(self.weights) != len(self.biases):
            raise ContractError(
                f"{len(self.weights)} weight matrices but {len(self.biases)} biases"
            )
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            if b.shape != (1, w.shape[1]):
                raise ContractError(f"layer {l} bias shape {b.shape} does not match width {w.shape[1]}")
            if l > 0 and w.shape[0] != self.weights[l - 1].shape[1]:
                raise ContractError(
                    f"layer {l} expects {w.shape[0]} inputs but layer {l - 1} outputs "
                    f"{self.weights[l - 1].shape[1]}"
                )
        if self.pooling not in POOLINGS:
            raise ContractError(f"unknown pooling {self.pooling!r}; expected one of {POOLINGS}")

    @property
    def output_dim(self) -> int:
        return self.weights[-1].shape[1]


def normalize_adjacency(edge_weights: dict[tuple[int, int], float], n: int) -> np.ndarray:
    """Symmetrically normalized dense matrix over a weighted edge map.

    Adds a self loop of weight 1 to every node, so degrees are >= 1 and
    the normalization is always defined.
    """
    if n < 1:
        raise ContractError("normalize_adjacency needs at least one node")
    a = np.zeros((n, n), dtype=np.float64)
    for (i, j), w in edge_weights.items():
        if not 0.0 < w <= 1.0:
            raise ContractError(f"edge weight for ({i}, {j}) must be in (0, 1], got {w}")
        a[i, j] = w
        a[j, i] = w
    a += np.eye(n)
    inv_sqrt = 1.0 / np.sqrt(a.sum(axis=1))
    return a * inv_sqrt[:, None] * inv_sqrt[None, :]


def normalized_adjacency_node(adjacency_weighted: DiffMatrix) -> DiffMatrix:
    """Differentiable D^{-1/2}(A^r + I)D^{-1/2} given the weighted A^r."""
    n = adjacency_weighted.shape[0]
    with_loops = ad.add(adjacency_weighted, DiffMatrix.constant(np.eye(n)))
    degrees = ad.sum_cols(with_loops)
    inv_sqrt = ad.exp(ad.scale(ad.log(degrees), -0.5))
    return ad.mul_col(ad.mul_row(with_loops, ad.transpose(inv_sqrt)), inv_sqrt)


def encode_node(
    graph: Graph,
    w_m: DiffMatrix,
    eta_raw: DiffMatrix,
    weights: list[DiffMatrix],
    biases: list[DiffMatrix],
    pooling: str = "mean",
) -> DiffMatrix:
    """Differentiable embedding of one graph (1 x M row vector)."""
    if graph.features.shape[1] == 0:
        raise ContractError(
            f"graph {graph.id} has no node features; run synthesize_degree_features first"
        )
    x = DiffMatrix.constant(graph.features)
    a = DiffMatrix.constant(graph.adjacency())
    h = feature_mask_node(x, eta_raw)
    a_hat = normalized_adjacency_node(masked_adjacency_node(x, a, w_m))
    last = len(weights) - 1
    for l, (w, b) in enumerate(zip(weights, biases)):
        h = ad.add_row(ad.matmul(ad.matmul(a_hat, h), w), b)
        if l < last:
            h = ad.relu(h)
    z = ad.mean_rows(h) if pooling == "mean" else ad.max_rows(h)
    if not np.all(np.isfinite(z.values)):
        raise NonFiniteError(f"non-finite embedding for graph {graph.id}")
    return z


def encode(graph: Graph, rationale: RationaleParams, gcn: GcnParams) -> np.ndarray:
    """Embedding as a plain length-M vector (no gradient recording)."""
    if graph.features.shape[1] != rationale.W_m.shape[0]:
        raise ContractError(
            f"graph {graph.id} has {graph.features.shape[1]} feature columns, "
            f"parameters expect {rationale.W_m.shape[0]}"
        )
    with ad.no_grad():
        z = encode_node(
            graph,
            DiffMatrix.constant(rationale.W_m),
            DiffMatrix.constant(rationale.eta_raw),
            [DiffMatrix.constant(w) for w in gcn.weights],
            [DiffMatrix.constant(b) for b in gcn.biases],
            pooling=gcn.pooling,
        )
    return z.values[0].copy()
