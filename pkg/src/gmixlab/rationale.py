"""Learnable rationale extraction: soft structure and feature masking.

The structure mask weights every existing edge {i, j} with
sigmoid(H_i . H_j), where H projects the raw node features through a
single linear map.  The feature mask scales each feature column by a
sigmoid of a free logit, so masked features stay a smooth reweighting
of the originals.  Non-edges are never weighted: the masked adjacency
is the elementwise product of the mask with the 0/1 adjacency.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import DiffMatrix
from .data import Graph
from .errors import ContractError


@dataclass
class RationaleParams:
    """W_m: d x p projection for the structure mask; eta_raw: 1 x d
    feature-mask logits (sigmoid keeps the realized mask in (0, 1))."""

    W_m: np.ndarray
    eta_raw: np.ndarray

    def __post_init__(self):
        self.W_m = np.atleast_2d(np.asarray(self.W_m, dtype=np.float64))
        self.eta_raw = np.atleast_2d(np.asarray(self.eta_raw, dtype=np.float64))
        if self.eta_raw.shape[0] != 1:
            raise ContractError(f"eta_raw must be a row vector, got shape {self.eta_raw.shape}")
        if self.W_m.shape[0] != self.eta_raw.shape[1]:
            raise ContractError(
                f"W_m has {self.W_m.shape[0]} feature rows but eta_raw has length {self.eta_raw.shape[1]}"
            )
        if self.W_m.shape[1] < 1:
            raise ContractError("projection dimension must be at least 1")


def _check_features(graph: Graph, d: int) -> None:
    if graph.features.shape[1] == 0:
        raise ContractError(
            f"graph {graph.id} has no node features; run synthesize_degree_features first"
        )
    if graph.features.shape[1] != d:
        raise ContractError(
            f"graph {graph.id} has {graph.features.shape[1]} feature columns, parameters expect {d}"
        )


def _stable_sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def structure_mask(graph: Graph, params: RationaleParams) -> dict[tuple[int, int], float]:
    """Edge-weight map sigmoid(H_i . H_j) restricted to existing edges."""
    _check_features(graph, params.W_m.shape[0])
    h = graph.features @ params.W_m
    weights: dict[tuple[int, int], float] = {}
    for i, j in graph.edges:
        weights[(i, j)] = float(_stable_sigmoid(np.array([h[i] @ h[j]]))[0])
    return weights


def apply_feature_mask(graph: Graph, params: RationaleParams) -> np.ndarray:
    """Masked features: sigmoid(eta_raw) broadcast over nodes, times X."""
    _check_features(graph, params.eta_raw.shape[1])
    return _stable_sigmoid(params.eta_raw) * graph.features


def feature_mask_node(features: DiffMatrix, eta_raw: DiffMatrix) -> DiffMatrix:
    """Differentiable feature mask over a constant feature matrix."""
    if eta_raw.shape != (1, features.shape[1]):
        raise ContractError(
            f"eta_raw shape {eta_raw.shape} does not match feature width {features.shape[1]}"
        )
    return ad.mul_row(features, ad.sigmoid(eta_raw))


def masked_adjacency_node(
    features: DiffMatrix, adjacency: DiffMatrix, w_m: DiffMatrix
) -> DiffMatrix:
    """Differentiable weighted adjacency sigmoid(H H^T) * A.

    The sigmoid is computed densely and zeroed by the 0/1 adjacency,
    which is identical to masking existing edges only.
    """
    if features.shape[1] != w_m.shape[0]:
        raise ContractError(
            f"feature width {features.shape[1]} does not match projection rows {w_m.shape[0]}"
        )
    h = ad.matmul(features, w_m)
    scores = ad.matmul(h, ad.transpose(h))
    return ad.mul(ad.sigmoid(scores), adjacency)
