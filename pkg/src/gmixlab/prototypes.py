"""Prototype-based metric classifier.

Each class is represented by the arithmetic mean of its training
embeddings; classification measures squared Euclidean distance to the
prototypes and applies a softmax over negated distances.  Prototypes
are plain buffers: they are recomputed from gradient-free embeddings
and never receive gradients.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractError, TrainingError


@dataclass(frozen=True)
class PrototypeSet:
    """K prototype rows, the class counts they were averaged from, and
    the epoch at which they were last refreshed."""

    prototypes: np.ndarray
    counts: np.ndarray
    epoch: int | None = None

    def __post_init__(self):
        if self.prototypes.ndim != 2 or self.prototypes.shape[0] < 2:
            raise ContractError(
                f"need at least 2 prototype rows, got shape {self.prototypes.shape}"
            )
        if self.counts.shape != (self.prototypes.shape[0],):
            raise ContractError("counts must have one entry per prototype")
        if np.any(self.counts < 1):
            raise ContractError("every class count must be at least 1")

    @property
    def n_classes(self) -> int:
        return self.prototypes.shape[0]

    @property
    def dim(self) -> int:
        return self.prototypes.shape[1]


def compute_prototypes(
    embeddings: list[tuple[np.ndarray, int]],
    n_classes: int | None = None,
    epoch: int | None = None,
) -> PrototypeSet:
    """Per-class arithmetic means of (embedding, label) pairs."""
    if not embeddings:
        raise TrainingError("cannot compute prototypes from an empty embedding set")
    labels = np.array([label for _, label in embeddings])
    if n_classes is None:
        n_classes = int(labels.max()) + 1
    dim = np.asarray(embeddings[0][0]).shape[0]
    sums = np.zeros((n_classes, dim), dtype=np.float64)
    counts = np.zeros(n_classes, dtype=np.int64)
    for z, label in embeddings:
        if not 0 <= label < n_classes:
            raise TrainingError(f"label {label} outside 0..{n_classes - 1}")
        sums[label] += np.asarray(z, dtype=np.float64)
        counts[label] += 1
    for k in range(n_classes):
        if counts[k] == 0:
            raise TrainingError(f"class {k} has no embeddings to average")
    return PrototypeSet(prototypes=sums / counts[:, None], counts=counts, epoch=epoch)


def sq_euclidean(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ContractError(f"vector lengths differ: {a.shape} vs {b.shape}")
    diff = a - b
    return float(diff @ diff)


def distances_to_prototypes(z: np.ndarray, protos: PrototypeSet) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    if z.shape != (protos.dim,):
        raise ContractError(f"embedding length {z.shape} does not match prototype dim {protos.dim}")
    diff = protos.prototypes - z[None, :]
    return np.einsum("ij,ij->i", diff, diff)


def class_probabilities(z: np.ndarray, protos: PrototypeSet) -> np.ndarray:
    """Softmax over negated squared distances, computed with max-subtraction."""
    d = distances_to_prototypes(z, protos)
    logits = -d
    logits -= logits.max()
    weights = np.exp(logits)
    return weights / weights.sum()


def predict(z: np.ndarray, protos: PrototypeSet) -> int:
    """Nearest-prototype class; exact ties go to the lowest class index."""
    return int(np.argmin(distances_to_prototypes(z, protos)))
