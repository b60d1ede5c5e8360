"""Same-label manifold mixup in embedding space.

Virtual samples interpolate two embeddings of one class: a class is
drawn proportional to its size, a pair (i, j) is drawn uniformly with
replacement within the class (i = j allowed, reproducing a real
sample), and the mixing weight comes fresh from Beta(alpha, beta).
Labels stay pure because both sources share one class.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractError, TrainingError


@dataclass
class MixupConfig:
    alpha: float = 2.0
    beta: float = 2.0
    virtual_count_per_epoch: int | None = None
    seed: int = 0

    def __post_init__(self):
        if self.alpha <= 0 or self.beta <= 0:
            raise ContractError("alpha and beta must be positive")
        if self.virtual_count_per_epoch is not None and self.virtual_count_per_epoch < 1:
            raise ContractError("virtual_count_per_epoch must be positive when given")


@dataclass
class VirtualSample:
    """One interpolated sample: endpoints are indices into the embedding
    sequence it was generated from; omega/omega_bar are filled later by
    the calibration stage."""

    z_tilde: np.ndarray
    label: int
    lam: float
    source_i: int
    source_j: int
    omega: float | None = None
    omega_bar: float | None = None


def sample_beta(alpha: float, beta: float, rng: np.random.Generator) -> float:
    if alpha <= 0 or beta <= 0:
        raise ContractError("alpha and beta must be positive")
    return float(rng.beta(alpha, beta))


def mix_pair(z_i: np.ndarray, z_j: np.ndarray, lam: float) -> np.ndarray:
    """Convex combination of two embeddings; lam=1 returns z_i exactly."""
    z_i = np.asarray(z_i, dtype=np.float64)
    z_j = np.asarray(z_j, dtype=np.float64)
    return lam * z_i + (1.0 - lam) * z_j


def generate_virtual_batch(
    embeddings: list[tuple[np.ndarray, int]],
    config: MixupConfig,
    rng: np.random.Generator,
) -> list[VirtualSample]:
    """Emit virtual samples realizing the vicinal training distribution.

    The count defaults to the number of real embeddings, keeping epoch
    cost comparable to training on the real samples.
    """
    if not embeddings:
        raise TrainingError("cannot mix an empty embedding set")
    labels = np.array([label for _, label in embeddings])
    n_classes = int(labels.max()) + 1
    members: list[np.ndarray] = []
    for k in range(n_classes):
        idx = np.flatnonzero(labels == k)
        if idx.size == 0:
            raise TrainingError(f"class {k} has no embeddings to mix")
        members.append(idx)
    counts = np.array([m.size for m in members], dtype=np.float64)
    class_probs = counts / counts.sum()

    count = config.virtual_count_per_epoch or len(embeddings)
    samples: list[VirtualSample] = []
    for _ in range(count):
        k = int(rng.choice(n_classes, p=class_probs))
        pool = members[k]
        i = int(pool[rng.integers(0, pool.size)])
        j = int(pool[rng.integers(0, pool.size)])
        lam = sample_beta(config.alpha, config.beta, rng)
        samples.append(
            VirtualSample(
                z_tilde=mix_pair(embeddings[i][0], embeddings[j][0], lam),
                label=k,
                lam=lam,
                source_i=i,
                source_j=j,
            )
        )
    return samples
