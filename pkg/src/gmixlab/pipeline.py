"""Run orchestration shared by the HTTP service and its clients.

Turns plain request fields (bias names, comparator shorthands, flat
hyperparameter values) into dataset loads, split manifests, and full
training reports.
"""

from __future__ import annotations

import os

from .data import (
    ParsedDataset,
    SplitResult,
    SplitSpec,
    biased_split,
    derive_threshold,
    load_dataset,
    split_manifest,
)
from .errors import ConfigError
from .training import TrainConfig, train

DATA_ROOT_VAR = "GMIXLAB_DATA_ROOT"

BIAS_TO_CRITERION = {"nodes": "node_count", "edges": "edge_count", "density": "density"}
CMP_TO_COMPARATOR = {"lt": "less_than", "gt": "greater_than"}


def resolve_dataset_dir(path: str) -> str:
    """Accept a dataset directory path or a bare name under the data root.

    Bare names (no path separator) are looked up inside the directory
    named by the GMIXLAB_DATA_ROOT environment variable.
    """
    if os.path.isdir(path):
        return path
    if os.path.sep not in path:
        root = os.environ.get(DATA_ROOT_VAR)
        if root:
            candidate = os.path.join(root, path)
            if os.path.isdir(candidate):
                return candidate
            raise ConfigError(
                f"--dataset-dir: no dataset directory at {path!r} or {candidate!r}"
            )
        raise ConfigError(
            f"--dataset-dir: no dataset directory at {path!r}"
            f" (set {DATA_ROOT_VAR} to resolve bare names)"
        )
    raise ConfigError(f"--dataset-dir: no dataset directory at {path!r}")


def prepare_split(
    dataset_dir: str,
    bias: str,
    cmp: str,
    threshold: float | None,
    qualify_count: int | None,
    train_count: int,
    val_count: int,
    seed: int,
) -> tuple[ParsedDataset, dict, SplitResult]:
    """Load a dataset and build its biased split plus manifest.

    Exactly one of threshold / qualify_count must be given; the latter
    derives the threshold so close to that many graphs qualify.
    """
    if bias not in BIAS_TO_CRITERION:
        raise ConfigError(f"--bias: unknown value {bias!r}; expected one of {sorted(BIAS_TO_CRITERION)}")
    if cmp not in CMP_TO_COMPARATOR:
        raise ConfigError(f"--cmp: unknown value {cmp!r}; expected one of {sorted(CMP_TO_COMPARATOR)}")
    if (threshold is None) == (qualify_count is None):
        raise ConfigError("provide exactly one of --threshold / --qualify-count")

    dataset = load_dataset(resolve_dataset_dir(dataset_dir))
    criterion = BIAS_TO_CRITERION[bias]
    comparator = CMP_TO_COMPARATOR[cmp]

    derived: dict | None = None
    if qualify_count is not None:
        threshold, achieved = derive_threshold(dataset.graphs, criterion, comparator, qualify_count)
        derived = {"target_count": qualify_count, "achieved_count": achieved}

    spec = SplitSpec(
        criterion=criterion,
        comparator=comparator,
        threshold=float(threshold),
        train_count=train_count,
        val_count=val_count,
    )
    split = biased_split(dataset.graphs, spec, seed)
    manifest = split_manifest(dataset.name, spec, seed, split, dataset.label_map)
    if derived is not None:
        manifest["derived_threshold"] = derived
    return dataset, manifest, split


def run_training(
    dataset_dir: str,
    bias: str,
    cmp: str,
    threshold: float | None,
    qualify_count: int | None,
    train_count: int,
    val_count: int,
    seed: int,
    method: str,
    epochs: int,
    lr: float,
    batch: int,
    hidden: int,
    layers: int,
    embed_dim: int,
    alpha: float,
    beta: float,
    tail: int,
    patience: int,
) -> dict:
    """Full job: split the dataset, train, and return the run report."""
    dataset, manifest, split = prepare_split(
        dataset_dir, bias, cmp, threshold, qualify_count, train_count, val_count, seed
    )
    config = TrainConfig(
        method=method,
        epochs=epochs,
        lr=lr,
        batch_size=batch,
        hidden_dim=hidden,
        layers=layers,
        embed_dim=embed_dim,
        alpha=alpha,
        beta=beta,
        tail=tail,
        patience=patience,
        seed=seed,
    )
    return train(
        dataset.graphs,
        split.train_ids,
        split.val_ids,
        split.test_ids,
        config,
        dataset_name=dataset.name,
        split_manifest=manifest,
    )
