"""Training loops: reweighted virtual-sample training and the ERM baseline.

Each epoch of the main method runs in five stages: a gradient-free
forward pass over the training split, prototype and per-class Weibull
refresh from those embeddings, virtual-sample generation with mixup,
scored mini-batch updates on the weighted negative log-likelihood, and
a validation pass with freshly recomputed prototypes.  The baseline
shares every stage except mixup and calibration: it trains directly on
real graphs with every weight equal to 1.

Gradients flow from the loss through the interpolated embeddings into
their source encodings and from there into mask and GCN parameters.
Prototypes, omega, and omega_bar are constants within an epoch.
"""

from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import DiffMatrix, ParamStore, adam_step, backward_pass
from .backbone import GcnParams, encode_node
from .data import Graph, dump_json
from .errors import ConfigError, ContractError, DivergenceError, NonFiniteError, TrainingError
from .evt import (
    NEUTRAL_OMEGA,
    collect_tail_distances,
    normalize_weights,
    ood_confidence,
    score_virtual_samples,
    weibull_fit_high,
)
from .mixup import MixupConfig, generate_virtual_batch
from .prototypes import (
    PrototypeSet,
    class_probabilities,
    compute_prototypes,
    distances_to_prototypes,
    predict,
)
from .rationale import RationaleParams

METHODS = ("erm", "oodgmixup")
HISTOGRAM_BINS = 10


@dataclass
class TrainConfig:
    method: str = "oodgmixup"
    epochs: int = 200
    lr: float = 0.001
    batch_size: int = 32
    hidden_dim: int = 64
    layers: int = 2
    embed_dim: int = 64
    alpha: float = 2.0
    beta: float = 2.0
    tail: int = 20
    patience: int = 20
    seed: int = 0
    proj_dim: int | None = None
    virtual_per_epoch: int | None = None
    pooling: str = "mean"

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigError(f"unknown method {self.method!r}; expected one of {METHODS}")
        for name in ("epochs", "lr", "batch_size", "hidden_dim", "layers", "embed_dim",
                     "alpha", "beta", "tail", "patience"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if self.layers > 3:
            raise ConfigError("layers must be 1..3")

    def as_dict(self) -> dict:
        return asdict(self)


def init_params(feature_dim: int, config: TrainConfig, rng: np.random.Generator) -> ParamStore:
    """Uniform Glorot-style weights, zero biases and mask logits.

    Zero logits start every feature and edge mask at 0.5, a neutral
    rationale the optimizer can push either way.
    """
    def glorot(fan_in, fan_out):
        limit = math.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-limit, limit, size=(fan_in, fan_out))

    proj = config.proj_dim or config.hidden_dim
    store = ParamStore()
    store.add("rationale.W_m", glorot(feature_dim, proj))
    store.add("rationale.eta_raw", np.zeros((1, feature_dim)))
    dims = [feature_dim] + [config.hidden_dim] * (config.layers - 1) + [config.embed_dim]
    for l in range(config.layers):
        store.add(f"gcn.W{l}", glorot(dims[l], dims[l + 1]))
        store.add(f"gcn.b{l}", np.zeros((1, dims[l + 1])))
    return store


def params_view(store: ParamStore, config: TrainConfig) -> tuple[RationaleParams, GcnParams]:
    """Plain-array view of the store for the gradient-free operations."""
    rationale = RationaleParams(
        W_m=store["rationale.W_m"].values,
        eta_raw=store["rationale.eta_raw"].values,
    )
    gcn = GcnParams(
        weights=[store[f"gcn.W{l}"].values for l in range(config.layers)],
        biases=[store[f"gcn.b{l}"].values for l in range(config.layers)],
        pooling=config.pooling,
    )
    return rationale, gcn


def _encode_graph_node(graph: Graph, store: ParamStore, config: TrainConfig) -> DiffMatrix:
    return encode_node(
        graph,
        store["rationale.W_m"],
        store["rationale.eta_raw"],
        [store[f"gcn.W{l}"] for l in range(config.layers)],
        [store[f"gcn.b{l}"] for l in range(config.layers)],
        pooling=config.pooling,
    )


def embed_graphs(graphs: list[Graph], store: ParamStore, config: TrainConfig) -> list[np.ndarray]:
    """Gradient-free embeddings of a graph sequence."""
    out = []
    with ad.no_grad():
        for g in graphs:
            out.append(_encode_graph_node(g, store, config).values[0].copy())
    return out


def weighted_nll_node(
    entries: list[tuple[DiffMatrix, int, float]],
    prototypes: np.ndarray,
) -> DiffMatrix:
    """Sum of -weight * log p(label | z) over (embedding, label, weight).

    Distances use the expanded form |z|^2 - 2 z.p + |p|^2 so everything
    stays inside the recorded graph; the softmax shift constant is held
    out of the gradient on purpose (it cancels exactly).
    """
    if not entries:
        raise ContractError("loss needs at least one entry")
    k = prototypes.shape[0]
    proto_t = DiffMatrix.constant(prototypes.T)
    proto_sq = DiffMatrix.constant((prototypes**2).sum(axis=1).reshape(1, -1))
    total = None
    for z, label, weight in entries:
        if not 0 <= label < k:
            raise ContractError(f"label {label} outside 0..{k - 1}")
        zz = ad.sum_cols(ad.square(z))
        cross = ad.matmul(z, proto_t)
        dist = ad.add_col(ad.add(ad.scale(cross, -2.0), proto_sq), zz)
        logits = ad.scale(dist, -1.0)
        shift = float(logits.values.max())
        shifted = ad.add_col(logits, DiffMatrix.constant([[-shift]]))
        log_norm = ad.add(ad.log(ad.sum_cols(ad.exp(shifted))), DiffMatrix.constant([[shift]]))
        one_hot = np.zeros((1, k))
        one_hot[0, label] = 1.0
        logit_y = ad.sum_cols(ad.mul(logits, DiffMatrix.constant(one_hot)))
        log_p = ad.sub(logit_y, log_norm)
        term = ad.scale(log_p, -float(weight))
        total = term if total is None else ad.add(total, term)
    return total


def evaluate(graphs: list[Graph], store: ParamStore, config: TrainConfig, protos: PrototypeSet) -> float:
    """Fraction of graphs whose nearest prototype matches their label."""
    if not graphs:
        return 0.0
    embeddings = embed_graphs(graphs, store, config)
    correct = sum(1 for z, g in zip(embeddings, graphs) if predict(z, protos) == g.label)
    return correct / len(graphs)


def _assert_no_leakage(train_ids, val_ids, test_ids, prototype_source_ids) -> str:
    """Structural check that prototype/EVT inputs are the train split only."""
    train, val, test = set(train_ids), set(val_ids), set(test_ids)
    if train & val or train & test or val & test:
        raise TrainingError("split partitions overlap")
    sources = set(prototype_source_ids)
    if sources != train:
        raise TrainingError("prototype inputs are not exactly the train split")
    return "passed"


def _confidence_histogram(values: list[float], kind: str) -> dict:
    edges = np.linspace(0.0, 1.0, HISTOGRAM_BINS + 1)
    counts, _ = np.histogram(np.clip(values, 0.0, 1.0), bins=edges)
    return {
        "kind": kind,
        "bin_edges": [float(e) for e in edges],
        "counts": [int(c) for c in counts],
    }


def _chunks(seq, size):
    for start in range(0, len(seq), size):
        yield seq[start : start + size]


def _evt_record(models: dict) -> dict:
    out = {}
    for k, model in models.items():
        if model.valid:
            out[str(k)] = {
                "mu": model.mu,
                "sigma": model.sigma,
                "xi": model.xi,
                "tail_size": model.tail_size,
                "valid": True,
            }
        else:
            out[str(k)] = {"mu": None, "sigma": None, "xi": None,
                           "tail_size": model.tail_size, "valid": False}
    return out


def train(
    graphs: list[Graph],
    train_ids: list[int],
    val_ids: list[int],
    test_ids: list[int],
    config: TrainConfig,
    dataset_name: str = "dataset",
    split_manifest: dict | None = None,
) -> dict:
    """Run one full training job and return its report document.

    A non-finite loss aborts with a DivergenceError carrying the partial
    report as a diagnostic.
    """
    started = time.perf_counter()
    by_id = {g.id: g for g in graphs}
    train_graphs = [by_id[i] for i in train_ids]
    val_graphs = [by_id[i] for i in val_ids]
    test_graphs = [by_id[i] for i in test_ids]
    if not train_graphs:
        raise ConfigError("empty train split")

    n_classes = max(g.label for g in graphs) + 1
    train_labels = {g.label for g in train_graphs}
    missing = [k for k in range(n_classes) if k not in train_labels]
    if missing:
        raise TrainingError(f"classes {missing} absent from the train split")
    if n_classes < 2:
        raise TrainingError("need at least two classes")

    feature_dim = train_graphs[0].features.shape[1]
    seed_root = np.random.SeedSequence(config.seed)
    init_ss, mixup_ss, shuffle_ss = seed_root.spawn(3)
    store = init_params(feature_dim, config, np.random.default_rng(init_ss))
    mixup_rng = np.random.default_rng(mixup_ss)
    shuffle_rng = np.random.default_rng(shuffle_ss)

    leakage = _assert_no_leakage(train_ids, val_ids, test_ids, [g.id for g in train_graphs])

    report: dict = {
        "config": config.as_dict(),
        "dataset": {
            "name": dataset_name,
            "n_graphs": len(graphs),
            "n_classes": n_classes,
            "feature_dim": feature_dim,
        },
        "split_manifest": split_manifest,
        "leakage_check": leakage,
        "epochs": [],
        "status": "running",
    }

    mixup_config = MixupConfig(
        alpha=config.alpha,
        beta=config.beta,
        virtual_count_per_epoch=config.virtual_per_epoch or len(train_graphs),
        seed=config.seed,
    )

    def fresh_state(epoch):
        embeddings = embed_graphs(train_graphs, store, config)
        pairs = [(z, g.label) for z, g in zip(embeddings, train_graphs)]
        protos = compute_prototypes(pairs, n_classes=n_classes, epoch=epoch)
        return pairs, protos

    def diverged(epoch, batch_index):
        report["status"] = "diverged"
        report["diverged_at"] = {"epoch": epoch, "batch": batch_index}
        report["wall_clock_sec"] = time.perf_counter() - started
        raise DivergenceError(
            f"non-finite loss at epoch {epoch}, batch {batch_index}", report
        )

    best_val = -1.0
    best_epoch = 0
    best_snapshot = store.snapshot()
    epochs_without_improvement = 0

    train_pairs, protos = fresh_state(epoch=0)

    for epoch in range(1, config.epochs + 1):
        epoch_record: dict = {"epoch": epoch}
        batch_losses: list[float] = []
        sample_count = 0

        if config.method == "oodgmixup":
            tails = collect_tail_distances(train_pairs, protos, config.tail)
            models = {
                k: weibull_fit_high(tails[k], config.tail, class_index=k)
                for k in range(n_classes)
            }
            virtual = generate_virtual_batch(train_pairs, mixup_config, mixup_rng)
            score_virtual_samples(virtual, protos, models)
            epoch_record["evt"] = _evt_record(models)
            omegas = [s.omega for s in virtual]
            epoch_record["omega_mean"] = float(np.mean(omegas))
            epoch_record["omega_max"] = float(np.max(omegas))

            for batch_index, batch in enumerate(_chunks(virtual, config.batch_size)):
                normalize_weights(batch)
                try:
                    cache: dict[int, DiffMatrix] = {}
                    for s in batch:
                        for idx in (s.source_i, s.source_j):
                            if idx not in cache:
                                cache[idx] = _encode_graph_node(train_graphs[idx], store, config)
                    entries = []
                    for s in batch:
                        z = ad.add(
                            ad.scale(cache[s.source_i], s.lam),
                            ad.scale(cache[s.source_j], 1.0 - s.lam),
                        )
                        entries.append((z, s.label, s.omega_bar))
                    loss = weighted_nll_node(entries, protos.prototypes)
                except NonFiniteError:
                    diverged(epoch, batch_index)
                if not math.isfinite(loss.item):
                    diverged(epoch, batch_index)
                store.zero_grads()
                backward_pass(loss)
                adam_step(store, config.lr)
                batch_losses.append(loss.item)
                sample_count += len(batch)
        else:
            epoch_record["evt"] = None
            epoch_record["omega_mean"] = None
            epoch_record["omega_max"] = None
            order = shuffle_rng.permutation(len(train_graphs))
            for batch_index, batch_idx in enumerate(_chunks(list(order), config.batch_size)):
                try:
                    entries = []
                    for idx in batch_idx:
                        z = _encode_graph_node(train_graphs[int(idx)], store, config)
                        entries.append((z, train_graphs[int(idx)].label, 1.0))
                    loss = weighted_nll_node(entries, protos.prototypes)
                except NonFiniteError:
                    diverged(epoch, batch_index)
                if not math.isfinite(loss.item):
                    diverged(epoch, batch_index)
                store.zero_grads()
                backward_pass(loss)
                adam_step(store, config.lr)
                batch_losses.append(loss.item)
                sample_count += len(batch_idx)

        train_pairs, protos = fresh_state(epoch)
        val_accuracy = evaluate(val_graphs, store, config, protos)
        train_correct = sum(1 for z, label in train_pairs if predict(z, protos) == label)
        epoch_record["train_loss"] = float(sum(batch_losses) / max(sample_count, 1))
        epoch_record["train_accuracy"] = train_correct / len(train_pairs)
        epoch_record["val_accuracy"] = val_accuracy
        report["epochs"].append(epoch_record)

        if val_accuracy > best_val:
            best_val = val_accuracy
            best_epoch = epoch
            best_snapshot = store.snapshot()
            epochs_without_improvement = 0
        else:
            epochs_without_improvement += 1
            if epochs_without_improvement >= config.patience:
                break

    store.restore(best_snapshot)
    train_pairs, protos = fresh_state(epoch=best_epoch)
    test_accuracy = evaluate(test_graphs, store, config, protos)
    train_accuracy = evaluate(train_graphs, store, config, protos)

    if config.method == "oodgmixup":
        tails = collect_tail_distances(train_pairs, protos, config.tail)
        models = {k: weibull_fit_high(tails[k], config.tail, class_index=k) for k in range(n_classes)}
        scores = []
        for g in test_graphs:
            z = embed_graphs([g], store, config)[0]
            k = predict(z, protos)
            model = models.get(k)
            if model is None or not model.valid:
                scores.append(NEUTRAL_OMEGA)
            else:
                scores.append(ood_confidence(float(distances_to_prototypes(z, protos)[k]), model))
        histogram = _confidence_histogram(scores, kind="omega")
    else:
        scores = []
        for g in test_graphs:
            z = embed_graphs([g], store, config)[0]
            scores.append(float(class_probabilities(z, protos).max()))
        histogram = _confidence_histogram(scores, kind="softmax_max")

    report["status"] = "completed"
    report["best_epoch"] = best_epoch
    report["best_val_accuracy"] = best_val
    report["test_accuracy"] = test_accuracy
    report["train_accuracy"] = train_accuracy
    report["test_confidence_histogram"] = histogram
    report["wall_clock_sec"] = time.perf_counter() - started
    return report


def train_erm(
    graphs: list[Graph],
    train_ids: list[int],
    val_ids: list[int],
    test_ids: list[int],
    config: TrainConfig,
    dataset_name: str = "dataset",
    split_manifest: dict | None = None,
) -> dict:
    """Baseline: identical pipeline with mixup and calibration disabled."""
    erm_config = TrainConfig(**{**config.as_dict(), "method": "erm"})
    return train(graphs, train_ids, val_ids, test_ids, erm_config,
                 dataset_name=dataset_name, split_manifest=split_manifest)


def report_determinism_key(report: dict) -> bytes:
    """Canonical bytes of a report with wall-clock timing stripped."""
    stripped = {k: v for k, v in report.items() if k != "wall_clock_sec"}
    return dump_json(stripped).encode()
