"""End-to-end gradient self-check on a built-in five-graph workload.

Reproduces one full weighted training step — structure/feature masking,
encoding, interpolation of source embeddings, distance softmax, and the
per-sample weights held constant — and compares sampled analytic
gradient coordinates against central finite differences.
"""

from __future__ import annotations

import time

import numpy as np

from . import autodiff as ad
from .autodiff import finite_diff_check
from .evt import (
    collect_tail_distances,
    normalize_weights,
    score_virtual_samples,
    weibull_fit_high,
)
from .fixtures import gradcheck_graphs
from .mixup import MixupConfig, generate_virtual_batch
from .prototypes import compute_prototypes
from .training import (
    TrainConfig,
    _encode_graph_node,
    embed_graphs,
    init_params,
    weighted_nll_node,
)


def gradcheck_report(
    probes: int = 30,
    h: float = 1e-5,
    seed: int = 0,
    tolerance: float = 1e-4,
) -> dict:
    """Run the self-check and return a JSON-ready report document."""
    started = time.perf_counter()
    graphs = gradcheck_graphs()
    config = TrainConfig(
        method="oodgmixup",
        hidden_dim=6,
        embed_dim=3,
        layers=2,
        tail=3,
        batch_size=len(graphs),
        seed=seed,
    )
    store = init_params(graphs[0].features.shape[1], config, np.random.default_rng(seed))

    embeddings = embed_graphs(graphs, store, config)
    pairs = [(z, g.label) for z, g in zip(embeddings, graphs)]
    protos = compute_prototypes(pairs)
    tails = collect_tail_distances(pairs, protos, config.tail)
    models = {k: weibull_fit_high(tails[k], config.tail, class_index=k) for k in tails}
    batch = generate_virtual_batch(pairs, MixupConfig(seed=seed), np.random.default_rng(seed))
    score_virtual_samples(batch, protos, models)
    normalize_weights(batch)

    def loss_fn(s):
        cache = {}
        entries = []
        for sample in batch:
            for idx in (sample.source_i, sample.source_j):
                if idx not in cache:
                    cache[idx] = _encode_graph_node(graphs[idx], s, config)
            z = ad.add(
                ad.scale(cache[sample.source_i], sample.lam),
                ad.scale(cache[sample.source_j], 1.0 - sample.lam),
            )
            entries.append((z, sample.label, sample.omega_bar))
        return weighted_nll_node(entries, protos.prototypes)

    result = finite_diff_check(loss_fn, store, probes=probes, h=h, seed=seed, tolerance=tolerance)
    return {
        "kind": "gradcheck",
        "graphs": len(graphs),
        "virtual_samples": len(batch),
        "probes": [
            {
                "parameter": p.parameter,
                "row": p.index[0],
                "col": p.index[1],
                "analytic": p.analytic,
                "numeric": p.numeric,
                "error": p.error,
            }
            for p in result.probes
        ],
        "h": h,
        "seed": seed,
        "max_error": result.max_error,
        "tolerance": result.tolerance,
        "passed": result.passed,
        "wall_clock_sec": time.perf_counter() - started,
    }
