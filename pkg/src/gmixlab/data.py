"""TU-format dataset handling and size-biased splits.

A dataset directory holds `<NAME>_A.txt` (directed edge entries, 1-based
global node ids), `<NAME>_graph_indicator.txt` (graph id per node),
`<NAME>_graph_labels.txt` (label per graph) and optionally
`<NAME>_node_labels.txt` / `<NAME>_node_attributes.txt`.  Commas or
whitespace both work as separators.

Structural statistics use one fixed convention everywhere: the edge
count of a graph is its number of directed entries (2m for m unordered
pairs) and density is that count divided by the node count, i.e. the
average degree.  Splits select graphs by a one-sided predicate on one of
those statistics, shuffle the qualifying ids with a seed, and assign
every remaining graph to the test partition.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DatasetParseError

CRITERIA = ("node_count", "edge_count", "density")
COMPARATORS = ("less_than", "greater_than")


@dataclass(eq=False)
class Graph:
    """One undirected graph: canonical edge pairs, features, class label."""

    id: int
    node_count: int
    edges: list[tuple[int, int]]
    features: np.ndarray
    label: int
    _adjacency: np.ndarray | None = field(default=None, repr=False)

    def degrees(self) -> np.ndarray:
        deg = np.zeros(self.node_count, dtype=np.float64)
        for u, v in self.edges:
            deg[u] += 1
            deg[v] += 1
        return deg

    def adjacency(self) -> np.ndarray:
        """Dense symmetric 0/1 adjacency without self loops (cached)."""
        if self._adjacency is None:
            a = np.zeros((self.node_count, self.node_count), dtype=np.float64)
            for u, v in self.edges:
                a[u, v] = 1.0
                a[v, u] = 1.0
            self._adjacency = a
        return self._adjacency


@dataclass(frozen=True)
class GraphStats:
    nodes: int
    edges_directed: int
    density: float


@dataclass(frozen=True)
class SplitSpec:
    criterion: str
    comparator: str
    threshold: float
    train_count: int
    val_count: int

    def __post_init__(self):
        if self.criterion not in CRITERIA:
            raise ConfigError(f"unknown criterion {self.criterion!r}; expected one of {CRITERIA}")
        if self.comparator not in COMPARATORS:
            raise ConfigError(f"unknown comparator {self.comparator!r}; expected one of {COMPARATORS}")
        if self.train_count <= 0 or self.val_count <= 0:
            raise ConfigError("train_count and val_count must be positive")


@dataclass(frozen=True)
class PartitionStats:
    count: int
    avg_nodes: float
    avg_edges: float
    avg_density: float
    ratio_consistent: bool

    def as_dict(self) -> dict:
        return {
            "count": self.count,
            "avg_nodes": self.avg_nodes,
            "avg_edges": self.avg_edges,
            "avg_density": self.avg_density,
            "ratio_consistent": self.ratio_consistent,
        }


@dataclass
class SplitResult:
    train_ids: list[int]
    val_ids: list[int]
    test_ids: list[int]
    stats: dict[str, PartitionStats]


@dataclass
class ParsedDataset:
    graphs: list[Graph]
    feature_dim: int
    label_map: dict[int, int]
    name: str


def _read_lines(path: str) -> list[str]:
    if not os.path.isfile(path):
        raise DatasetParseError(f"missing dataset file: {path}")
    with open(path, "r", encoding="utf-8") as handle:
        return handle.read().splitlines()


def _tokens(line: str) -> list[str]:
    # commas or whitespace; both occur in published TU dumps
    if "," in line:
        return [t.strip() for t in line.split(",") if t.strip()]
    return line.split()


def _parse_int(token: str, path: str, lineno: int) -> int:
    try:
        return int(token)
    except ValueError:
        raise DatasetParseError(f"{path}:{lineno}: non-integer token {token!r}") from None


def _parse_float(token: str, path: str, lineno: int) -> float:
    try:
        return float(token)
    except ValueError:
        raise DatasetParseError(f"{path}:{lineno}: non-numeric token {token!r}") from None


def _find_prefix(directory: str) -> str:
    if not os.path.isdir(directory):
        raise DatasetParseError(f"dataset directory not found: {directory}")
    candidates = [f for f in sorted(os.listdir(directory)) if f.endswith("_A.txt")]
    if not candidates:
        raise DatasetParseError(f"missing dataset file: {os.path.join(directory, '<NAME>_A.txt')}")
    if len(candidates) > 1:
        raise DatasetParseError(f"multiple *_A.txt files in {directory}: {candidates}")
    return candidates[0][: -len("_A.txt")]


def parse_tu_dataset(directory: str) -> ParsedDataset:
    """Parse a TU-format directory into Graph objects.

    Directed duplicate edge entries collapse to one unordered pair and
    self loops are dropped during canonicalization.  Node-label columns
    are one-hot encoded (sorted label order) and concatenated before any
    verbatim node attributes.  Graph labels are remapped to 0..K-1
    preserving their sorted original order; the original map is kept for
    auditing.  Datasets with neither node labels nor attributes come
    back with feature_dim 0.
    """
    prefix = _find_prefix(directory)
    name = prefix

    def dpath(suffix: str) -> str:
        return os.path.join(directory, f"{prefix}_{suffix}.txt")

    indicator_path = dpath("graph_indicator")
    indicator_lines = _read_lines(indicator_path)
    node_graph: list[int] = []
    for lineno, line in enumerate(indicator_lines, start=1):
        if not line.strip():
            continue
        node_graph.append(_parse_int(line.strip(), indicator_path, lineno))
    total_nodes = len(node_graph)
    if total_nodes == 0:
        raise DatasetParseError(f"{indicator_path}: no nodes declared")

    graph_ids = sorted(set(node_graph))
    n_graphs = len(graph_ids)
    if graph_ids != list(range(1, n_graphs + 1)):
        raise DatasetParseError(f"{indicator_path}: graph ids are not contiguous from 1")

    # global 1-based node id -> (graph index 0-based, local node index)
    node_counts = [0] * n_graphs
    local_index: list[tuple[int, int]] = []
    for gid in node_graph:
        g = gid - 1
        local_index.append((g, node_counts[g]))
        node_counts[g] += 1

    labels_path = dpath("graph_labels")
    label_lines = _read_lines(labels_path)
    raw_labels: list[int] = []
    for lineno, line in enumerate(label_lines, start=1):
        if not line.strip():
            continue
        raw_labels.append(_parse_int(line.strip(), labels_path, lineno))
    if len(raw_labels) != n_graphs:
        raise DatasetParseError(
            f"{labels_path}: expected {n_graphs} labels, found {len(raw_labels)}"
        )
    label_map = {orig: k for k, orig in enumerate(sorted(set(raw_labels)))}
    labels = [label_map[l] for l in raw_labels]

    edges_path = dpath("A")
    edge_sets: list[set[tuple[int, int]]] = [set() for _ in range(n_graphs)]
    for lineno, line in enumerate(_read_lines(edges_path), start=1):
        if not line.strip():
            continue
        toks = _tokens(line)
        if len(toks) != 2:
            raise DatasetParseError(f"{edges_path}:{lineno}: expected two node ids, got {line!r}")
        u = _parse_int(toks[0], edges_path, lineno)
        v = _parse_int(toks[1], edges_path, lineno)
        for endpoint in (u, v):
            if not 1 <= endpoint <= total_nodes:
                raise DatasetParseError(
                    f"{edges_path}:{lineno}: node id {endpoint} outside 1..{total_nodes}"
                )
        gu, lu = local_index[u - 1]
        gv, lv = local_index[v - 1]
        if gu != gv:
            raise DatasetParseError(
                f"{edges_path}:{lineno}: edge ({u}, {v}) crosses graphs {gu + 1} and {gv + 1}"
            )
        if lu == lv:
            continue
        edge_sets[gu].add((min(lu, lv), max(lu, lv)))

    # optional feature sources
    one_hot: np.ndarray | None = None
    node_labels_path = dpath("node_labels")
    if os.path.isfile(node_labels_path):
        values: list[int] = []
        for lineno, line in enumerate(_read_lines(node_labels_path), start=1):
            if not line.strip():
                continue
            values.append(_parse_int(line.strip(), node_labels_path, lineno))
        if len(values) != total_nodes:
            raise DatasetParseError(
                f"{node_labels_path}: expected {total_nodes} node labels, found {len(values)}"
            )
        distinct = sorted(set(values))
        column = {v: i for i, v in enumerate(distinct)}
        one_hot = np.zeros((total_nodes, len(distinct)), dtype=np.float64)
        for row, v in enumerate(values):
            one_hot[row, column[v]] = 1.0

    attributes: np.ndarray | None = None
    attributes_path = dpath("node_attributes")
    if os.path.isfile(attributes_path):
        rows: list[list[float]] = []
        width: int | None = None
        for lineno, line in enumerate(_read_lines(attributes_path), start=1):
            if not line.strip():
                continue
            row = [_parse_float(t, attributes_path, lineno) for t in _tokens(line)]
            if width is None:
                width = len(row)
            elif len(row) != width:
                raise DatasetParseError(
                    f"{attributes_path}:{lineno}: expected {width} attributes, found {len(row)}"
                )
            rows.append(row)
        if len(rows) != total_nodes:
            raise DatasetParseError(
                f"{attributes_path}: expected {total_nodes} attribute rows, found {len(rows)}"
            )
        attributes = np.array(rows, dtype=np.float64)

    if one_hot is not None and attributes is not None:
        all_features = np.concatenate([one_hot, attributes], axis=1)
    elif one_hot is not None:
        all_features = one_hot
    elif attributes is not None:
        all_features = attributes
    else:
        all_features = np.zeros((total_nodes, 0), dtype=np.float64)
    feature_dim = all_features.shape[1]

    node_rows: list[list[int]] = [[] for _ in range(n_graphs)]
    for global_id, (g, _) in enumerate(local_index):
        node_rows[g].append(global_id)

    graphs: list[Graph] = []
    for g in range(n_graphs):
        graphs.append(
            Graph(
                id=g,
                node_count=node_counts[g],
                edges=sorted(edge_sets[g]),
                features=all_features[node_rows[g], :].copy(),
                label=labels[g],
            )
        )
    return ParsedDataset(graphs=graphs, feature_dim=feature_dim, label_map=label_map, name=name)


def synthesize_degree_features(graph: Graph) -> Graph:
    """Give a featureless graph the 2-vector [1, log(1+deg)/log(1+max_deg)].

    The constant first column keeps single-node graphs informative; the
    log ratio stays in [0, 1] regardless of graph size, so size-shifted
    partitions share one feature scale.  A graph whose maximum degree is
    0 gets 0 in the second column.
    """
    if graph.features.shape[1] != 0:
        raise ConfigError(f"graph {graph.id} already has {graph.features.shape[1]} feature columns")
    deg = graph.degrees()
    max_deg = deg.max() if graph.node_count else 0.0
    second = np.zeros(graph.node_count, dtype=np.float64)
    if max_deg > 0:
        second = np.log1p(deg) / np.log1p(max_deg)
    features = np.column_stack([np.ones(graph.node_count), second])
    return Graph(
        id=graph.id,
        node_count=graph.node_count,
        edges=list(graph.edges),
        features=features,
        label=graph.label,
    )


def load_dataset(directory: str) -> ParsedDataset:
    """Parse a directory and synthesize degree features when none exist."""
    parsed = parse_tu_dataset(directory)
    if parsed.feature_dim == 0:
        parsed.graphs = [synthesize_degree_features(g) for g in parsed.graphs]
        parsed.feature_dim = 2
    return parsed


def compute_graph_stats(graph: Graph) -> GraphStats:
    """Node count, directed edge-entry count (2m), and their ratio."""
    directed = 2 * len(graph.edges)
    return GraphStats(
        nodes=graph.node_count,
        edges_directed=directed,
        density=directed / graph.node_count,
    )


def _criterion_value(graph: Graph, criterion: str) -> float:
    stats = compute_graph_stats(graph)
    if criterion == "node_count":
        return float(stats.nodes)
    if criterion == "edge_count":
        return float(stats.edges_directed)
    if criterion == "density":
        return stats.density
    raise ConfigError(f"unknown criterion {criterion!r}; expected one of {CRITERIA}")


def _satisfies(value: float, comparator: str, threshold: float) -> bool:
    if comparator == "less_than":
        return value < threshold
    return value > threshold


def _partition_stats(graphs: list[Graph], ids: list[int]) -> PartitionStats:
    if not ids:
        return PartitionStats(0, 0.0, 0.0, 0.0, True)
    by_id = {g.id: g for g in graphs}
    stats = [compute_graph_stats(by_id[i]) for i in ids]
    avg_nodes = float(np.mean([s.nodes for s in stats]))
    avg_edges = float(np.mean([s.edges_directed for s in stats]))
    avg_density = float(np.mean([s.density for s in stats]))
    ratio = avg_edges / avg_nodes if avg_nodes > 0 else 0.0
    if ratio > 0:
        consistent = abs(avg_density - ratio) / ratio <= 0.05
    else:
        consistent = avg_density == 0.0
    return PartitionStats(len(ids), avg_nodes, avg_edges, avg_density, consistent)


def biased_split(graphs: list[Graph], spec: SplitSpec, seed: int) -> SplitResult:
    """One-sided biased split.

    Graphs satisfying the predicate are shuffled with the seed; the
    first train_count become train, the next val_count become val, and
    everything else (qualifying leftovers plus every non-qualifying
    graph) becomes test.  Train and val keep draw order; test ids are
    sorted.
    """
    qualifying = [
        g.id for g in graphs if _satisfies(_criterion_value(g, spec.criterion), spec.comparator, spec.threshold)
    ]
    needed = spec.train_count + spec.val_count
    if needed > len(qualifying):
        raise ConfigError(
            f"split needs {needed} qualifying graphs but only {len(qualifying)} satisfy "
            f"{spec.criterion} {spec.comparator} {spec.threshold}"
        )
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(qualifying))
    shuffled = [qualifying[i] for i in order]
    train_ids = shuffled[: spec.train_count]
    val_ids = shuffled[spec.train_count : needed]
    taken = set(train_ids) | set(val_ids)
    test_ids = sorted(g.id for g in graphs if g.id not in taken)

    stats = {
        "train": _partition_stats(graphs, train_ids),
        "val": _partition_stats(graphs, val_ids),
        "test": _partition_stats(graphs, test_ids),
    }
    return SplitResult(train_ids=train_ids, val_ids=val_ids, test_ids=test_ids, stats=stats)


def derive_threshold(
    graphs: list[Graph], criterion: str, comparator: str, target_count: int
) -> tuple[float, int]:
    """Pick a threshold so close to target_count graphs qualify.

    Sorts the criterion values and places the threshold at the boundary
    value.  Ties at the boundary can make the exact target impossible;
    the achieved count is returned alongside so callers can check.
    """
    if target_count <= 0:
        raise ConfigError("target qualifying count must be positive")
    values = sorted(_criterion_value(g, criterion) for g in graphs)
    if target_count > len(values):
        raise ConfigError(f"target count {target_count} exceeds dataset size {len(values)}")
    if comparator == "less_than":
        threshold = values[target_count] if target_count < len(values) else values[-1] + 1.0
    elif comparator == "greater_than":
        threshold = (
            values[-target_count - 1] if target_count < len(values) else values[0] - 1.0
        )
    else:
        raise ConfigError(f"unknown comparator {comparator!r}; expected one of {COMPARATORS}")
    achieved = sum(1 for v in values if _satisfies(v, comparator, threshold))
    return float(threshold), achieved


def split_manifest(
    dataset_name: str,
    spec: SplitSpec,
    seed: int,
    split: SplitResult,
    label_map: dict[int, int],
) -> dict:
    """JSON-ready record of how a split was produced and what it contains."""
    return {
        "dataset": dataset_name,
        "criterion": spec.criterion,
        "comparator": spec.comparator,
        "threshold": spec.threshold,
        "train_count": spec.train_count,
        "val_count": spec.val_count,
        "seed": seed,
        "label_map": {str(orig): internal for orig, internal in sorted(label_map.items())},
        "counts": {
            "train": len(split.train_ids),
            "val": len(split.val_ids),
            "test": len(split.test_ids),
        },
        "stats": {part: s.as_dict() for part, s in split.stats.items()},
        "density_convention": "directed_edge_entries_over_nodes",
        "train_ids": list(split.train_ids),
        "val_ids": list(split.val_ids),
        "test_ids": list(split.test_ids),
    }


def dump_json(document: dict) -> str:
    """Canonical JSON serialization used for every deterministic artifact."""
    return json.dumps(document, indent=2, sort_keys=True) + "\n"


def write_manifest(manifest: dict, path: str) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(dump_json(manifest))


def write_tu_dataset(graphs: list[Graph], directory: str, name: str) -> None:
    """Serialize Graphs back to TU format (used for round-trip checks).

    Features are written verbatim as node attributes and labels as the
    internal 0-based ids, so parse -> write -> parse is an identity on
    Graph contents.
    """
    os.makedirs(directory, exist_ok=True)

    def wpath(suffix: str) -> str:
        return os.path.join(directory, f"{name}_{suffix}.txt")

    offsets = []
    total = 0
    for g in graphs:
        offsets.append(total)
        total += g.node_count

    with open(wpath("A"), "w", encoding="utf-8") as handle:
        for g, offset in zip(graphs, offsets):
            for u, v in g.edges:
                handle.write(f"{offset + u + 1}, {offset + v + 1}\n")
                handle.write(f"{offset + v + 1}, {offset + u + 1}\n")

    with open(wpath("graph_indicator"), "w", encoding="utf-8") as handle:
        for gid, g in enumerate(graphs, start=1):
            handle.writelines(f"{gid}\n" for _ in range(g.node_count))

    with open(wpath("graph_labels"), "w", encoding="utf-8") as handle:
        handle.writelines(f"{g.label}\n" for g in graphs)

    feature_dim = graphs[0].features.shape[1] if graphs else 0
    if feature_dim > 0:
        with open(wpath("node_attributes"), "w", encoding="utf-8") as handle:
            for g in graphs:
                for row in g.features:
                    handle.write(", ".join(f"{x:.17g}" for x in row) + "\n")
