"""Shared fixtures: tiny TU-format datasets written to disk and
hand-built Graph objects used across the suites."""

import numpy as np
import pytest

from gmixlab.fixtures import clique_graph, demo_trainset, gradcheck_graphs, path_graph


def write_tu_files(
    directory,
    name,
    directed_edges,
    indicator,
    graph_labels,
    node_labels=None,
    node_attributes=None,
    sep=", ",
):
    """Write raw TU-format files; edges are 1-based global (u, v) entries."""
    directory.mkdir(parents=True, exist_ok=True)
    (directory / f"{name}_A.txt").write_text(
        "".join(f"{u}{sep}{v}\n" for u, v in directed_edges)
    )
    (directory / f"{name}_graph_indicator.txt").write_text(
        "".join(f"{g}\n" for g in indicator)
    )
    (directory / f"{name}_graph_labels.txt").write_text(
        "".join(f"{l}\n" for l in graph_labels)
    )
    if node_labels is not None:
        (directory / f"{name}_node_labels.txt").write_text(
            "".join(f"{l}\n" for l in node_labels)
        )
    if node_attributes is not None:
        (directory / f"{name}_node_attributes.txt").write_text(
            "".join(", ".join(f"{x}" for x in row) + "\n" for row in node_attributes)
        )
    return directory


@pytest.fixture
def toy_dataset_dir(tmp_path):
    """Two graphs: a triangle over nodes {1,2,3} and a single edge {4,5}."""
    return write_tu_files(
        tmp_path / "TOY",
        "TOY",
        directed_edges=[(1, 2), (2, 1), (1, 3), (3, 1), (2, 3), (3, 2), (4, 5), (5, 4)],
        indicator=[1, 1, 1, 2, 2],
        graph_labels=[1, 2],
    )


@pytest.fixture
def five_graph_fixture():
    """Small mixed-topology set used for gradient checking."""
    return gradcheck_graphs()


@pytest.fixture
def toy_trainset():
    """12 separable graphs: paths are class 0, cliques are class 1."""
    return demo_trainset()


def synthetic_biased_dataset(directory, name="SYNB", n_small=40, n_large=24, seed=5):
    """TU-format dataset with a size/structure correlation.

    Small graphs (< 12 nodes) and large graphs (>= 14 nodes) both carry
    the same class rule: label 1 graphs are dense (near-clique), label 0
    graphs are sparse (path plus a few chords).  Size is therefore
    spuriously correlated with nothing; the split bias comes purely from
    thresholding node counts.
    """
    rng = np.random.default_rng(seed)
    directed = []
    indicator = []
    labels = []
    offset = 0
    gid = 0

    def add_graph(n, dense):
        nonlocal offset, gid
        gid += 1
        pairs = set()
        if dense:
            for i in range(n):
                for j in range(i + 1, n):
                    if rng.uniform() < 0.9:
                        pairs.add((i, j))
            for i in range(n - 1):
                pairs.add((i, i + 1))
        else:
            for i in range(n - 1):
                pairs.add((i, i + 1))
            extra = max(1, n // 5)
            for _ in range(extra):
                i, j = sorted(rng.choice(n, size=2, replace=False))
                pairs.add((int(i), int(j)))
        for i, j in sorted(pairs):
            directed.append((offset + i + 1, offset + j + 1))
            directed.append((offset + j + 1, offset + i + 1))
        indicator.extend([gid] * n)
        labels.append(1 if dense else 0)
        offset += n

    for k in range(n_small):
        add_graph(int(rng.integers(6, 12)), dense=(k % 2 == 0))
    for k in range(n_large):
        add_graph(int(rng.integers(14, 20)), dense=(k % 2 == 0))

    return write_tu_files(directory, name, directed, indicator, labels)


@pytest.fixture(scope="session")
def synb_dir(tmp_path_factory):
    """Synthetic biased TU dataset on disk (40 small + 24 large graphs)."""
    return synthetic_biased_dataset(tmp_path_factory.mktemp("data") / "SYNB")


@pytest.fixture(scope="session")
def toy_tu_dir(tmp_path_factory):
    """The 12-graph separable set serialized to TU files."""
    from gmixlab.data import write_tu_dataset

    directory = tmp_path_factory.mktemp("data") / "TOY12"
    write_tu_dataset(demo_trainset(), str(directory), "TOY12")
    return directory
