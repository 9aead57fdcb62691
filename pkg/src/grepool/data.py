"""Graphs, batches, TU-format ingestion and train/valid/test splits."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

log = logging.getLogger(__name__)


class IngestionError(OSError):
    """A mandatory dataset file is missing or unreadable."""


class FormatError(ValueError):
    """A dataset file is present but malformed."""


@dataclass
class Graph:
    adjacency: np.ndarray  # n x n, symmetric 0/1, zero diagonal
    features: np.ndarray  # n x d
    label: int = 0

    def __post_init__(self) -> None:
        self.adjacency = np.asarray(self.adjacency, dtype=np.float64)
        self.features = np.asarray(self.features, dtype=np.float64)
        n = self.adjacency.shape[0]
        if n < 1:
            raise ValueError("a graph needs at least one node")
        if self.adjacency.shape != (n, n):
            raise ValueError(f"adjacency must be square, got {self.adjacency.shape}")
        if self.features.ndim != 2 or self.features.shape[0] != n:
            raise ValueError(f"features {self.features.shape} do not cover {n} nodes")

    @property
    def n(self) -> int:
        return self.adjacency.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    def degrees(self) -> np.ndarray:
        return self.adjacency.sum(axis=1).astype(np.int64)

    def edges(self) -> list[tuple[int, int]]:
        """Undirected edges as (i, j) with i < j."""
        iu, ju = np.nonzero(np.triu(self.adjacency, k=1))
        return list(zip(iu.tolist(), ju.tolist()))

    def permute(self, perm: Sequence[int]) -> Graph:
        """Relabel nodes: new node i is old node ``perm[i]``."""
        p = np.asarray(perm)
        return Graph(self.adjacency[np.ix_(p, p)], self.features[p], self.label)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Graph):
            return NotImplemented
        return (self.label == other.label
                and np.array_equal(self.adjacency, other.adjacency)
                and np.array_equal(self.features, other.features))


def graph_from_edges(n: int, edges: Iterable[tuple[int, int]], features=None,
                     label: int = 0) -> Graph:
    adj = np.zeros((n, n))
    for i, j in edges:
        if i != j:
            adj[i, j] = adj[j, i] = 1.0
    if features is None:
        features = np.ones((n, 1))
    return Graph(adj, features, label)


@dataclass
class GraphBatch:
    """Block-diagonal union of several graphs."""

    graphs: list[Graph]
    node_offsets: np.ndarray = field(init=False)
    graph_id: np.ndarray = field(init=False)
    adjacency: np.ndarray = field(init=False)
    features: np.ndarray = field(init=False)
    labels: np.ndarray = field(init=False)

    def __post_init__(self) -> None:
        if not self.graphs:
            raise ValueError("cannot batch an empty list of graphs")
        dims = {g.d for g in self.graphs}
        if len(dims) != 1:
            raise ValueError(f"graphs in a batch must share feature width, got {sorted(dims)}")
        sizes = np.array([g.n for g in self.graphs])
        self.node_offsets = np.concatenate([[0], np.cumsum(sizes)[:-1]]).astype(np.int64)
        self.graph_id = np.repeat(np.arange(len(self.graphs)), sizes)
        total = int(sizes.sum())
        adj = np.zeros((total, total))
        for g, off in zip(self.graphs, self.node_offsets):
            adj[off:off + g.n, off:off + g.n] = g.adjacency
        self.adjacency = adj
        self.features = np.vstack([g.features for g in self.graphs])
        self.labels = np.array([g.label for g in self.graphs], dtype=np.int64)

    @property
    def n_graphs(self) -> int:
        return len(self.graphs)

    @property
    def n_nodes(self) -> int:
        return self.adjacency.shape[0]


def make_batch(graphs: Sequence[Graph]) -> GraphBatch:
    return GraphBatch(list(graphs))


# --------------------------------------------------------------------------
# TU plain-text format
# --------------------------------------------------------------------------

def _read_ints(path: Path, width: int | None = None) -> list[list[int]]:
    rows = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                vals = [int(float(tok)) for tok in line.replace(",", " ").split()]
            except ValueError as exc:
                raise FormatError(f"{path.name}:{lineno}: cannot parse {line!r}") from exc
            if width is not None and len(vals) != width:
                raise FormatError(f"{path.name}:{lineno}: expected {width} values, got {len(vals)}")
            rows.append(vals)
    return rows


def parse_tu_dataset(dir_path, name: str) -> list[Graph]:
    """Read a dataset in the TU benchmark text layout.

    Node labels, when present, become one-hot feature rows; otherwise every
    node gets the constant feature 1 (see :func:`degree_features`). Graph
    labels are remapped to contiguous ``0..C-1`` in sorted order of the raw
    values. Edge labels and attributes are ignored.
    """
    root = Path(dir_path)
    files = {k: root / f"{name}_{k}.txt" for k in ("A", "graph_indicator", "graph_labels", "node_labels")}
    for k in ("A", "graph_indicator", "graph_labels"):
        if not files[k].is_file():
            raise IngestionError(f"missing mandatory file {files[k]}")

    indicator = np.array([r[0] for r in _read_ints(files["graph_indicator"], 1)], dtype=np.int64)
    raw_labels = [r[0] for r in _read_ints(files["graph_labels"], 1)]
    n_nodes = indicator.size
    n_graphs = len(raw_labels)
    if indicator.size and (indicator.min() < 1 or indicator.max() > n_graphs):
        raise FormatError(f"{files['graph_indicator'].name}: graph ids must lie in 1..{n_graphs}")

    if files["node_labels"].is_file():
        node_lab = np.array([r[0] for r in _read_ints(files["node_labels"])], dtype=np.int64)
        if node_lab.size != n_nodes:
            raise FormatError(f"{files['node_labels'].name}: {node_lab.size} labels for {n_nodes} nodes")
        values = np.unique(node_lab)
        onehot = np.zeros((n_nodes, values.size))
        onehot[np.arange(n_nodes), np.searchsorted(values, node_lab)] = 1.0
        feats = onehot
    else:
        feats = np.ones((n_nodes, 1))

    # nodes of one graph are contiguous in the TU layout, but do not rely on it
    members = [np.flatnonzero(indicator == gi + 1) for gi in range(n_graphs)]
    local = np.empty(n_nodes, dtype=np.int64)
    for nodes in members:
        local[nodes] = np.arange(nodes.size)
    adjs = [np.zeros((m.size, m.size)) for m in members]

    with open(files["A"]) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                i, j = (int(tok) for tok in line.replace(",", " ").split())
            except ValueError as exc:
                raise FormatError(f"{files['A'].name}:{lineno}: expected 'i, j', got {line!r}") from exc
            if not (1 <= i <= n_nodes and 1 <= j <= n_nodes):
                raise FormatError(f"{files['A'].name}:{lineno}: node index out of range 1..{n_nodes}")
            gi, gj = indicator[i - 1], indicator[j - 1]
            if gi != gj:
                raise FormatError(f"{files['A'].name}:{lineno}: edge joins graphs {gi} and {gj}")
            if i == j:
                continue
            a = adjs[gi - 1]
            a[local[i - 1], local[j - 1]] = a[local[j - 1], local[i - 1]] = 1.0

    label_values = sorted(set(raw_labels))
    remap = {v: k for k, v in enumerate(label_values)}
    graphs = []
    for gi, nodes in enumerate(members):
        if nodes.size == 0:
            raise FormatError(f"graph {gi + 1} has no nodes")
        graphs.append(Graph(adjs[gi], feats[nodes], remap[raw_labels[gi]]))
    log.info("parsed %s: %d graphs, %d nodes", name, n_graphs, n_nodes)
    return graphs


def write_tu_dataset(graphs: Sequence[Graph], dir_path, name: str) -> None:
    """Write graphs in the TU layout; one-hot features become node labels.

    Features must be one-hot rows for the round trip to be exact.
    """
    root = Path(dir_path)
    root.mkdir(parents=True, exist_ok=True)
    offset = 0
    with open(root / f"{name}_A.txt", "w") as fa, \
            open(root / f"{name}_graph_indicator.txt", "w") as fi, \
            open(root / f"{name}_node_labels.txt", "w") as fn:
        for gi, g in enumerate(graphs, 1):
            for i in range(g.n):
                fi.write(f"{gi}\n")
                row = g.features[i]
                hot = np.flatnonzero(row)
                if hot.size != 1 or row[hot[0]] != 1.0:
                    raise ValueError(f"graph {gi} node {i}: features are not one-hot")
                fn.write(f"{int(hot[0])}\n")
            ii, jj = np.nonzero(g.adjacency)
            for i, j in zip(ii, jj):
                fa.write(f"{offset + i + 1}, {offset + j + 1}\n")
            offset += g.n
    with open(root / f"{name}_graph_labels.txt", "w") as fl:
        for g in graphs:
            fl.write(f"{g.label}\n")


def degree_features(g: Graph, max_degree: int = 64) -> Graph:
    """Replace features with a one-hot of ``min(degree, max_degree)``."""
    if max_degree < 1:
        raise ValueError("max_degree must be at least 1")
    deg = np.minimum(g.degrees(), max_degree)
    feats = np.zeros((g.n, max_degree + 1))
    feats[np.arange(g.n), deg] = 1.0
    return Graph(g.adjacency, feats, g.label)


def pad_features(graphs: Sequence[Graph], width: int) -> list[Graph]:
    """Zero-pad feature rows to ``width`` columns."""
    out = []
    for g in graphs:
        if g.d > width:
            raise ValueError(f"feature width {g.d} exceeds {width}")
        f = np.zeros((g.n, width))
        f[:, :g.d] = g.features
        out.append(Graph(g.adjacency, f, g.label))
    return out


def num_classes(graphs: Sequence[Graph]) -> int:
    return int(max(g.label for g in graphs)) + 1


# --------------------------------------------------------------------------
# splits
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class DatasetSplit:
    train: list[int]
    valid: list[int]
    test: list[int]
    seed: int


def make_splits(labels_or_count, ratios: Sequence[float] = (0.8, 0.1, 0.1),
                seed: int = 0) -> DatasetSplit:
    """Stratified random split, deterministic in ``seed``.

    Pass either the label list (stratified) or a graph count (treated as a
    single class).
    """
    if len(ratios) != 3 or abs(sum(ratios) - 1.0) > 1e-9 or min(ratios) < 0:
        raise ValueError(f"ratios must be three non-negative numbers summing to 1, got {ratios}")
    if isinstance(labels_or_count, (int, np.integer)):
        labels = np.zeros(int(labels_or_count), dtype=np.int64)
    else:
        labels = np.asarray(labels_or_count, dtype=np.int64)
    if labels.size == 0:
        raise ValueError("cannot split an empty dataset")
    rng = np.random.default_rng(seed)
    train: list[int] = []
    valid: list[int] = []
    test: list[int] = []
    for c in np.unique(labels):
        idx = np.flatnonzero(labels == c)
        rng.shuffle(idx)
        n_train = int(round(ratios[0] * idx.size))
        n_valid = int(round(ratios[1] * idx.size))
        n_valid = min(n_valid, idx.size - n_train)
        train += idx[:n_train].tolist()
        valid += idx[n_train:n_train + n_valid].tolist()
        test += idx[n_train + n_valid:].tolist()
    return DatasetSplit(sorted(train), sorted(valid), sorted(test), seed)


# --------------------------------------------------------------------------
# synthetic data
# --------------------------------------------------------------------------

def _has_triangle(adj: np.ndarray) -> bool:
    return np.trace(adj @ adj @ adj) > 0


def triangle_dataset(n_graphs: int = 20, n_nodes: tuple[int, int] = (6, 10),
                     seed: int = 0) -> list[Graph]:
    """Balanced dataset labelled by whether the graph contains a triangle.

    Negatives are random bipartite graphs (a spanning tree plus a few
    cross-side edges), so they have no odd cycles at all. Positives are the
    same construction with one triangle planted. Node features are degree
    one-hot (cap 4).
    """
    rng = np.random.default_rng(seed)
    graphs = []
    for k in range(n_graphs):
        label = k % 2
        n = int(rng.integers(n_nodes[0], n_nodes[1] + 1))
        side = np.arange(n) % 2
        rng.shuffle(side)
        adj = np.zeros((n, n))
        order = rng.permutation(n)
        for pos in range(1, n):
            v = order[pos]
            cand = [u for u in order[:pos] if side[u] != side[v]] or list(order[:pos])
            u = int(rng.choice(cand))
            adj[u, v] = adj[v, u] = 1.0
        for _ in range(n // 4):
            a, b = rng.choice(n, size=2, replace=False)
            if side[a] != side[b]:
                adj[a, b] = adj[b, a] = 1.0
        if label:
            a, b, c = rng.choice(n, size=3, replace=False)
            for i, j in ((a, b), (b, c), (a, c)):
                adj[i, j] = adj[j, i] = 1.0
        elif _has_triangle(adj):
            # fallback tree edges may join same-side nodes
            adj = _strip_triangles(adj, rng)
        graphs.append(degree_features(Graph(adj, np.ones((n, 1)), label), max_degree=4))
    return graphs


def _strip_triangles(adj: np.ndarray, rng) -> np.ndarray:
    adj = adj.copy()
    while _has_triangle(adj):
        tri = np.argwhere(np.triu(adj, 1) * (adj @ adj) > 0)
        i, j = tri[int(rng.integers(len(tri)))]
        adj[i, j] = adj[j, i] = 0.0
    return adj


def motif_dataset(n_graphs: int = 188, mean_nodes: float = 18.0, n_node_types: int = 7,
                  seed: int = 0) -> list[Graph]:
    """Molecule-like synthetic benchmark for exercising the training stack.

    Each graph is a random tree with ring closures over typed nodes. The
    positive class carries a planted "nitro-like" motif: one node of a rare
    type bonded to two leaves of another rare type. Negatives avoid that
    exact attachment pattern. Sizes vary around ``mean_nodes``.
    """
    rng = np.random.default_rng(seed)
    graphs = []
    common_types = max(1, n_node_types - 2)
    for k in range(n_graphs):
        label = int(rng.random() < 2 / 3)
        n = max(6, int(round(rng.normal(mean_nodes, 4.0))))
        types = rng.integers(0, common_types, size=n)
        adj = np.zeros((n, n))
        for v in range(1, n):
            u = int(rng.integers(max(0, v - 4), v))
            adj[u, v] = adj[v, u] = 1.0
        for _ in range(max(1, n // 6)):
            a, b = rng.choice(n, size=2, replace=False)
            adj[a, b] = adj[b, a] = 1.0
        if label:
            hub = int(rng.integers(0, n - 2))
            leaves = [n - 2, n - 1]
            types[hub] = n_node_types - 2
            for leaf in leaves:
                adj[leaf, :] = adj[:, leaf] = 0.0
                adj[hub, leaf] = adj[leaf, hub] = 1.0
                types[leaf] = n_node_types - 1
            # reattach anything orphaned by clearing the leaf rows
            for v in range(n):
                if v not in leaves and adj[v].sum() == 0:
                    u = hub if v != hub else 0
                    adj[u, v] = adj[v, u] = 1.0
        elif rng.random() < 0.5:
            # decoy: rare types present but not in the motif arrangement
            types[int(rng.integers(0, n))] = n_node_types - 2
        feats = np.zeros((n, n_node_types))
        feats[np.arange(n), types] = 1.0
        graphs.append(Graph(adj, feats, label))
    return graphs
