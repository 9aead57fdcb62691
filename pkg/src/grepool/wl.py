"""1-WL color refinement, exact (no hashing).

Colors are canonical: in every round the distinct signatures
``(own color, sorted neighbour colors)`` are sorted and numbered, so the
coloring depends only on the graph up to isomorphism. Comparing two graphs
refines their disjoint union, which keeps the two colorings on one palette.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import FormatError, Graph, graph_from_edges


@dataclass
class WLColoring:
    rounds: list[list[int]]  # rounds[0] is the initial coloring
    stable_round: int  # first round whose partition equals the previous one

    @property
    def final(self) -> list[int]:
        return self.rounds[-1]

    def histogram(self, round_: int = -1, nodes=None) -> Counter:
        colors = self.rounds[round_]
        if nodes is not None:
            colors = [colors[i] for i in nodes]
        return Counter(colors)


def _canonical(keys: list) -> list[int]:
    palette = {k: c for c, k in enumerate(sorted(set(keys)))}
    return [palette[k] for k in keys]


def wl_refine(g: Graph, max_rounds: int | None = None) -> WLColoring:
    n = g.n
    limit = n if max_rounds is None else max_rounds
    nbrs = [np.flatnonzero(row).tolist() for row in g.adjacency]
    colors = _canonical([tuple(float(x) for x in row) for row in g.features])
    rounds = [colors]
    stable = 0
    for r in range(1, limit + 1):
        keys = [(colors[v], tuple(sorted(colors[u] for u in nbrs[v]))) for v in range(n)]
        new = _canonical(keys)
        rounds.append(new)
        if len(set(new)) == len(set(colors)):
            stable = r
            break
        colors = new
    else:
        stable = len(rounds) - 1
    return WLColoring(rounds, stable)


def _union(g1: Graph, g2: Graph) -> Graph:
    n1, n2 = g1.n, g2.n
    adj = np.zeros((n1 + n2, n1 + n2))
    adj[:n1, :n1] = g1.adjacency
    adj[n1:, n1:] = g2.adjacency
    width = max(g1.d, g2.d)
    feats = np.zeros((n1 + n2, width))
    feats[:n1, :g1.d] = g1.features
    feats[n1:, :g2.d] = g2.features
    return Graph(adj, feats)


def wl_histograms(g1: Graph, g2: Graph) -> tuple[list[Counter], list[Counter]]:
    """Round-by-round color histograms of both graphs on a shared palette."""
    col = wl_refine(_union(g1, g2), max_rounds=g1.n + g2.n)
    a = range(g1.n)
    b = range(g1.n, g1.n + g2.n)
    return ([col.histogram(r, a) for r in range(len(col.rounds))],
            [col.histogram(r, b) for r in range(len(col.rounds))])


def wl_equivalent(g1: Graph, g2: Graph) -> bool:
    """True iff 1-WL cannot tell the two graphs apart."""
    if g1.n != g2.n:
        return False
    h1, h2 = wl_histograms(g1, g2)
    return all(x == y for x, y in zip(h1, h2))


def read_edge_list(path) -> Graph:
    """Parse a graph from edge-list text.

    One ``i j`` pair per line (0-indexed). Blank lines and ``#`` comments are
    skipped; a ``nodes N`` line declares isolated trailing nodes. All nodes
    get the same feature.
    """
    edges = []
    n = 0
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.replace(",", " ").split()
        try:
            if parts[0] == "nodes":
                n = max(n, int(parts[1]))
                continue
            i, j = int(parts[0]), int(parts[1])
        except (ValueError, IndexError) as exc:
            raise FormatError(f"{path}:{lineno}: expected 'i j', got {raw!r}") from exc
        if i < 0 or j < 0:
            raise FormatError(f"{path}:{lineno}: negative node index")
        edges.append((i, j))
        n = max(n, i + 1, j + 1)
    if n == 0:
        raise FormatError(f"{path}: no nodes")
    return graph_from_edges(n, edges)
