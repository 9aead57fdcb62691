"""Small builders shared by the test modules."""

import numpy as np

from grepool.data import Graph, graph_from_edges


def random_graph(rng, n, d=3, p_edge=0.4, label=0):
    iu, ju = np.triu_indices(n, k=1)
    keep = rng.random(iu.size) < p_edge
    feats = rng.uniform(-1.0, 1.0, size=(n, d))
    return graph_from_edges(n, zip(iu[keep].tolist(), ju[keep].tolist()), feats, label)


def cycle(n):
    return graph_from_edges(n, [(i, (i + 1) % n) for i in range(n)])


def path(n):
    return graph_from_edges(n, [(i, i + 1) for i in range(n - 1)])


def complete(n):
    return graph_from_edges(n, [(i, j) for i in range(n) for j in range(i + 1, n)])


def disjoint(*graphs):
    n = sum(g.n for g in graphs)
    adj = np.zeros((n, n))
    feats = []
    off = 0
    for g in graphs:
        adj[off:off + g.n, off:off + g.n] = g.adjacency
        feats.append(g.features)
        off += g.n
    return Graph(adj, np.vstack(feats))


# one line per acceptance criterion, printed in the terminal summary
ACCEPTANCE_LINES = []
