"""Wall-clock scaling of the attention scoring step."""

from __future__ import annotations

import time

import numpy as np

from .data import graph_from_edges
from .gcn import gcn_forward, normalize_adjacency
from .model import init_params
from .pooling import attention_scores
from .tensor import Tensor


def random_graph(n: int, rng: np.random.Generator, avg_degree: float = 3.0):
    p = min(1.0, avg_degree / max(n - 1, 1))
    iu, ju = np.triu_indices(n, k=1)
    keep = rng.random(iu.size) < p
    return graph_from_edges(n, zip(iu[keep].tolist(), ju[keep].tolist()))


def time_attention(n: int, dim: int = 128, heads: int = 4, repeats: int = 50,
                   seed: int = 0) -> float:
    """Mean seconds for one ``attention_scores`` call on an ``n``-node graph."""
    rng = np.random.default_rng(seed)
    g = random_graph(n, rng)
    params = init_params(1, dim, 2, layers=1, heads=heads, seed=seed)
    # embeddings as the first block would produce them
    h = gcn_forward(Tensor(g.features), normalize_adjacency(g.adjacency), params.gcn[0]).detach()
    h = Tensor(h.values + rng.normal(0, 0.1, size=h.shape))
    gid = np.zeros(n, dtype=np.int64)
    attn = params.attn[0]
    attention_scores(h, attn, gid, 1)  # warm-up
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        attention_scores(h, attn, gid, 1)
        times.append(time.perf_counter() - t0)
    return float(np.mean(times))


def bench(n_list, dim: int = 128, heads: int = 4, repeats: int = 50, seed: int = 0) -> list[dict]:
    rows = []
    prev = None
    for n in n_list:
        t = time_attention(int(n), dim, heads, repeats, seed)
        rows.append({"n": int(n), "seconds": t, "ratio": None if prev is None else t / prev})
        prev = t
    return rows
