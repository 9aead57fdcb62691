"""Attention-driven node-drop pooling against a learnable global node.

One pooling layer does four things:

1. ``attention_scores`` - each head attends from its global query to the
   keys of every node in the same graph; the per-node significance score is
   the mean of the heads' attention weights.
2. ``select_nodes`` - keep ``ceil(p * n)`` nodes per graph by score.
3. ``coarsen`` - gate kept rows by their score and induce the subgraph.
4. ``global_readout`` - the global node's embedding, an attention-weighted
   sum of the kept nodes' value vectors.

All of it runs on a block-diagonal batch; ``graph_id`` tags each row.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal

import numpy as np

from .tensor import (
    Tensor,
    concat_cols,
    gather_rows,
    matmul,
    mean_of,
    reciprocal,
    scale,
    scale_rows,
    segment_softmax,
    segment_sum,
    slice_cols,
    transpose,
)

Strategy = Literal["attention", "random", "reverse"]
STRATEGIES: tuple[str, ...] = ("attention", "random", "reverse")


class ConfigurationError(ValueError):
    pass


@dataclass
class AttnParams:
    queries: list[Tensor]  # one 1 x head_dim query per head
    w_key: Tensor  # d x d
    w_value: Tensor  # d x d

    @property
    def heads(self) -> int:
        return len(self.queries)

    @property
    def dim(self) -> int:
        return self.w_key.rows

    @property
    def head_dim(self) -> int:
        return self.dim // self.heads

    def tensors(self) -> list[Tensor]:
        return [*self.queries, self.w_key, self.w_value]


@dataclass
class Attention:
    scores: Tensor  # n x 1, mean over heads
    per_head: list[Tensor]  # each n x 1
    values: Tensor  # n x d, V = H W_V
    keys: Tensor  # n x d, K = H W_K


@dataclass
class PoolOutput:
    retained_idx: np.ndarray
    discarded_idx: np.ndarray
    coarse_features: Tensor  # k x d, gated
    coarse_adj: np.ndarray  # k x k
    graph_id: np.ndarray  # graph tag of each kept row
    discarded_embeddings: Tensor | None  # (n - k) x d, ungated; None if nothing dropped
    discarded_graph_id: np.ndarray
    h_global: Tensor  # n_graphs x d
    attention: Attention

    @property
    def scores(self) -> Tensor:
        return self.attention.scores


def keep_count(p: float, n: int) -> int:
    """Nodes kept out of ``n`` at pooling ratio ``p``; never fewer than one."""
    # guard against p * n landing a hair above an integer (0.7 * 10)
    return max(1, math.ceil(p * n - 1e-9))


def attention_scores(h: Tensor, attn: AttnParams, graph_id, n_graphs: int | None = None) -> Attention:
    d = h.cols
    heads = attn.heads
    if d % heads:
        raise ConfigurationError(f"embedding width {d} is not divisible by {heads} heads")
    if attn.dim != d:
        raise ConfigurationError(f"attention expects width {attn.dim}, embeddings have {d}")
    dh = d // heads
    keys = matmul(h, attn.w_key)
    values = matmul(h, attn.w_value)
    per_head = []
    for k, q in enumerate(attn.queries):
        k_h = slice_cols(keys, k * dh, (k + 1) * dh)
        logits = scale(matmul(k_h, transpose(q)), 1.0 / math.sqrt(dh))
        per_head.append(segment_softmax(logits, graph_id, n_graphs))
    return Attention(mean_of(per_head), per_head, values, keys)


def select_nodes(scores, graph_id, p: float, strategy: str = "attention",
                 rng: np.random.Generator | None = None) -> np.ndarray:
    """Indices of the nodes kept in each graph, sorted ascending.

    ``attention`` keeps the highest scores, ``reverse`` the lowest, ``random``
    a uniform sample without replacement. Ties go to the lower node index.
    """
    if not 0 < p <= 1:
        raise ConfigurationError(f"pooling ratio must lie in (0, 1], got {p}")
    s = np.asarray(scores.values if isinstance(scores, Tensor) else scores,
                   dtype=np.float64).reshape(-1)
    gid = np.asarray(graph_id, dtype=np.int64).reshape(-1)
    n = s.size
    idx = np.arange(n)
    if strategy == "attention":
        order = np.lexsort((idx, -s, gid))
    elif strategy == "reverse":
        order = np.lexsort((idx, s, gid))
    elif strategy == "random":
        if rng is None:
            raise ConfigurationError("random selection needs an rng")
        order = np.lexsort((rng.random(n), gid))
    else:
        raise ConfigurationError(f"unknown selection strategy {strategy!r}")
    sorted_gid = gid[order]
    starts = np.flatnonzero(np.r_[True, sorted_gid[1:] != sorted_gid[:-1]])
    sizes = np.diff(np.r_[starts, n])
    rank = np.arange(n) - np.repeat(starts, sizes)
    limit = np.repeat([keep_count(p, int(m)) for m in sizes], sizes)
    return np.sort(order[rank < limit])


def coarsen(h: Tensor, adj: np.ndarray, graph_id, retained_idx, scores: Tensor):
    """Gate kept rows by score and restrict the adjacency to them.

    Returns ``(coarse_features, coarse_adj, coarse_graph_id, discarded_idx,
    discarded_embeddings)``. Discarded rows come out ungated.
    """
    gid = np.asarray(graph_id)
    keep = np.asarray(retained_idx, dtype=np.int64)
    mask = np.ones(h.rows, dtype=bool)
    mask[keep] = False
    drop = np.flatnonzero(mask)
    features = scale_rows(gather_rows(h, keep), gather_rows(scores, keep))
    coarse_adj = adj[np.ix_(keep, keep)]
    discarded = gather_rows(h, drop) if drop.size else None
    return features, coarse_adj, gid[keep], drop, discarded


def segment_matrix(row_graph_id, n_graphs: int) -> np.ndarray:
    """n_graphs x n_rows 0/1 matrix summing rows into their graph."""
    gid = np.asarray(row_graph_id, dtype=np.int64)
    m = np.zeros((n_graphs, gid.size))
    m[gid, np.arange(gid.size)] = 1.0
    return m


def global_readout(values: Tensor, per_head: list[Tensor], retained_idx, graph_id,
                   n_graphs: int, renormalize: bool = False) -> Tensor:
    """Per head: sum over kept nodes of attention weight times value row.

    With ``renormalize`` the kept weights are rescaled to sum to one per graph
    before the sum; by default they are used as-is, so the readout also
    reflects how much attention mass survived selection.
    """
    keep = np.asarray(retained_idx, dtype=np.int64)
    gid = np.asarray(graph_id)[keep]
    dh = values.cols // len(per_head)
    outs = []
    for k, a in enumerate(per_head):
        w = gather_rows(a, keep)
        if renormalize:
            mass = segment_sum(w, gid, n_graphs)  # n_graphs x 1
            w = scale_rows(w, reciprocal(gather_rows(mass, gid)))
        v = gather_rows(slice_cols(values, k * dh, (k + 1) * dh), keep)
        outs.append(segment_sum(scale_rows(v, w), gid, n_graphs))
    return outs[0] if len(outs) == 1 else concat_cols(outs)


def grepool_layer(h: Tensor, adj: np.ndarray, graph_id, n_graphs: int, attn: AttnParams,
                  p: float, strategy: str = "attention",
                  rng: np.random.Generator | None = None,
                  renormalize: bool = False) -> PoolOutput:
    att = attention_scores(h, attn, graph_id, n_graphs)
    keep = select_nodes(att.scores, graph_id, p, strategy, rng)
    feats, cadj, cgid, drop, discarded = coarsen(h, adj, graph_id, keep, att.scores)
    h_global = global_readout(att.values, att.per_head, keep, graph_id, n_graphs, renormalize)
    return PoolOutput(
        retained_idx=keep,
        discarded_idx=drop,
        coarse_features=feats,
        coarse_adj=cadj,
        graph_id=cgid,
        discarded_embeddings=discarded,
        discarded_graph_id=np.asarray(graph_id)[drop],
        h_global=h_global,
        attention=att,
    )
