"""SAGPool-style score-based pooling, kept as a comparison baseline.

Node scores come from a one-channel GCN projection squashed by tanh; the
top ``ceil(p * n)`` nodes survive, gated by their score. Each block's
readout is the mean of its surviving (gated) rows; the classifier sees the
sum over blocks, the same head the attention model uses, so the uniform
loss can be attached to either model unchanged.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import GraphBatch
from .gcn import GcnParams, gcn_forward, normalize_adjacency
from .model import ForwardOutput
from .pooling import ConfigurationError, coarsen, segment_matrix, select_nodes
from .tensor import Tensor, add, add_row, matmul, softmax_rows, tanh


@dataclass
class SagParams:
    gcn: list[GcnParams]
    scorers: list[GcnParams]  # d x 1 projections
    classifier: Tensor

    @property
    def layers(self) -> int:
        return len(self.gcn)

    def named(self) -> dict[str, Tensor]:
        out: dict[str, Tensor] = {}
        for i, (g, s) in enumerate(zip(self.gcn, self.scorers)):
            out[f"gcn{i}.weight"] = g.weight
            out[f"gcn{i}.bias"] = g.bias
            out[f"score{i}.weight"] = s.weight
            out[f"score{i}.bias"] = s.bias
        out["classifier"] = self.classifier
        return out

    def tensors(self) -> list[Tensor]:
        return list(self.named().values())

    def count(self) -> int:
        return sum(t.values.size for t in self.tensors())

    def frozen(self) -> SagParams:
        return SagParams(
            [GcnParams(g.weight.detach(), g.bias.detach()) for g in self.gcn],
            [GcnParams(s.weight.detach(), s.bias.detach()) for s in self.scorers],
            self.classifier.detach(),
        )


@dataclass
class ScorePoolOutput:
    retained_idx: np.ndarray
    scores: Tensor
    discarded_embeddings: Tensor | None
    discarded_graph_id: np.ndarray


def init_sag_params(in_dim: int, hidden: int, n_classes: int, layers: int = 3,
                    heads: int = 1, seed: int = 0) -> SagParams:
    del heads  # accepted for a uniform signature; the scorer has no heads
    if layers < 1:
        raise ConfigurationError("need at least one layer")
    rng = np.random.default_rng(seed)

    def uni(fan_in, shape):
        b = 1.0 / math.sqrt(fan_in)
        return Tensor(rng.uniform(-b, b, size=shape), requires_grad=True)

    gcn, scorers = [], []
    for i in range(layers):
        d_in = in_dim if i == 0 else hidden
        gcn.append(GcnParams(uni(d_in, (d_in, hidden)), Tensor(np.zeros((1, hidden)), requires_grad=True)))
        scorers.append(GcnParams(uni(hidden, (hidden, 1)), Tensor(np.zeros((1, 1)), requires_grad=True)))
    return SagParams(gcn, scorers, uni(hidden, (hidden, n_classes)))


def sag_forward(batch: GraphBatch, params: SagParams, p: float = 0.5, strategy: str = "attention",
                rng: np.random.Generator | None = None, renormalize: bool = False) -> ForwardOutput:
    del renormalize
    n_graphs = batch.n_graphs
    h = Tensor(batch.features)
    adj = batch.adjacency
    gid = batch.graph_id
    readouts, pools = [], []
    for gcn_p, score_p in zip(params.gcn, params.scorers):
        norm = Tensor(normalize_adjacency(adj))
        h = gcn_forward(h, norm, gcn_p)
        score = tanh(add_row(matmul(norm, matmul(h, score_p.weight)), score_p.bias))
        keep = select_nodes(score, gid, p, strategy, rng)
        feats, cadj, cgid, drop, discarded = coarsen(h, adj, gid, keep, score)
        seg = segment_matrix(cgid, n_graphs)
        seg /= seg.sum(axis=1, keepdims=True)
        readouts.append(matmul(Tensor(seg), feats))
        pools.append(ScorePoolOutput(keep, score, discarded, gid[drop]))
        h, adj, gid = feats, cadj, cgid
    summed = readouts[0]
    for r in readouts[1:]:
        summed = add(summed, r)
    logits = matmul(summed, params.classifier)
    return ForwardOutput(logits, softmax_rows(logits), readouts, pools, n_graphs)
