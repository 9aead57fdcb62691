"""The stacked GCN -> attention-pooling network and its parameters.

Each of the ``L`` blocks runs one GCN layer on the current (coarsened) graph
and pools it. The global-node embeddings of all blocks are summed and fed
to a bias-free linear classifier followed by a softmax.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import GraphBatch
from .gcn import GcnParams, gcn_forward, normalize_adjacency
from .pooling import AttnParams, ConfigurationError, PoolOutput, grepool_layer
from .tensor import Tensor, add, matmul, softmax_rows

CHECKPOINT_MAGIC = "grepool-checkpoint"
CHECKPOINT_VERSION = 1


@dataclass
class ModelParams:
    gcn: list[GcnParams]
    attn: list[AttnParams]
    classifier: Tensor  # d x C

    @property
    def layers(self) -> int:
        return len(self.gcn)

    def named(self) -> dict[str, Tensor]:
        out: dict[str, Tensor] = {}
        for i, g in enumerate(self.gcn):
            out[f"gcn{i}.weight"] = g.weight
            out[f"gcn{i}.bias"] = g.bias
        for i, a in enumerate(self.attn):
            for h, q in enumerate(a.queries):
                out[f"attn{i}.query{h}"] = q
            out[f"attn{i}.w_key"] = a.w_key
            out[f"attn{i}.w_value"] = a.w_value
        out["classifier"] = self.classifier
        return out

    def tensors(self) -> list[Tensor]:
        return list(self.named().values())

    def count(self) -> int:
        return sum(t.values.size for t in self.tensors())

    def frozen(self) -> ModelParams:
        """Copy sharing values but not tracking gradients (for evaluation)."""
        return ModelParams(
            [GcnParams(g.weight.detach(), g.bias.detach()) for g in self.gcn],
            [AttnParams([q.detach() for q in a.queries], a.w_key.detach(), a.w_value.detach())
             for a in self.attn],
            self.classifier.detach(),
        )


@dataclass
class ForwardOutput:
    logits: Tensor  # n_graphs x C
    probs: Tensor  # n_graphs x C
    readouts: list[Tensor]  # per layer, n_graphs x d
    pools: list[PoolOutput] = field(default_factory=list)
    n_graphs: int = 0

    @property
    def discarded(self) -> list[tuple[Tensor, np.ndarray]]:
        """Per layer: (discarded embeddings, their graph ids), skipping empty layers."""
        return [(p.discarded_embeddings, p.discarded_graph_id) for p in self.pools
                if p.discarded_embeddings is not None]

    @property
    def scores(self) -> list[np.ndarray]:
        return [p.scores.values[:, 0].copy() for p in self.pools]


def _uniform(rng: np.random.Generator, fan_in: int, shape) -> Tensor:
    bound = 1.0 / math.sqrt(fan_in)
    return Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=True)


def init_params(in_dim: int, hidden: int, n_classes: int, layers: int = 3, heads: int = 4,
                seed: int = 0) -> ModelParams:
    """Uniform(+-1/sqrt(fan_in)) weights, zero biases, N(0, 1/d) queries."""
    if hidden % heads:
        raise ConfigurationError(f"hidden width {hidden} is not divisible by {heads} heads")
    if layers < 1:
        raise ConfigurationError("need at least one layer")
    rng = np.random.default_rng(seed)
    dh = hidden // heads
    gcn, attn = [], []
    for i in range(layers):
        d_in = in_dim if i == 0 else hidden
        gcn.append(GcnParams(_uniform(rng, d_in, (d_in, hidden)),
                             Tensor(np.zeros((1, hidden)), requires_grad=True)))
        queries = [Tensor(rng.normal(0.0, 1.0 / math.sqrt(hidden), size=(1, dh)), requires_grad=True)
                   for _ in range(heads)]
        attn.append(AttnParams(queries, _uniform(rng, hidden, (hidden, hidden)),
                               _uniform(rng, hidden, (hidden, hidden))))
    return ModelParams(gcn, attn, _uniform(rng, hidden, (hidden, n_classes)))


def forward(batch: GraphBatch, params: ModelParams, p: float = 0.5, strategy: str = "attention",
            rng: np.random.Generator | None = None, renormalize: bool = False) -> ForwardOutput:
    if batch.features.shape[1] != params.gcn[0].weight.rows:
        raise ConfigurationError(
            f"batch has {batch.features.shape[1]} features, model expects {params.gcn[0].weight.rows}")
    n_graphs = batch.n_graphs
    h = Tensor(batch.features)
    adj = batch.adjacency
    gid = batch.graph_id
    readouts, pools = [], []
    for gcn_p, attn_p in zip(params.gcn, params.attn):
        h = gcn_forward(h, normalize_adjacency(adj), gcn_p)
        pool = grepool_layer(h, adj, gid, n_graphs, attn_p, p, strategy, rng, renormalize)
        readouts.append(pool.h_global)
        pools.append(pool)
        h, adj, gid = pool.coarse_features, pool.coarse_adj, pool.graph_id
    summed = readouts[0]
    for r in readouts[1:]:
        summed = add(summed, r)
    logits = matmul(summed, params.classifier)
    return ForwardOutput(logits, softmax_rows(logits), readouts, pools, n_graphs)


# --------------------------------------------------------------------------
# checkpoints
# --------------------------------------------------------------------------
#
# Plain text, one header line then one block per parameter:
#
#   grepool-checkpoint 1
#   <name> <rows> <cols>
#   <rows lines of cols space-separated floats, repr precision>
#
# Parameter order follows ModelParams.named().

def save_checkpoint(params: ModelParams, path) -> None:
    lines = [f"{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION}"]
    for name, t in params.named().items():
        lines.append(f"{name} {t.rows} {t.cols}")
        lines.extend(" ".join(repr(float(x)) for x in row) for row in t.values)
    Path(path).write_text("\n".join(lines) + "\n")


def load_checkpoint(path) -> ModelParams:
    lines = Path(path).read_text().splitlines()
    magic, _, version = lines[0].partition(" ")
    if magic != CHECKPOINT_MAGIC or int(version) != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: not a version {CHECKPOINT_VERSION} checkpoint")
    tensors: dict[str, Tensor] = {}
    i = 1
    while i < len(lines):
        name, rows, cols = lines[i].split()
        r, c = int(rows), int(cols)
        vals = np.array([[float(x) for x in lines[i + 1 + k].split()] for k in range(r)]).reshape(r, c)
        tensors[name] = Tensor(vals, requires_grad=True)
        i += 1 + r
    layers = sum(1 for k in tensors if k.endswith(".weight") and k.startswith("gcn"))
    gcn = [GcnParams(tensors[f"gcn{l}.weight"], tensors[f"gcn{l}.bias"]) for l in range(layers)]
    attn = []
    for l in range(layers):
        heads = sum(1 for k in tensors if k.startswith(f"attn{l}.query"))
        attn.append(AttnParams([tensors[f"attn{l}.query{h}"] for h in range(heads)],
                               tensors[f"attn{l}.w_key"], tensors[f"attn{l}.w_value"]))
    return ModelParams(gcn, attn, tensors["classifier"])
