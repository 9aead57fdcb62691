"""Supervised cross-entropy, the uniform loss on dropped nodes, and Adam."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .tensor import Tensor, add, hadamard, log, matmul, row_mean, row_sum, scale, softmax_rows, total

logger = logging.getLogger(__name__)

EPS = 1e-12


def supervised_loss(probs: Tensor, labels, eps: float = EPS) -> Tensor:
    """Mean negative log-probability of the true class."""
    y = np.asarray(labels, dtype=np.int64).reshape(-1)
    n, c = probs.shape
    if y.size != n:
        raise ValueError(f"{y.size} labels for {n} predictions")
    onehot = np.zeros((n, c))
    onehot[np.arange(n), y] = 1.0
    picked = row_sum(hadamard(probs, Tensor(onehot)))
    if (picked.values < eps).any():
        logger.warning("true-class probability below %g clamped in %d graph(s)",
                       eps, int((picked.values < eps).sum()))
    return scale(total(log(picked, eps)), -1.0 / n)


def _pool_discarded(discarded, n_graphs: int):
    """Mean over each graph's dropped rows per layer, then over layers.

    Returns ``(z, graphs)``: one pooled row per graph that lost at least one
    node somewhere, and those graphs' ids.
    """
    counts = np.zeros((len(discarded), n_graphs))
    for l, (_, gid) in enumerate(discarded):
        np.add.at(counts[l], gid, 1.0)
    layers_hit = (counts > 0).sum(axis=0)
    graphs = np.flatnonzero(layers_hit)
    pos = -np.ones(n_graphs, dtype=np.int64)
    pos[graphs] = np.arange(graphs.size)
    z = None
    for l, (emb, gid) in enumerate(discarded):
        w = np.zeros((graphs.size, gid.size))
        w[pos[gid], np.arange(gid.size)] = 1.0 / (counts[l, gid] * layers_hit[gid])
        part = matmul(Tensor(w), emb)
        z = part if z is None else add(z, part)
    return z, graphs


def uniform_loss(discarded: Sequence[tuple[Tensor, np.ndarray]], classifier: Tensor,
                 n_graphs: int, mode: str = "pooled", eps: float = EPS) -> Tensor:
    """KL(uniform || prediction from dropped nodes), averaged over the batch.

    ``discarded`` holds, per pooling layer, the dropped rows and their graph
    ids. In ``pooled`` mode each graph's dropped rows are mean-pooled into one
    vector before the classifier; in ``per_node`` mode every dropped row gets
    its own prediction and the KL terms are averaged within the graph.
    Graphs that never lost a node contribute zero; the sum is divided by
    ``n_graphs`` either way.
    """
    discarded = [(e, g) for e, g in discarded if e is not None and e.rows]
    if not discarded:
        return Tensor(np.zeros((1, 1)))
    c = classifier.cols
    log_c = math.log(c)

    if mode == "pooled":
        z, graphs = _pool_discarded(discarded, n_graphs)
        logp = log(softmax_rows(matmul(z, classifier)), eps)
        # KL(u || q) = -log C - mean_c log q_c
        neg = total(row_mean(logp))
        n_terms = graphs.size
    elif mode == "per_node":
        counts = np.zeros(n_graphs)
        for _, gid in discarded:
            np.add.at(counts, gid, 1.0)
        neg = None
        for emb, gid in discarded:
            logp = log(softmax_rows(matmul(emb, classifier)), eps)
            part = matmul(Tensor((1.0 / counts[gid]).reshape(1, -1)), row_mean(logp))
            neg = part if neg is None else add(neg, part)
        n_terms = int((counts > 0).sum())
    else:
        raise ValueError(f"unknown uniform-loss mode {mode!r}")
    const = Tensor([[-log_c * n_terms / n_graphs]])
    return add(scale(neg, -1.0 / n_graphs), const)


def total_loss(sup: Tensor, unif: Tensor, lam: float) -> Tensor:
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    return add(sup, scale(unif, lam))


# --------------------------------------------------------------------------
# optimizer
# --------------------------------------------------------------------------

@dataclass
class AdamState:
    step: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)


def adam_step(params: Sequence[Tensor], grads: Sequence[np.ndarray | None], state: AdamState,
              lr: float = 1e-3, weight_decay: float = 0.0, betas=(0.9, 0.999),
              eps: float = 1e-8) -> None:
    """One Adam update with bias correction and decoupled weight decay, in place."""
    if not state.m:
        state.m = [np.zeros_like(p.values) for p in params]
        state.v = [np.zeros_like(p.values) for p in params]
    if len(state.m) != len(params):
        raise ValueError("optimizer state does not match parameter list")
    b1, b2 = betas
    state.step += 1
    bc1 = 1.0 - b1 ** state.step
    bc2 = 1.0 - b2 ** state.step
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if m.shape != p.values.shape:
            raise ValueError(f"state shape {m.shape} does not match parameter {p.values.shape}")
        if weight_decay:
            p.values -= lr * weight_decay * p.values
        if g is None:
            g = np.zeros_like(p.values)
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p.values -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)


class Adam:
    def __init__(self, params: Sequence[Tensor], lr: float = 1e-3, weight_decay: float = 0.0,
                 betas=(0.9, 0.999), eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.weight_decay = weight_decay
        self.betas = betas
        self.eps = eps
        self.state = AdamState()

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def step(self) -> None:
        adam_step(self.params, [p.grad for p in self.params], self.state,
                  self.lr, self.weight_decay, self.betas, self.eps)
