"""Training loop, model selection, and multi-seed experiments."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from . import baselines, model
from .data import Graph, GraphBatch, make_batch, make_splits, num_classes
from .losses import Adam, supervised_loss, total_loss, uniform_loss
from .pooling import STRATEGIES, ConfigurationError
from .tensor import backward

logger = logging.getLogger(__name__)


class DivergenceError(ArithmeticError):
    pass


@dataclass(frozen=True)
class PoolingMethod:
    """A node-drop pooling network plus the objective it is trained with."""

    name: str
    init_params: Callable
    forward: Callable
    uniform: bool = False
    lam: float = 0.0


GREPOOL = PoolingMethod("GrePool", model.init_params, model.forward)
SAGPOOL = PoolingMethod("SAGPool", baselines.init_sag_params, baselines.sag_forward)
METHODS = {"grepool": GREPOOL, "sagpool": SAGPOOL}


def uniform_loss_wrapper(method: PoolingMethod, lam: float) -> PoolingMethod:
    """Train ``method`` with the uniform loss on its dropped nodes added."""
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    return replace(method, name=method.name.rstrip("+") + "+", uniform=True, lam=lam)


@dataclass(frozen=True)
class TrainConfig:
    model: str = "grepool"
    p: float = 0.5
    lam: float = 0.1
    layers: int = 3
    heads: int = 4
    hidden: int = 128
    lr: float = 1e-3
    weight_decay: float = 5e-4
    epochs: int = 200
    batch_size: int = 32
    seed: int = 0
    strategy: str = "attention"
    uniform_loss: bool = False
    uniform_mode: str = "pooled"
    renormalize: bool = False
    split: tuple[float, float, float] = (0.8, 0.1, 0.1)
    patience: int | None = None

    def __post_init__(self) -> None:
        errors = self.problems()
        if errors:
            field_name, msg = errors[0]
            raise ConfigurationError(f"{field_name}: {msg}")

    def problems(self) -> list[tuple[str, str]]:
        out = []
        if not 0 < self.p <= 1:
            out.append(("p", f"must lie in (0, 1], got {self.p}"))
        if self.lam < 0:
            out.append(("lam", f"must be >= 0, got {self.lam}"))
        if self.lr <= 0:
            out.append(("lr", f"must be > 0, got {self.lr}"))
        if self.layers < 1:
            out.append(("layers", "must be >= 1"))
        if self.heads < 1 or self.hidden % self.heads:
            out.append(("heads", f"must divide hidden={self.hidden}"))
        if self.epochs < 1:
            out.append(("epochs", "must be >= 1"))
        if self.batch_size < 1:
            out.append(("batch_size", "must be >= 1"))
        if self.strategy not in STRATEGIES:
            out.append(("strategy", f"must be one of {STRATEGIES}"))
        if self.model not in METHODS:
            out.append(("model", f"must be one of {sorted(METHODS)}"))
        if self.uniform_mode not in ("pooled", "per_node"):
            out.append(("uniform_mode", "must be 'pooled' or 'per_node'"))
        return out

    @property
    def method(self) -> PoolingMethod:
        base = METHODS[self.model]
        return uniform_loss_wrapper(base, self.lam) if self.uniform_loss else base

    @property
    def effective_lam(self) -> float:
        return self.lam if self.uniform_loss else 0.0


@dataclass
class EpochLog:
    epoch: int
    sup: float
    unif: float
    total: float
    train_acc: float
    valid_acc: float
    test_acc: float


@dataclass
class RunResult:
    seed: int
    test_acc: float
    best_epoch: int
    valid_acc: float
    history: list[EpochLog] = field(default_factory=list)
    failed: bool = False
    diagnostics: str = ""

    def curves(self) -> dict[str, list[float]]:
        keys = ("sup", "unif", "total", "train_acc", "valid_acc", "test_acc")
        return {k: [getattr(e, k) for e in self.history] for k in keys}


@dataclass
class ExperimentResult:
    runs: list[RunResult]

    @property
    def accuracies(self) -> np.ndarray:
        return np.array([r.test_acc for r in self.runs if not r.failed])

    @property
    def mean(self) -> float:
        acc = self.accuracies
        return float(acc.mean()) if acc.size else float("nan")

    @property
    def std(self) -> float:
        """Sample standard deviation over successful runs."""
        acc = self.accuracies
        return float(acc.std(ddof=1)) if acc.size > 1 else 0.0

    @property
    def failures(self) -> int:
        return sum(r.failed for r in self.runs)


@dataclass
class LossParts:
    total: object
    sup: object
    unif: object


def objective(method: PoolingMethod, out: model.ForwardOutput, labels, params,
              uniform_mode: str = "pooled") -> LossParts:
    """Loss of one forward pass. Without the wrapper the uniform term is
    still evaluated (on detached inputs) so that it can be logged."""
    sup = supervised_loss(out.probs, labels)
    if method.uniform:
        unif = uniform_loss(out.discarded, params.classifier, out.n_graphs, uniform_mode)
        return LossParts(total_loss(sup, unif, method.lam), sup, unif)
    detached = [(e.detach(), g) for e, g in out.discarded]
    unif = uniform_loss(detached, params.classifier.detach(), out.n_graphs, uniform_mode)
    return LossParts(sup, sup, unif)


def accuracy(method: PoolingMethod, params, batch: GraphBatch, cfg: TrainConfig,
             rng: np.random.Generator) -> tuple[float, float]:
    out = method.forward(batch, params.frozen(), cfg.p, cfg.strategy, rng, cfg.renormalize)
    pred = out.probs.values.argmax(axis=1)
    loss = supervised_loss(out.probs, batch.labels).item()
    return float((pred == batch.labels).mean()), loss


def train(graphs: Sequence[Graph], config: TrainConfig, seed: int | None = None) -> RunResult:
    """Train on a fresh split and initialization for ``seed``.

    The reported test accuracy is taken at the epoch with the best
    validation accuracy (ties broken by lower validation loss, then by the
    earlier epoch).
    """
    seed = config.seed if seed is None else seed
    method = config.method
    labels = [g.label for g in graphs]
    split = make_splits(labels, config.split, seed)
    c = num_classes(graphs)
    params = method.init_params(graphs[0].d, config.hidden, c, config.layers, config.heads, seed)
    opt = Adam(params.tensors(), lr=config.lr, weight_decay=config.weight_decay)
    rng = np.random.default_rng([seed, 1])
    valid_batch = make_batch([graphs[i] for i in split.valid]) if split.valid else None
    test_batch = make_batch([graphs[i] for i in split.test]) if split.test else None
    train_idx = np.array(split.train)

    result = RunResult(seed=seed, test_acc=float("nan"), best_epoch=-1, valid_acc=-1.0)
    best_key = (-1.0, -math.inf)
    since_best = 0
    try:
        for epoch in range(config.epochs):
            order = rng.permutation(train_idx)
            sums = np.zeros(3)
            correct = 0
            for start in range(0, order.size, config.batch_size):
                chunk = order[start:start + config.batch_size]
                batch = make_batch([graphs[i] for i in chunk])
                opt.zero_grad()
                out = method.forward(batch, params, config.p, config.strategy, rng, config.renormalize)
                parts = objective(method, out, batch.labels, params, config.uniform_mode)
                vals = np.array([parts.sup.item(), parts.unif.item(), parts.total.item()])
                if not np.isfinite(vals).all():
                    raise DivergenceError(f"non-finite loss {vals.tolist()} at epoch {epoch}")
                backward(parts.total)
                opt.step()
                sums += vals * chunk.size
                correct += int((out.probs.values.argmax(axis=1) == batch.labels).sum())
            sup, unif = (float(x) for x in sums[:2] / order.size)
            # logged total is rebuilt from the logged parts so the identity holds exactly
            tot = sup + config.effective_lam * unif
            v_acc, v_loss = accuracy(method, params, valid_batch, config, rng) if valid_batch else (0.0, 0.0)
            t_acc, _ = accuracy(method, params, test_batch, config, rng) if test_batch else (0.0, 0.0)
            result.history.append(EpochLog(epoch, sup, unif, tot, correct / order.size, v_acc, t_acc))
            key = (v_acc, -v_loss)
            if key > best_key:
                best_key = key
                result.best_epoch, result.valid_acc, result.test_acc = epoch, v_acc, t_acc
                since_best = 0
            else:
                since_best += 1
                if config.patience is not None and since_best >= config.patience:
                    break
    except (DivergenceError, FloatingPointError) as exc:
        result.failed = True
        result.diagnostics = str(exc)
        logger.error("seed %d diverged: %s", seed, exc)
    return result


def _train_job(args):
    graphs, config, seed = args
    return train(graphs, config, seed)


def run_experiment(graphs: Sequence[Graph], config: TrainConfig, n_seeds: int = 10,
                   jobs: int = 1) -> ExperimentResult:
    """Independent runs for seeds ``config.seed .. config.seed + n_seeds - 1``."""
    seeds = [config.seed + k for k in range(n_seeds)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            runs = list(pool.map(_train_job, [(graphs, config, s) for s in seeds]))
    else:
        runs = [train(graphs, config, s) for s in seeds]
    return ExperimentResult(runs)


def config_dict(config: TrainConfig) -> dict:
    d = asdict(config)
    d["split"] = list(d["split"])
    return d
