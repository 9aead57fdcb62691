import math

import numpy as np
import pytest

from grepool.data import Graph, triangle_dataset
from grepool.pooling import ConfigurationError
from grepool.training import (
    GREPOOL,
    SAGPOOL,
    ExperimentResult,
    RunResult,
    TrainConfig,
    run_experiment,
    train,
    uniform_loss_wrapper,
)

SMALL = dict(hidden=16, heads=2, layers=2, epochs=50, batch_size=8)


@pytest.fixture(scope="module")
def triangles():
    return triangle_dataset(20, seed=0)


def test_config_rejects_bad_ratio():
    with pytest.raises(ConfigurationError, match=r"\bp\b"):
        TrainConfig(p=1.5)
    with pytest.raises(ConfigurationError, match="strategy"):
        TrainConfig(strategy="best")


def test_triangle_task_is_learned(triangles):
    res = train(triangles, TrainConfig(**SMALL), seed=0)
    assert res.test_acc == 1.0
    assert not res.failed


def test_sagpool_beats_chance_on_triangles(triangles):
    res = train(triangles, TrainConfig(model="sagpool", **SMALL), seed=0)
    assert res.test_acc >= 0.5


def test_loss_identity_every_epoch(triangles):
    cfg = TrainConfig(uniform_loss=True, lam=0.7, **{**SMALL, "epochs": 5})
    res = train(triangles, cfg, seed=1)
    for e in res.history:
        assert abs(e.total - (e.sup + 0.7 * e.unif)) < 1e-10
    plain = train(triangles, TrainConfig(**{**SMALL, "epochs": 5}), seed=1)
    for e in plain.history:
        assert e.total == e.sup


def test_zero_lambda_wrapper_is_bitwise_baseline(triangles):
    cfg = dict(SMALL, epochs=8)
    a = train(triangles, TrainConfig(**cfg), seed=3)
    b = train(triangles, TrainConfig(uniform_loss=True, lam=0.0, **cfg), seed=3)
    assert [e.sup for e in a.history] == [e.sup for e in b.history]
    assert [e.test_acc for e in a.history] == [e.test_acc for e in b.history]
    assert a.test_acc == b.test_acc


def test_wrapper_naming():
    assert uniform_loss_wrapper(GREPOOL, 0.1).name == "GrePool+"
    assert uniform_loss_wrapper(SAGPOOL, 0.1).uniform
    with pytest.raises(ValueError):
        uniform_loss_wrapper(GREPOOL, -0.1)


def test_training_deterministic(triangles):
    cfg = TrainConfig(**{**SMALL, "epochs": 4})
    assert train(triangles, cfg, seed=5) == train(triangles, cfg, seed=5)


def test_parallel_matches_serial(triangles):
    cfg = TrainConfig(**{**SMALL, "epochs": 3})
    serial = run_experiment(triangles, cfg, n_seeds=3, jobs=1)
    parallel = run_experiment(triangles, cfg, n_seeds=3, jobs=2)
    assert serial == parallel


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_is_reported():
    graphs = triangle_dataset(10, seed=0)
    bad = [Graph(g.adjacency, np.full_like(g.features, np.nan), g.label) for g in graphs]
    res = train(bad, TrainConfig(**{**SMALL, "epochs": 2}), seed=0)
    assert res.failed
    assert "non-finite" in res.diagnostics


def test_aggregate_uses_sample_std():
    runs = [RunResult(seed=k, test_acc=a, best_epoch=0, valid_acc=0.0) for k, a in enumerate([0.5, 0.7, 0.9])]
    agg = ExperimentResult(runs)
    assert agg.mean == pytest.approx(0.7)
    assert agg.std == pytest.approx(math.sqrt(((0.2) ** 2 * 2) / 2))
