import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from grepool.data import make_batch
from grepool.losses import Adam, AdamState, adam_step, supervised_loss, total_loss, uniform_loss
from grepool.model import forward, init_params
from grepool.tensor import Tensor, backward, grad_check, zero_grad

from helpers import random_graph


def test_supervised_one_hot_is_zero():
    assert supervised_loss(Tensor(np.eye(3)), [0, 1, 2]).item() == 0.0


@given(c=st.integers(2, 12), n=st.integers(1, 20), seed=st.integers(0, 1000))
def test_supervised_uniform_is_log_c(c, n, seed):
    labels = np.random.default_rng(seed).integers(0, c, size=n)
    loss = supervised_loss(Tensor(np.full((n, c), 1.0 / c)), labels).item()
    assert abs(loss - math.log(c)) < 1e-12


def test_supervised_batch_value():
    probs = Tensor([[0.5, 0.5], [0.75, 0.25]])
    expected = (-math.log(0.5) - math.log(0.25)) / 2
    assert supervised_loss(probs, [0, 1]).item() == pytest.approx(expected, abs=1e-15)
    assert expected == pytest.approx(1.0397, abs=1e-4)


def test_supervised_clamp_warns(caplog):
    with caplog.at_level("WARNING"):
        loss = supervised_loss(Tensor([[1.0, 0.0]]), [1]).item()
    assert loss == pytest.approx(-math.log(1e-12))
    assert "clamped" in caplog.text


def one_layer(emb, gid):
    return [(Tensor(emb, requires_grad=True), np.asarray(gid))]


def test_uniform_prediction_gives_zero():
    rng = np.random.default_rng(0)
    val = uniform_loss(one_layer(rng.normal(size=(3, 4)), [0, 0, 1]), Tensor(np.zeros((4, 3))), 2)
    assert abs(val.item()) < 1e-12


def test_one_hot_prediction_clamped_value():
    # logits [0, 1000] give probabilities (0, 1) in double precision
    clf = Tensor([[0.0, 1000.0]])
    val = uniform_loss(one_layer([[1.0]], [0]), clf, 1).item()
    expected = 0.5 * math.log(0.5 / 1e-12) + 0.5 * math.log(0.5 / 1.0)
    assert val == pytest.approx(expected, abs=1e-9)
    assert val == pytest.approx(13.12, abs=0.01)


def test_no_discarded_nodes_is_exact_zero():
    assert uniform_loss([], Tensor(np.ones((4, 2))), 3).item() == 0.0


def test_uniform_loss_pooled_matches_direct():
    emb = np.array([[1.0, 0.0], [0.0, 2.0], [1.0, 1.0]])
    w = np.array([[1.0, -1.0], [0.5, 0.0]])
    # graph 0 drops rows 0,1 in layer one and nothing later; graph 1 drops row 2
    val = uniform_loss(one_layer(emb, [0, 0, 1]), Tensor(w), 3).item()

    def kl_u(z):
        q = np.exp(z @ w) / np.exp(z @ w).sum()
        return float(np.sum(0.5 * np.log(0.5 / q)))

    expected = (kl_u(emb[:2].mean(axis=0)) + kl_u(emb[2])) / 3
    assert val == pytest.approx(expected, abs=1e-14)


@given(seed=st.integers(0, 10**6), mode=st.sampled_from(["pooled", "per_node"]))
def test_uniform_loss_nonnegative(seed, mode):
    rng = np.random.default_rng(seed)
    layers = [(Tensor(rng.normal(size=(m, 4)) * 3), rng.integers(0, 3, size=m))
              for m in rng.integers(1, 5, size=2)]
    val = uniform_loss(layers, Tensor(rng.normal(size=(4, 3))), 3, mode).item()
    assert val >= -1e-15


def test_uniform_loss_unknown_mode():
    with pytest.raises(ValueError):
        uniform_loss(one_layer([[1.0]], [0]), Tensor([[1.0, 0.0]]), 1, mode="max")


def test_uniform_loss_gradients_match_fd():
    rng = np.random.default_rng(1)
    layers = [(Tensor(rng.normal(size=(m, 3)), requires_grad=True), rng.integers(0, 2, size=m))
              for m in (3, 2)]
    w = Tensor(rng.normal(size=(3, 2)), requires_grad=True)
    for mode in ("pooled", "per_node"):
        rep = grad_check(lambda: uniform_loss(layers, w, 2, mode), [e for e, _ in layers] + [w])
        assert rep.ok, (mode, rep.failures)


def test_total_loss_arithmetic():
    sup, unif = Tensor([[1.0]]), Tensor([[0.5]])
    assert total_loss(sup, unif, 0.0).item() == 1.0
    assert total_loss(sup, unif, 0.1).item() == pytest.approx(1.05, abs=1e-15)
    with pytest.raises(ValueError):
        total_loss(sup, unif, -1.0)


def test_total_gradient_decomposes():
    rng = np.random.default_rng(2)
    batch = make_batch([random_graph(rng, n, d=3, label=n % 2) for n in (5, 7, 6)])
    params = init_params(3, 8, 2, layers=2, heads=2, seed=2)
    lam = 0.3

    def parts():
        out = forward(batch, params, 0.5)
        return (supervised_loss(out.probs, batch.labels),
                uniform_loss(out.discarded, params.classifier, out.n_graphs))

    tensors = params.tensors()
    zero_grad(tensors)
    backward(parts()[0])
    g_sup = [t.grad.copy() if t.grad is not None else np.zeros(t.shape) for t in tensors]
    zero_grad(tensors)
    backward(parts()[1])
    g_unif = [t.grad.copy() if t.grad is not None else np.zeros(t.shape) for t in tensors]
    zero_grad(tensors)
    sup, unif = parts()
    backward(total_loss(sup, unif, lam))
    for t, a, b in zip(tensors, g_sup, g_unif):
        assert np.allclose(t.grad, a + lam * b, atol=1e-13, rtol=1e-10)


def test_adam_pure_decay_step():
    p = Tensor([[2.0, -4.0]], requires_grad=True)
    adam_step([p], [np.zeros((1, 2))], AdamState(), lr=0.01, weight_decay=0.1)
    assert np.allclose(p.values, [[2.0 - 0.01 * 0.1 * 2.0, -4.0 + 0.01 * 0.1 * 4.0]], atol=1e-15)


def test_adam_constant_gradient_step_tends_to_lr():
    p = Tensor([[0.0, 0.0]], requires_grad=True)
    state = AdamState()
    g = np.array([[3.0, -0.2]])
    prev = p.values.copy()
    for _ in range(2000):
        prev = p.values.copy()
        adam_step([p], [g], state, lr=1e-3)
    step = p.values - prev
    assert np.allclose(step, [[-1e-3, 1e-3]], rtol=1e-6)


def test_adam_deterministic():
    def run():
        p = Tensor([[1.0, 2.0, 3.0]], requires_grad=True)
        opt = Adam([p], lr=0.1, weight_decay=0.01)
        traj = []
        for k in range(20):
            opt.zero_grad()
            p.grad = np.sin(p.values + k)
            opt.step()
            traj.append(p.values.copy())
        return np.array(traj)

    assert np.array_equal(run(), run())
