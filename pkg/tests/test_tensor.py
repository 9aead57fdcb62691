import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from grepool import tensor as T
from grepool.tensor import DegenerateMaskError, ShapeError, Tensor, backward, grad_check


def leaf(values):
    return Tensor(values, requires_grad=True)


def rand_leaf(rng, shape):
    return leaf(rng.uniform(-2.0, 2.0, size=shape))


def test_matmul_identity():
    a = Tensor([[1, 2], [3, 4]])
    assert np.array_equal(T.matmul(a, Tensor(np.eye(2))).values, a.values)
    out = T.matmul(Tensor(np.eye(2)), Tensor([[5], [7]]))
    assert np.array_equal(out.values, [[5], [7]])


def test_matmul_shape_error():
    with pytest.raises(ShapeError):
        T.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))


def test_matmul_backward_fd():
    rng = np.random.default_rng(0)
    a, b = rand_leaf(rng, (3, 4)), rand_leaf(rng, (4, 2))
    rep = grad_check(lambda: T.total(T.matmul(a, b)), [a, b], tol=1e-6)
    assert rep.ok, rep.failures


def test_softmax_masked_examples():
    out = T.softmax_masked(Tensor([[0.0, 0.0, 0.0]]), [True, True, True])
    assert np.allclose(out.values, 1 / 3, atol=1e-15)

    out = T.softmax_masked(Tensor([[5.0, 1.0, 9.0]]), [True, False, True])
    assert out.values[0, 1] == 0.0
    assert abs(out.values[0, 0] + out.values[0, 2] - 1) < 1e-12

    z = sum(math.exp(x) for x in (1, 2, 3))
    expected = [math.exp(x) / z for x in (1, 2, 3)]
    out = T.softmax_masked(Tensor([[1.0, 2.0, 3.0]]), [True] * 3)
    assert np.allclose(out.values[0], expected, atol=1e-15)
    assert np.allclose(out.values[0], [0.09003057, 0.24472847, 0.66524096], atol=5e-9)


def test_softmax_masked_all_masked():
    with pytest.raises(DegenerateMaskError):
        T.softmax_masked(Tensor([[1.0, 2.0]]), [False, False])


@given(
    logits=arrays(np.float64, st.integers(1, 12), elements=st.floats(-30, 30)),
    data=st.data(),
    shift=st.floats(-50, 50),
)
def test_softmax_masked_properties(logits, data, shift):
    n = logits.size
    mask = np.array(data.draw(st.lists(st.booleans(), min_size=n, max_size=n)))
    mask[data.draw(st.integers(0, n - 1))] = True
    out = T.softmax_masked(Tensor(logits.reshape(1, -1)), mask).values[0]
    assert (out[mask] > 0).all()
    assert (out[~mask] == 0).all()
    assert abs(out.sum() - 1) < 1e-12
    shifted = logits + np.where(mask, shift, 0.0)
    out2 = T.softmax_masked(Tensor(shifted.reshape(1, -1)), mask).values[0]
    assert np.allclose(out, out2, atol=1e-12, rtol=0)


def test_elementwise_examples():
    m = Tensor(np.arange(8.0).reshape(4, 2))
    assert np.array_equal(T.gather_rows(m, [2, 0]).values, [[4, 5], [0, 1]])
    assert np.array_equal(T.relu(Tensor([[-1.0, 0.0, 2.0]])).values, [[0, 0, 2]])
    with pytest.raises(IndexError):
        T.gather_rows(m, [4])


def test_hadamard_backward_fd():
    rng = np.random.default_rng(1)
    a, b = rand_leaf(rng, (3, 3)), rand_leaf(rng, (3, 3))
    rep = grad_check(lambda: T.total(T.hadamard(a, b)), [a, b], tol=1e-6)
    assert rep.ok, rep.failures


def test_backward_simple():
    x = leaf(np.arange(4.0).reshape(2, 2))
    backward(T.total(x))
    assert np.array_equal(x.grad, np.ones((2, 2)))

    x = leaf([[1.0, -2.0], [3.0, 0.5]])
    backward(T.total(T.hadamard(x, x)))
    assert np.array_equal(x.grad, 2 * x.values)


def test_backward_accumulates_without_reset():
    x = leaf([[1.0, 2.0]])
    backward(T.total(x))
    backward(T.total(x))
    assert np.array_equal(x.grad, [[2.0, 2.0]])


def test_backward_needs_scalar():
    with pytest.raises(ShapeError):
        backward(leaf(np.ones((2, 2))))


def test_shared_subexpression():
    # y = x*x is used twice; gradient must sum both paths
    rng = np.random.default_rng(2)
    x = rand_leaf(rng, (2, 3))
    w = rand_leaf(rng, (3, 2))

    def f():
        y = T.hadamard(x, x)
        return T.total(T.add(T.matmul(y, w), T.matmul(T.tanh(y), w)))

    rep = grad_check(f, [x, w])
    assert rep.ok, rep.failures


def test_grad_check_sum_of_squares():
    rng = np.random.default_rng(3)
    x = rand_leaf(rng, (3, 3))
    rep = grad_check(lambda: T.total(T.hadamard(x, x)), [x])
    assert rep.max_rel_error < 1e-8


def test_grad_check_cross_entropy():
    rng = np.random.default_rng(4)
    z = rand_leaf(rng, (4, 3))
    onehot = Tensor(np.eye(3)[[0, 2, 1, 2]])

    def f():
        p = T.softmax_rows(z)
        return T.scale(T.total(T.log(T.row_sum(T.hadamard(p, onehot)))), -0.25)

    rep = grad_check(f, [z], tol=1e-5)
    assert rep.ok, rep.failures


def test_grad_check_flags_wrong_gradient():
    x = leaf([[1.0, 2.0]])

    def f():
        out = T.total(T.hadamard(x, x))
        out._backward = lambda g: x._accumulate(np.ones_like(x.values) * g)
        return out

    assert not grad_check(f, [x]).ok


UNARY = {
    "relu": T.relu,
    "tanh": T.tanh,
    "log": lambda a: T.log(T.add(T.hadamard(a, a), Tensor(np.full(a.shape, 0.5)))),
    "reciprocal": lambda a: T.reciprocal(T.add(T.hadamard(a, a), Tensor(np.full(a.shape, 0.5)))),
    "row_sum": T.row_sum,
    "row_mean": T.row_mean,
    "transpose": T.transpose,
    "scale": lambda a: T.scale(a, -1.7),
    "softmax_rows": T.softmax_rows,
    "slice_cols": lambda a: T.slice_cols(a, 1, 3),
    "gather_rows": lambda a: T.gather_rows(a, [2, 0]),
    "segment_softmax": lambda a: T.segment_softmax(T.slice_cols(a, 0, 1), [0, 1, 0], 2),
    "softmax_masked": lambda a: T.softmax_masked(T.gather_rows(a, [1]), [True, False, True, True]),
}


@pytest.mark.parametrize("name", sorted(UNARY))
@given(seed=st.integers(0, 2**31))
def test_unary_ops_match_fd(name, seed):
    rng = np.random.default_rng(seed)
    a = rand_leaf(rng, (3, 4))
    if name == "relu":
        # keep away from the kink
        a.values = np.where(np.abs(a.values) < 1e-3, 0.5, a.values)
    probe = Tensor(rng.normal(size=UNARY[name](a).shape))
    rep = grad_check(lambda: T.total(T.hadamard(UNARY[name](a), probe)), [a])
    assert rep.ok, rep.failures


BINARY = {
    "add": T.add,
    "hadamard": T.hadamard,
    "matmul": lambda a, b: T.matmul(a, T.transpose(b)),
    "add_row": lambda a, b: T.add_row(a, T.slice_cols(T.gather_rows(b, [0]), 0, 4)),
    "scale_rows": lambda a, b: T.scale_rows(a, T.slice_cols(b, 0, 1)),
    "concat_cols": lambda a, b: T.concat_cols([a, b]),
    "mean_of": lambda a, b: T.mean_of([a, b]),
}


@pytest.mark.parametrize("name", sorted(BINARY))
@given(seed=st.integers(0, 2**31))
def test_binary_ops_match_fd(name, seed):
    rng = np.random.default_rng(seed)
    a, b = rand_leaf(rng, (3, 4)), rand_leaf(rng, (3, 4))
    probe = Tensor(rng.normal(size=BINARY[name](a, b).shape))
    rep = grad_check(lambda: T.total(T.hadamard(BINARY[name](a, b), probe)), [a, b])
    assert rep.ok, rep.failures


@given(arrays(np.float64, (3, 3), elements=st.integers(-20, 20).map(float)),
       arrays(np.float64, (3, 2), elements=st.integers(-20, 20).map(float)))
def test_matmul_identity_associativity(a, b):
    eye = Tensor(np.eye(3))
    left = T.matmul(T.matmul(Tensor(a), eye), Tensor(b))
    right = T.matmul(Tensor(a), T.matmul(eye, Tensor(b)))
    assert np.array_equal(left.values, right.values)


def test_log_clamp_zero_grad():
    x = leaf([[0.0, 0.5]])
    out = T.log(x, eps=1e-12)
    assert out.values[0, 0] == pytest.approx(math.log(1e-12))
    backward(T.total(out))
    assert x.grad[0, 0] == 0.0
    assert x.grad[0, 1] == pytest.approx(2.0)


def test_segment_softmax_sums_per_segment():
    logits = Tensor(np.array([[1.0], [2.0], [0.5], [3.0], [-1.0]]))
    out = T.segment_softmax(logits, [0, 0, 1, 1, 1], 2).values[:, 0]
    assert out[:2].sum() == pytest.approx(1, abs=1e-12)
    assert out[2:].sum() == pytest.approx(1, abs=1e-12)
