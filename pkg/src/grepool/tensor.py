"""Minimal reverse-mode autodiff over dense 2-D float64 arrays.

Every tensor is a 2-D ``numpy`` array plus an optional gradient and a
provenance record (the op that produced it and that op's inputs).
``backward`` collects the ancestors of a scalar into a :class:`Tape` in
topological order and replays it in reverse.

There is no global state: two tapes never share anything except read-only
leaf tensors, so independent training runs can execute side by side.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np


class ShapeError(ValueError):
    """Operand shapes do not conform."""


class DegenerateMaskError(ValueError):
    """A masked softmax was asked to normalize over zero positions."""


class Tensor:
    __slots__ = ("values", "requires_grad", "grad", "op", "parents", "_backward")

    def __init__(self, values, requires_grad: bool = False):
        arr = np.array(values, dtype=np.float64)
        if arr.ndim == 0:
            arr = arr.reshape(1, 1)
        elif arr.ndim == 1:
            arr = arr.reshape(1, -1)
        elif arr.ndim != 2:
            raise ShapeError(f"tensors are 2-D, got {arr.ndim}-D input")
        self.values = arr
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self.op: str | None = None
        self.parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], None] | None = None

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape  # type: ignore[return-value]

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def cols(self) -> int:
        return self.values.shape[1]

    def item(self) -> float:
        if self.shape != (1, 1):
            raise ShapeError(f"item() needs a 1x1 tensor, got {self.shape}")
        return float(self.values[0, 0])

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> Tensor:
        return Tensor(self.values)

    def numpy(self) -> np.ndarray:
        return self.values

    def __repr__(self) -> str:
        tag = f", op={self.op}" if self.op else ""
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad}{tag})"

    def _accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64, copy=True)
        else:
            self.grad += g

    # operator sugar for the common cases
    def __add__(self, other: Tensor) -> Tensor:
        return add(self, other)

    def __matmul__(self, other: Tensor) -> Tensor:
        return matmul(self, other)

    def __mul__(self, other: Tensor) -> Tensor:
        return hadamard(self, other)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _result(values: np.ndarray, op: str, parents: Sequence[Tensor],
            backward: Callable[[np.ndarray], None]) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.values = values
    out.grad = None
    out.op = op
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out.parents = tuple(parents)
        out._backward = backward
    else:
        out.requires_grad = False
        out.parents = ()
        out._backward = None
    return out


# --------------------------------------------------------------------------
# linear algebra
# --------------------------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.cols != b.rows:
        raise ShapeError(f"matmul: cannot multiply {a.shape} by {b.shape}")
    out_vals = a.values @ b.values

    def backward(g: np.ndarray) -> None:
        if a.requires_grad:
            a._accumulate(g @ b.values.T)
        if b.requires_grad:
            b._accumulate(a.values.T @ g)

    return _result(out_vals, "matmul", (a, b), backward)


def transpose(a: Tensor) -> Tensor:
    def backward(g: np.ndarray) -> None:
        a._accumulate(g.T)

    return _result(a.values.T.copy(), "transpose", (a,), backward)


def _check_same(name: str, a: Tensor, b: Tensor) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{name}: shapes {a.shape} and {b.shape} differ")


def add(a: Tensor, b: Tensor) -> Tensor:
    _check_same("add", a, b)

    def backward(g: np.ndarray) -> None:
        if a.requires_grad:
            a._accumulate(g)
        if b.requires_grad:
            b._accumulate(g)

    return _result(a.values + b.values, "add", (a, b), backward)


def add_row(a: Tensor, row: Tensor) -> Tensor:
    """Add a 1 x cols row vector to every row of ``a`` (bias add)."""
    if row.rows != 1 or row.cols != a.cols:
        raise ShapeError(f"add_row: row {row.shape} does not fit {a.shape}")

    def backward(g: np.ndarray) -> None:
        if a.requires_grad:
            a._accumulate(g)
        if row.requires_grad:
            row._accumulate(g.sum(axis=0, keepdims=True))

    return _result(a.values + row.values, "add_row", (a, row), backward)


def hadamard(a: Tensor, b: Tensor) -> Tensor:
    _check_same("hadamard", a, b)

    def backward(g: np.ndarray) -> None:
        if a.requires_grad:
            a._accumulate(g * b.values)
        if b.requires_grad:
            b._accumulate(g * a.values)

    return _result(a.values * b.values, "hadamard", (a, b), backward)


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)

    def backward(g: np.ndarray) -> None:
        a._accumulate(g * c)

    return _result(a.values * c, "scale", (a,), backward)


def scale_rows(a: Tensor, col: Tensor) -> Tensor:
    """Multiply row i of ``a`` by the scalar ``col[i, 0]``."""
    if col.cols != 1 or col.rows != a.rows:
        raise ShapeError(f"scale_rows: column {col.shape} does not fit {a.shape}")

    def backward(g: np.ndarray) -> None:
        if a.requires_grad:
            a._accumulate(g * col.values)
        if col.requires_grad:
            col._accumulate((g * a.values).sum(axis=1, keepdims=True))

    return _result(a.values * col.values, "scale_rows", (a, col), backward)


def relu(a: Tensor) -> Tensor:
    mask = a.values > 0

    def backward(g: np.ndarray) -> None:
        a._accumulate(g * mask)

    # np.maximum keeps NaN, so a diverged input stays visible downstream
    return _result(np.maximum(a.values, 0.0), "relu", (a,), backward)


def tanh(a: Tensor) -> Tensor:
    out_vals = np.tanh(a.values)

    def backward(g: np.ndarray) -> None:
        a._accumulate(g * (1.0 - out_vals ** 2))

    return _result(out_vals, "tanh", (a,), backward)


def log(a: Tensor, eps: float = 0.0) -> Tensor:
    """Natural log; with ``eps > 0`` inputs below ``eps`` are clamped.

    Clamped entries receive zero gradient.
    """
    if eps > 0:
        clamped = a.values < eps
        safe = np.where(clamped, eps, a.values)
    else:
        clamped = None
        safe = a.values

    def backward(g: np.ndarray) -> None:
        d = g / safe
        if clamped is not None:
            d = np.where(clamped, 0.0, d)
        a._accumulate(d)

    return _result(np.log(safe), "log", (a,), backward)


def reciprocal(a: Tensor) -> Tensor:
    out_vals = 1.0 / a.values

    def backward(g: np.ndarray) -> None:
        a._accumulate(-g * out_vals ** 2)

    return _result(out_vals, "reciprocal", (a,), backward)


def row_sum(a: Tensor) -> Tensor:
    """Sum across columns: (r, c) -> (r, 1)."""
    def backward(g: np.ndarray) -> None:
        a._accumulate(np.broadcast_to(g, a.shape))

    return _result(a.values.sum(axis=1, keepdims=True), "row_sum", (a,), backward)


def row_mean(a: Tensor) -> Tensor:
    """Mean across columns: (r, c) -> (r, 1)."""
    c = a.cols

    def backward(g: np.ndarray) -> None:
        a._accumulate(np.broadcast_to(g / c, a.shape))

    return _result(a.values.mean(axis=1, keepdims=True), "row_mean", (a,), backward)


def total(a: Tensor) -> Tensor:
    """Sum of all entries as a 1x1 tensor."""
    def backward(g: np.ndarray) -> None:
        a._accumulate(np.full(a.shape, g[0, 0]))

    return _result(np.array([[a.values.sum()]]), "total", (a,), backward)


def gather_rows(a: Tensor, idx) -> Tensor:
    idx = np.asarray(idx, dtype=np.int64).reshape(-1)
    if idx.size and (idx.min() < 0 or idx.max() >= a.rows):
        bad = idx[(idx < 0) | (idx >= a.rows)][0]
        raise IndexError(f"gather_rows: index {bad} out of range for {a.rows} rows")

    def backward(g: np.ndarray) -> None:
        full = np.zeros(a.shape)
        np.add.at(full, idx, g)
        a._accumulate(full)

    return _result(a.values[idx], "gather_rows", (a,), backward)


def slice_cols(a: Tensor, start: int, stop: int) -> Tensor:
    if not 0 <= start < stop <= a.cols:
        raise ShapeError(f"slice_cols: [{start}, {stop}) outside {a.cols} columns")

    def backward(g: np.ndarray) -> None:
        full = np.zeros(a.shape)
        full[:, start:stop] = g
        a._accumulate(full)

    return _result(a.values[:, start:stop].copy(), "slice_cols", (a,), backward)


def concat_cols(parts: Sequence[Tensor]) -> Tensor:
    rows = {p.rows for p in parts}
    if len(rows) != 1:
        raise ShapeError(f"concat_cols: row counts differ {[p.shape for p in parts]}")
    bounds = np.cumsum([0] + [p.cols for p in parts])

    def backward(g: np.ndarray) -> None:
        for p, lo, hi in zip(parts, bounds[:-1], bounds[1:]):
            if p.requires_grad:
                p._accumulate(g[:, lo:hi])

    return _result(np.hstack([p.values for p in parts]), "concat_cols", parts, backward)


def segment_sum(a: Tensor, segment_ids, n_segments: int) -> Tensor:
    """Sum rows sharing a segment id; rows are added in index order."""
    seg = np.asarray(segment_ids, dtype=np.int64).reshape(-1)
    if seg.size != a.rows:
        raise ShapeError(f"segment_sum: {seg.size} ids for {a.rows} rows")
    out = np.zeros((n_segments, a.cols))
    np.add.at(out, seg, a.values)

    def backward(g: np.ndarray) -> None:
        a._accumulate(g[seg])

    return _result(out, "segment_sum", (a,), backward)


def mean_of(parts: Sequence[Tensor]) -> Tensor:
    """Elementwise mean of equally shaped tensors."""
    out = parts[0]
    for p in parts[1:]:
        out = add(out, p)
    return scale(out, 1.0 / len(parts)) if len(parts) > 1 else out


# --------------------------------------------------------------------------
# softmax family
# --------------------------------------------------------------------------

def softmax_masked(logits: Tensor, mask) -> Tensor:
    """Softmax of a 1 x n row over the positions where ``mask`` is true.

    Masked positions come out as exactly 0.
    """
    if logits.rows != 1:
        raise ShapeError(f"softmax_masked expects a 1 x n row, got {logits.shape}")
    mask = np.asarray(mask, dtype=bool).reshape(1, -1)
    if mask.shape != logits.shape:
        raise ShapeError(f"mask {mask.shape} does not match logits {logits.shape}")
    if not mask.any():
        raise DegenerateMaskError("softmax_masked: every position is masked")
    x = logits.values
    shifted = np.where(mask, x - x[mask].max(), -np.inf)
    e = np.where(mask, np.exp(shifted), 0.0)
    out_vals = e / e.sum()

    def backward(g: np.ndarray) -> None:
        dot = (g * out_vals).sum()
        logits._accumulate(out_vals * (g - dot))

    return _result(out_vals, "softmax_masked", (logits,), backward)


def softmax_rows(a: Tensor) -> Tensor:
    """Row-wise softmax."""
    shifted = a.values - a.values.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    out_vals = e / e.sum(axis=1, keepdims=True)

    def backward(g: np.ndarray) -> None:
        dot = (g * out_vals).sum(axis=1, keepdims=True)
        a._accumulate(out_vals * (g - dot))

    return _result(out_vals, "softmax_rows", (a,), backward)


def segment_softmax(logits: Tensor, segment_ids, n_segments: int | None = None) -> Tensor:
    """Softmax of an n x 1 column independently within each segment.

    Equivalent to one ``softmax_masked`` per segment, stacked; entries never
    compete across segments.
    """
    if logits.cols != 1:
        raise ShapeError(f"segment_softmax expects an n x 1 column, got {logits.shape}")
    seg = np.asarray(segment_ids, dtype=np.int64).reshape(-1)
    if seg.size != logits.rows:
        raise ShapeError(f"segment ids ({seg.size}) do not match {logits.rows} rows")
    n_seg = int(seg.max()) + 1 if n_segments is None else n_segments
    x = logits.values[:, 0]
    seg_max = np.full(n_seg, -np.inf)
    np.maximum.at(seg_max, seg, x)
    e = np.exp(x - seg_max[seg])
    denom = np.zeros(n_seg)
    np.add.at(denom, seg, e)
    out_vals = (e / denom[seg]).reshape(-1, 1)

    def backward(g: np.ndarray) -> None:
        gy = g[:, 0] * out_vals[:, 0]
        dot = np.zeros(n_seg)
        np.add.at(dot, seg, gy)
        logits._accumulate((gy - out_vals[:, 0] * dot[seg]).reshape(-1, 1))

    return _result(out_vals, "segment_softmax", (logits,), backward)


# --------------------------------------------------------------------------
# backward pass
# --------------------------------------------------------------------------

@dataclass
class Tape:
    """Operation records of one backward pass, inputs always before outputs."""

    records: list[Tensor] = field(default_factory=list)

    @classmethod
    def from_output(cls, out: Tensor) -> Tape:
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(out, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node.parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
        return cls(order)

    def replay(self) -> None:
        for node in reversed(self.records):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)


def backward(loss: Tensor) -> Tape:
    """Populate ``.grad`` on every gradient-requiring ancestor of ``loss``.

    Gradients accumulate across calls; use :func:`zero_grad` between steps.
    Intermediate tensors get their ``.grad`` set as well, which is handy for
    inspecting where gradient does or does not flow.
    """
    if loss.shape != (1, 1):
        raise ShapeError(f"backward needs a scalar (1x1) loss, got {loss.shape}")
    if not loss.requires_grad:
        return Tape()
    tape = Tape.from_output(loss)
    # interior nodes start fresh so repeated backward calls only accumulate on leaves
    for node in tape.records:
        if node._backward is not None:
            node.grad = None
    loss.grad = np.ones((1, 1))
    tape.replay()
    return tape


def zero_grad(tensors: Sequence[Tensor]) -> None:
    for t in tensors:
        t.grad = None


# --------------------------------------------------------------------------
# finite-difference checking
# --------------------------------------------------------------------------

@dataclass
class GradCheckReport:
    max_rel_error: float
    failures: list[tuple[int, tuple[int, int], float, float]]
    checked: int

    @property
    def ok(self) -> bool:
        return not self.failures


def grad_check(f: Callable[[], Tensor], inputs: Sequence[Tensor], h: float = 1e-5,
               tol: float = 1e-4, atol: float = 1e-6) -> GradCheckReport:
    """Compare analytic gradients of ``f()`` with central differences.

    ``f`` takes no arguments and must rebuild its graph from the current
    values of ``inputs`` each call. The relative error of one coordinate is
    ``|a - n| / max(|a|, |n|, atol)``. Round-off in ``f`` puts roughly
    ``1e-16 * |f| / h`` of noise on each central difference, so for
    gradients far below ``atol`` only the absolute error is meaningful.
    """
    if h <= 0:
        raise ValueError("h must be positive")
    zero_grad(inputs)
    loss = f()
    backward(loss)
    analytic = [np.zeros(t.shape) if t.grad is None else t.grad.copy() for t in inputs]

    worst = 0.0
    failures = []
    checked = 0
    for k, t in enumerate(inputs):
        it = np.nditer(t.values, flags=["multi_index"])
        for _ in it:
            ij = it.multi_index
            orig = t.values[ij]
            t.values[ij] = orig + h
            fp = f().item()
            t.values[ij] = orig - h
            fm = f().item()
            t.values[ij] = orig
            num = (fp - fm) / (2 * h)
            a = analytic[k][ij]
            rel = abs(a - num) / max(abs(a), abs(num), atol)
            checked += 1
            worst = max(worst, rel)
            if rel > tol:
                failures.append((k, ij, float(a), float(num)))
    zero_grad(inputs)
    return GradCheckReport(worst, failures, checked)
