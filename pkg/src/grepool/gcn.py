"""Graph convolution with symmetric normalization and self-loops."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import ShapeError, Tensor, add_row, matmul, relu


@dataclass
class GcnParams:
    weight: Tensor  # d_in x d_out
    bias: Tensor  # 1 x d_out

    def tensors(self) -> list[Tensor]:
        return [self.weight, self.bias]


def normalize_adjacency(adj: np.ndarray) -> np.ndarray:
    """Return D^-1/2 (A + I) D^-1/2 for a symmetric 0/1 adjacency."""
    a = np.asarray(adj, dtype=np.float64)
    a_hat = a + np.eye(a.shape[0])
    inv_sqrt = 1.0 / np.sqrt(a_hat.sum(axis=1))
    return a_hat * inv_sqrt[:, None] * inv_sqrt[None, :]


def gcn_forward(h: Tensor, norm_adj, params: GcnParams) -> Tensor:
    """relu(A_norm @ H @ W + b).

    ``norm_adj`` is a constant (numpy array or non-grad tensor). For a batch
    it is block-diagonal, so graphs never exchange messages.
    """
    a = norm_adj if isinstance(norm_adj, Tensor) else Tensor(norm_adj)
    if a.rows != a.cols or a.cols != h.rows:
        raise ShapeError(f"gcn_forward: adjacency {a.shape} does not match features {h.shape}")
    if h.cols != params.weight.rows:
        raise ShapeError(f"gcn_forward: features {h.shape} do not match weight {params.weight.shape}")
    # (A H) W is cheaper than A (H W) only when d_in < d_out; pick the cheaper order
    if h.cols <= params.weight.cols:
        z = matmul(matmul(a, h), params.weight)
    else:
        z = matmul(a, matmul(h, params.weight))
    return relu(add_row(z, params.bias))
