"""
Dense matrix helpers with explicit backward passes.

Every forward op that training differentiates through has a matching
``*_backward`` here; the model code composes them by hand.
"""

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp
from scipy.special import expit, logsumexp

Matrix = np.ndarray


class ShapeMismatchError(ValueError):
    """Raised when operand shapes are incompatible; the message names both shapes."""

    pass


@dataclass(eq=False)
class Param:
    """A trainable matrix with its gradient and Adam moment buffers."""

    value: Matrix
    grad: Matrix = field(init=False)
    adam_m: Matrix = field(init=False)
    adam_v: Matrix = field(init=False)
    step_count: int = 0

    def __post_init__(self) -> None:
        self.grad = np.zeros_like(self.value)
        self.adam_m = np.zeros_like(self.value)
        self.adam_v = np.zeros_like(self.value)

    @property
    def size(self) -> int:
        return int(self.value.size)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    def zero_grad(self) -> None:
        self.grad.fill(0.0)


def matmul(a: Matrix, b: Matrix) -> Matrix:
    if a.shape[1] != b.shape[0]:
        raise ShapeMismatchError(f"matmul: {a.shape} @ {b.shape}")
    return a @ b


def relu(x: Matrix) -> Matrix:
    return np.maximum(x, 0.0)


def relu_backward(grad_out: Matrix, x: Matrix) -> Matrix:
    """Gradient of relu at pre-activation x; the derivative at exactly 0 is 0."""
    if grad_out.shape != x.shape:
        raise ShapeMismatchError(f"relu_backward: grad {grad_out.shape} vs input {x.shape}")
    return grad_out * (x > 0)


def concat_cols(a: Matrix, b: Matrix) -> Matrix:
    if a.shape[0] != b.shape[0]:
        raise ShapeMismatchError(f"concat_cols: {a.shape} and {b.shape}")
    return np.concatenate([a, b], axis=1)


def split_cols(x: Matrix, left: int) -> tuple[Matrix, Matrix]:
    """Inverse of concat_cols: first ``left`` columns, then the rest."""
    return x[:, :left], x[:, left:]


def _averaging_matrix(group_map: np.ndarray, num_groups: int) -> sp.csr_matrix:
    group_map = np.asarray(group_map, dtype=np.int64)
    counts = np.bincount(group_map, minlength=num_groups).astype(np.float64)
    weights = 1.0 / counts[group_map]
    return sp.csr_matrix(
        (weights, (group_map, np.arange(len(group_map)))), shape=(num_groups, len(group_map))
    )


def row_mean(x: Matrix, group_map: np.ndarray, num_groups: int) -> Matrix:
    """
    Average the rows of x that share a group id.

    Args:
        x: n x d matrix
        group_map: length-n array of group ids in [0, num_groups)
        num_groups: Output row count

    Returns:
        num_groups x d matrix; a group with no rows gets a zero row
    """
    if len(group_map) != x.shape[0]:
        raise ShapeMismatchError(f"row_mean: group_map length {len(group_map)} vs rows {x.shape}")
    if len(group_map) == 0:
        return np.zeros((num_groups, x.shape[1]), dtype=x.dtype)
    return np.asarray(_averaging_matrix(group_map, num_groups) @ x, dtype=x.dtype)


def row_mean_backward(grad_out: Matrix, group_map: np.ndarray) -> Matrix:
    """Spread each group's gradient over its member rows, divided by the group size."""
    group_map = np.asarray(group_map, dtype=np.int64)
    if len(group_map) == 0:
        return np.zeros((0, grad_out.shape[1]), dtype=grad_out.dtype)
    counts = np.bincount(group_map, minlength=grad_out.shape[0]).astype(grad_out.dtype)
    return grad_out[group_map] / counts[group_map][:, None]


def l2_normalize_rows(x: Matrix) -> tuple[Matrix, Matrix]:
    """
    Scale each row to unit L2 norm; all-zero rows stay zero.

    Returns:
        (normalized, norms) where norms is the n x 1 column of row norms
    """
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    safe = np.where(norms > 0, norms, 1.0)
    return x / safe, norms


def l2_normalize_rows_backward(grad_out: Matrix, normalized: Matrix, norms: Matrix) -> Matrix:
    """
    Backward of l2_normalize_rows.

    For y = x / ||x||: dx = (g - y (g . y)) / ||x||. Zero rows pass the
    gradient through unchanged.
    """
    if grad_out.shape != normalized.shape:
        raise ShapeMismatchError(
            f"l2_normalize_rows_backward: grad {grad_out.shape} vs output {normalized.shape}"
        )
    nonzero = norms > 0
    safe = np.where(nonzero, norms, 1.0)
    along = np.sum(grad_out * normalized, axis=1, keepdims=True)
    projected = (grad_out - normalized * along) / safe
    return np.where(nonzero, projected, grad_out)


def softmax(z: Matrix) -> Matrix:
    return np.exp(z - logsumexp(z, axis=1, keepdims=True))


def softmax_xent(z: Matrix, y: Matrix) -> tuple[float, Matrix]:
    """
    Softmax cross-entropy summed over rows.

    Args:
        z: n x C logits
        y: n x C target distribution (one-hot in single-label mode)

    Returns:
        (loss, dL/dz)
    """
    if z.shape != y.shape:
        raise ShapeMismatchError(f"softmax_xent: logits {z.shape} vs labels {y.shape}")
    log_norm = logsumexp(z, axis=1, keepdims=True)
    loss = -float(np.sum(y * (z - log_norm)))
    probs = np.exp(z - log_norm)
    grad = probs * np.sum(y, axis=1, keepdims=True) - y
    return loss, grad


def sigmoid_xent(z: Matrix, y: Matrix) -> tuple[float, Matrix]:
    """Independent-label sigmoid cross-entropy summed over rows and labels."""
    if z.shape != y.shape:
        raise ShapeMismatchError(f"sigmoid_xent: logits {z.shape} vs labels {y.shape}")
    loss = float(np.sum(np.logaddexp(0.0, z) - y * z))
    return loss, expit(z) - y


def adam_step(
    param: Param,
    learning_rate: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    epsilon: float = 1e-8,
) -> None:
    """
    One bias-corrected Adam update in place.

    Updates adam_m, adam_v and value and increments step_count; the
    gradient buffer is left as is.
    """
    param.step_count += 1
    t = param.step_count
    param.adam_m *= beta1
    param.adam_m += (1.0 - beta1) * param.grad
    param.adam_v *= beta2
    param.adam_v += (1.0 - beta2) * param.grad**2
    m_hat = param.adam_m / (1.0 - beta1**t)
    v_hat = param.adam_v / (1.0 - beta2**t)
    param.value -= learning_rate * m_hat / (np.sqrt(v_hat) + epsilon)


def sgd_step(param: Param, learning_rate: float) -> None:
    param.step_count += 1
    param.value -= learning_rate * param.grad


def finite_diff_grad(f: Callable[[], float], x: Matrix, h: float = 1e-5) -> Matrix:
    """
    Central-difference gradient of a scalar function with respect to x.

    ``f`` is re-evaluated after each in-place perturbation of x; x is
    restored before returning.
    """
    grad = np.zeros_like(x, dtype=np.float64)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        original = x[idx]
        x[idx] = original + h
        plus = f()
        x[idx] = original - h
        minus = f()
        x[idx] = original
        grad[idx] = (plus - minus) / (2.0 * h)
    return grad
