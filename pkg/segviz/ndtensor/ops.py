"""Elementwise arithmetic, reductions, activations and channel ops."""

from typing import Literal

import numpy as np

from segviz.core.errors import ShapeError
from segviz.ndtensor.tensor import Tensor, record_op

ActivationKind = Literal["relu", "sigmoid", "softmax"]


def _same_shape(op: str, a: Tensor, b: Tensor) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


# ===================
# Elementwise arithmetic
# ===================


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum of two tensors of identical shape."""
    _same_shape("add", a, b)
    return record_op("add", (a, b), a.data + b.data, lambda g: (g, g))


def sub(a: Tensor, b: Tensor) -> Tensor:
    _same_shape("sub", a, b)
    return record_op("sub", (a, b), a.data - b.data, lambda g: (g, -g))


def mul(a: Tensor, b: Tensor) -> Tensor:
    _same_shape("mul", a, b)
    a_data, b_data = a.data, b.data
    return record_op("mul", (a, b), a_data * b_data, lambda g: (g * b_data, g * a_data))


def div(a: Tensor, b: Tensor) -> Tensor:
    _same_shape("div", a, b)
    a_data, b_data = a.data, b.data
    out = a_data / b_data

    def backward(g):
        return g / b_data, -g * out / b_data

    return record_op("div", (a, b), out, backward)


def scale(x: Tensor, factor: float) -> Tensor:
    """Multiply by a Python constant."""
    return record_op("scale", (x,), x.data * x.dtype.type(factor), lambda g: (g * factor,))


def shift(x: Tensor, offset: float) -> Tensor:
    """Add a Python constant."""
    return record_op("shift", (x,), x.data + x.dtype.type(offset), lambda g: (g,))


# ===================
# Reductions
# ===================


def sum_all(x: Tensor) -> Tensor:
    """Sum of every element, as a 0-d tensor."""
    shape = x.shape
    return record_op("sum", (x,), np.asarray(x.data.sum()), lambda g: (np.broadcast_to(g, shape),))


def mean_all(x: Tensor) -> Tensor:
    shape, n = x.shape, x.size
    return record_op(
        "mean", (x,), np.asarray(x.data.mean()), lambda g: (np.broadcast_to(g / n, shape),)
    )


# ===================
# Activations
# ===================


def _sigmoid(values: np.ndarray) -> np.ndarray:
    # Split by sign so exp never overflows.
    out = np.empty_like(values)
    pos = values >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-values[pos]))
    exp_neg = np.exp(values[~pos])
    out[~pos] = exp_neg / (1.0 + exp_neg)
    return out


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return record_op("relu", (x,), np.where(mask, x.data, 0).astype(x.dtype), lambda g: (g * mask,))


def sigmoid(x: Tensor) -> Tensor:
    out = _sigmoid(x.data)
    return record_op("sigmoid", (x,), out, lambda g: (g * out * (1 - out),))


def softmax(x: Tensor, axis: int = 1) -> Tensor:
    if not -x.ndim <= axis < x.ndim:
        raise ShapeError(f"softmax axis {axis} invalid for a {x.ndim}-d tensor")
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    exp = np.exp(shifted)
    out = exp / exp.sum(axis=axis, keepdims=True)

    def backward(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return record_op("softmax", (x,), out, backward)


def activation(x: Tensor, kind: ActivationKind, axis: int = 1) -> Tensor:
    """Apply ``relu``, ``sigmoid`` or ``softmax`` (over ``axis``)."""
    match kind:
        case "relu":
            return relu(x)
        case "sigmoid":
            return sigmoid(x)
        case "softmax":
            return softmax(x, axis=axis)
    raise ValueError(f"unknown activation {kind!r}")


# ===================
# Channel ops
# ===================


def concat_channels(a: Tensor, b: Tensor) -> Tensor:
    """Concatenate along axis 1; batch and spatial sizes must agree."""
    if a.ndim != b.ndim or a.ndim < 2 or a.shape[0] != b.shape[0] or a.shape[2:] != b.shape[2:]:
        raise ShapeError(f"concat_channels: incompatible shapes {a.shape} and {b.shape}")
    split = a.shape[1]
    out = np.concatenate([a.data, b.data], axis=1)
    return record_op("concat", (a, b), out, lambda g: (g[:, :split], g[:, split:]))


def slice_channels(x: Tensor, start: int, stop: int) -> Tensor:
    if not 0 <= start < stop <= x.shape[1]:
        raise ShapeError(f"slice_channels: [{start}, {stop}) outside {x.shape[1]} channels")
    shape = x.shape

    def backward(g):
        full = np.zeros(shape, dtype=g.dtype)
        full[:, start:stop] = g
        return (full,)

    return record_op("slice", (x,), x.data[:, start:stop].copy(), backward)
