"""Per-channel batch normalization."""

from typing import Literal

import numpy as np

from segviz.core.errors import ShapeError
from segviz.ndtensor.tensor import Tensor, record_op

Mode = Literal["train", "eval"]

BN_EPS = 1e-5
BN_MOMENTUM = 0.1


def batch_norm_nd(
    x: Tensor,
    gamma: Tensor,
    beta: Tensor,
    running_mean: Tensor,
    running_var: Tensor,
    mode: Mode = "train",
    eps: float = BN_EPS,
    momentum: float = BN_MOMENTUM,
) -> Tensor:
    """Normalize ``x`` [N, C, s...] per channel.

    In train mode the batch statistics (biased variance) normalize the input and
    the running buffers are updated in place with
    ``running = (1 - momentum) * running + momentum * batch_stat``, where the
    variance fed to the running buffer is the unbiased one. Eval mode uses the
    running buffers and leaves them untouched.
    """
    if x.ndim < 3:
        raise ShapeError(f"batch_norm_nd expects [N, C, spatial...], got {x.shape}")
    channels = x.shape[1]
    for name, t in (("gamma", gamma), ("beta", beta), ("running_mean", running_mean),
                    ("running_var", running_var)):
        if t.shape != (channels,):
            raise ShapeError(f"batch_norm_nd: {name} shape {t.shape} != ({channels},)")

    axes = (0,) + tuple(range(2, x.ndim))
    bshape = (1, channels) + (1,) * (x.ndim - 2)
    count = x.size // channels

    if mode == "train":
        if count < 2:
            raise ShapeError(
                f"batch_norm_nd: degenerate batch, {count} element per channel in train mode"
            )
        mean = x.data.mean(axis=axes)
        var = x.data.var(axis=axes)
        running_mean.data[...] = (1 - momentum) * running_mean.data + momentum * mean
        running_var.data[...] = (
            (1 - momentum) * running_var.data + momentum * var * (count / (count - 1))
        )
    elif mode == "eval":
        mean = running_mean.data
        var = running_var.data
    else:
        raise ValueError(f"unknown batch-norm mode {mode!r}")

    inv_std = (1.0 / np.sqrt(var + eps)).astype(x.dtype).reshape(bshape)
    x_hat = (x.data - mean.reshape(bshape).astype(x.dtype)) * inv_std
    gamma_b = gamma.data.reshape(bshape)
    out = gamma_b * x_hat + beta.data.reshape(bshape)

    def backward(g):
        grad_gamma = (g * x_hat).sum(axis=axes)
        grad_beta = g.sum(axis=axes)
        grad_xhat = g * gamma_b
        if mode == "train":
            grad_x = (inv_std / count) * (
                count * grad_xhat
                - grad_xhat.sum(axis=axes, keepdims=True)
                - x_hat * (grad_xhat * x_hat).sum(axis=axes, keepdims=True)
            )
        else:
            grad_x = grad_xhat * inv_std
        return grad_x, grad_gamma, grad_beta

    return record_op(f"batch_norm[{mode}]", (x, gamma, beta), out, backward)
