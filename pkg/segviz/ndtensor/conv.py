"""Strided N-D convolution and transposed convolution (spatial rank 2 or 3).

Both use the cross-correlation convention (no kernel flip). The forward
convolution works on a strided window view of the padded input; the input
gradient of a convolution and the forward transposed convolution share the
same scatter routine, which makes the two exact adjoints.
"""

from collections.abc import Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from segviz.core.errors import ShapeError
from segviz.ndtensor.tensor import Tensor, record_op

IntOrSeq = int | Sequence[int]


def _per_axis(value: IntOrSeq, rank: int, name: str) -> tuple[int, ...]:
    values = (value,) * rank if isinstance(value, int) else tuple(int(v) for v in value)
    if len(values) != rank:
        raise ShapeError(f"{name} needs {rank} values, got {values}")
    return values


def _check_rank(op: str, x: Tensor, kernel: Tensor) -> int:
    rank = x.ndim - 2
    if rank not in (2, 3):
        raise ShapeError(f"{op}: spatial rank must be 2 or 3, got input shape {x.shape}")
    if kernel.ndim != x.ndim:
        raise ShapeError(f"{op}: kernel shape {kernel.shape} does not match input rank")
    return rank


def _windows(padded: np.ndarray, kernel_size: tuple[int, ...], stride: tuple[int, ...]):
    """View of shape [N, C, out..., k...] over a padded input."""
    rank = len(kernel_size)
    view = sliding_window_view(padded, kernel_size, axis=tuple(range(2, 2 + rank)))
    steps = (slice(None), slice(None)) + tuple(slice(None, None, s) for s in stride)
    return view[steps]


def _pad(x: np.ndarray, padding: tuple[int, ...]) -> np.ndarray:
    if not any(padding):
        return x
    return np.pad(x, ((0, 0), (0, 0)) + tuple((p, p) for p in padding))


def _correlate(x: np.ndarray, kernel: np.ndarray, stride, padding):
    """Forward convolution; returns (output, window view)."""
    rank = kernel.ndim - 2
    windows = _windows(_pad(x, padding), kernel.shape[2:], stride)
    axes = ([1] + list(range(2 + rank, 2 + 2 * rank)), list(range(1, 2 + rank)))
    out = np.tensordot(windows, kernel, axes=axes)
    return np.ascontiguousarray(np.moveaxis(out, -1, 1)), windows


def _kernel_grad(g: np.ndarray, windows: np.ndarray) -> np.ndarray:
    rank = g.ndim - 2
    axes = [0] + list(range(2, 2 + rank))
    return np.tensordot(g, windows, axes=(axes, axes))


def _scatter(g: np.ndarray, kernel: np.ndarray, stride, padding, spatial: tuple[int, ...]):
    """Adjoint of ``_correlate`` with respect to its input.

    ``g`` is [N, Cout, out...], ``kernel`` is [Cout, Cin, k...]; the result is
    [N, Cin, *spatial].
    """
    rank = len(spatial)
    k = kernel.shape[2:]
    out_sp = g.shape[2:]
    extent = tuple(
        max(spatial[i] + 2 * padding[i], (out_sp[i] - 1) * stride[i] + k[i]) for i in range(rank)
    )
    full = np.zeros((g.shape[0], kernel.shape[1]) + extent, dtype=g.dtype)
    for offset in np.ndindex(*k):
        tap = kernel[(slice(None), slice(None)) + offset]
        contrib = np.moveaxis(np.tensordot(g, tap, axes=([1], [0])), -1, 1)
        target = (slice(None), slice(None)) + tuple(
            slice(offset[i], offset[i] + stride[i] * (out_sp[i] - 1) + 1, stride[i])
            for i in range(rank)
        )
        full[target] += contrib
    crop = (slice(None), slice(None)) + tuple(
        slice(padding[i], padding[i] + spatial[i]) for i in range(rank)
    )
    return np.ascontiguousarray(full[crop])


def conv_output_size(size: int, kernel: int, stride: int, padding: int) -> int:
    return (size + 2 * padding - kernel) // stride + 1


def conv_transpose_output_size(size: int, kernel: int, stride: int, padding: int) -> int:
    return (size - 1) * stride - 2 * padding + kernel


def conv_nd(
    x: Tensor,
    kernel: Tensor,
    bias: Tensor | None = None,
    stride: IntOrSeq = 1,
    padding: IntOrSeq = 0,
) -> Tensor:
    """Cross-correlate ``x`` [N, Cin, s...] with ``kernel`` [Cout, Cin, k...]."""
    rank = _check_rank("conv_nd", x, kernel)
    stride = _per_axis(stride, rank, "stride")
    padding = _per_axis(padding, rank, "padding")
    if any(s < 1 for s in stride) or any(p < 0 for p in padding):
        raise ShapeError(f"conv_nd: invalid stride {stride} or padding {padding}")
    if kernel.shape[1] != x.shape[1]:
        raise ShapeError(
            f"conv_nd: input has {x.shape[1]} channels, kernel expects {kernel.shape[1]}"
        )
    if bias is not None and bias.shape != (kernel.shape[0],):
        raise ShapeError(f"conv_nd: bias shape {bias.shape} != ({kernel.shape[0]},)")

    spatial = x.shape[2:]
    ksize = kernel.shape[2:]
    for i in range(rank):
        if ksize[i] > spatial[i] + 2 * padding[i]:
            raise ShapeError(f"conv_nd: kernel {ksize} larger than padded input {spatial}")
        if conv_output_size(spatial[i], ksize[i], stride[i], padding[i]) < 1:
            raise ShapeError(f"conv_nd: output dimension < 1 on axis {i}")

    out, windows = _correlate(x.data, kernel.data, stride, padding)
    bshape = (1, -1) + (1,) * rank
    if bias is not None:
        out += bias.data.reshape(bshape)
    kernel_data = kernel.data

    def backward(g):
        grad_x = _scatter(g, kernel_data, stride, padding, spatial)
        grad_k = _kernel_grad(g, windows)
        grad_b = g.sum(axis=(0,) + tuple(range(2, 2 + rank)))
        return grad_x, grad_k, grad_b

    inputs = (x, kernel) if bias is None else (x, kernel, bias)
    return record_op("conv_nd", inputs, out, backward)


def conv_transpose_nd(
    x: Tensor,
    kernel: Tensor,
    stride: IntOrSeq = 1,
    padding: IntOrSeq = 0,
    bias: Tensor | None = None,
) -> Tensor:
    """Transposed convolution of ``x`` [N, Cin, s...] with ``kernel`` [Cin, Cout, k...]."""
    rank = _check_rank("conv_transpose_nd", x, kernel)
    stride = _per_axis(stride, rank, "stride")
    padding = _per_axis(padding, rank, "padding")
    if any(s < 1 for s in stride) or any(p < 0 for p in padding):
        raise ShapeError(f"conv_transpose_nd: invalid stride {stride} or padding {padding}")
    if kernel.shape[0] != x.shape[1]:
        raise ShapeError(
            f"conv_transpose_nd: input has {x.shape[1]} channels, kernel expects {kernel.shape[0]}"
        )
    if bias is not None and bias.shape != (kernel.shape[1],):
        raise ShapeError(f"conv_transpose_nd: bias shape {bias.shape} != ({kernel.shape[1]},)")

    ksize = kernel.shape[2:]
    out_spatial = tuple(
        conv_transpose_output_size(x.shape[2 + i], ksize[i], stride[i], padding[i])
        for i in range(rank)
    )
    if any(s < 1 for s in out_spatial):
        raise ShapeError(f"conv_transpose_nd: output dimension < 1 ({out_spatial})")

    out = _scatter(x.data, kernel.data, stride, padding, out_spatial)
    bshape = (1, -1) + (1,) * rank
    if bias is not None:
        out += bias.data.reshape(bshape)
    x_data, kernel_data = x.data, kernel.data

    def backward(g):
        grad_x, windows = _correlate(g, kernel_data, stride, padding)
        grad_k = _kernel_grad(x_data, windows)
        grad_b = g.sum(axis=(0,) + tuple(range(2, 2 + rank)))
        return grad_x, grad_k, grad_b

    inputs = (x, kernel) if bias is None else (x, kernel, bias)
    return record_op("conv_transpose_nd", inputs, out, backward)
