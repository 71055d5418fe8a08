"""Finite-difference gradients, the oracle for backward()."""

from collections.abc import Callable, Iterable

import numpy as np

from segviz.ndtensor.tensor import Tensor, no_grad


def finite_difference_gradient(
    f: Callable[[Tensor], Tensor],
    x: Tensor,
    h: float = 1e-5,
    indices: Iterable[tuple[int, ...]] | None = None,
    richardson: bool = False,
) -> Tensor:
    """Central differences ``(f(x + h e_i) - f(x - h e_i)) / 2h`` per element.

    ``f`` must map ``x`` to a single-element tensor without other side effects
    on its output. ``x.data`` is perturbed in place and restored. When
    ``indices`` is given only those entries are estimated; the rest stay zero.

    With ``richardson`` the steps ``h`` and ``2h`` are combined into the
    fourth-order estimate ``(4 D(h) - D(2h)) / 3``, which allows a larger ``h``
    and so less cancellation error at the same truncation error.
    """
    if h <= 0:
        raise ValueError(f"step h must be positive, got {h}")

    def central(idx: tuple[int, ...], original: np.ndarray, step: float) -> float:
        x.data[idx] = original + step
        upper = f(x).item()
        x.data[idx] = original - step
        lower = f(x).item()
        return (upper - lower) / (2 * step)

    grad = np.zeros(x.shape, dtype=np.float64)
    targets = np.ndindex(*x.shape) if indices is None else indices
    with no_grad():
        for idx in targets:
            original = x.data[idx].copy()
            try:
                estimate = central(idx, original, h)
                if richardson:
                    estimate = (4.0 * estimate - central(idx, original, 2 * h)) / 3.0
            finally:
                x.data[idx] = original
            grad[idx] = estimate
    return Tensor(grad, dtype=np.float64)


def max_relative_error(a: np.ndarray, b: np.ndarray, floor: float = 1e-8) -> float:
    """max |a - b| / max(|a|, |b|, floor) over all elements."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return float(np.max(np.abs(a - b) / denom)) if a.size else 0.0
