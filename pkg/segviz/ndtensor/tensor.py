"""Tensor value type, gradient tape and numeric modes."""

from __future__ import annotations

import logging
import math
from collections.abc import Callable, Iterator, Sequence
from contextlib import contextmanager
from contextvars import ContextVar
from dataclasses import dataclass
from typing import Union

import numpy as np

from segviz.core.config import settings
from segviz.core.errors import NumericalError, ShapeError, TapeError

logger = logging.getLogger(__name__)

BackwardFn = Callable[[np.ndarray], Sequence[np.ndarray | None]]

_ACTIVE_TAPE: ContextVar[Tape | None] = ContextVar("segviz_active_tape", default=None)
_DEFAULT_DTYPE: ContextVar[np.dtype] = ContextVar(
    "segviz_default_dtype", default=np.dtype(np.float32)
)
_CHECKED: ContextVar[bool | None] = ContextVar("segviz_checked_numerics", default=None)


# ===================
# Numeric modes
# ===================


def default_dtype() -> np.dtype:
    """Dtype used for every tensor created in the current context."""
    return _DEFAULT_DTYPE.get()


@contextmanager
def float64() -> Iterator[None]:
    """Run everything created inside the block in 64-bit floats."""
    token = _DEFAULT_DTYPE.set(np.dtype(np.float64))
    try:
        yield
    finally:
        _DEFAULT_DTYPE.reset(token)


def numerics_checked() -> bool:
    """Whether ops raise on non-finite outputs in the current context."""
    flag = _CHECKED.get()
    return settings.check_numerics if flag is None else flag


@contextmanager
def checked_numerics(enabled: bool = True) -> Iterator[None]:
    """Enable or disable the NaN/Inf check for ops run inside the block."""
    token = _CHECKED.set(enabled)
    try:
        yield
    finally:
        _CHECKED.reset(token)


@contextmanager
def no_grad() -> Iterator[None]:
    """Run ops without recording them on any active tape."""
    token = _ACTIVE_TAPE.set(None)
    try:
        yield
    finally:
        _ACTIVE_TAPE.reset(token)


# ===================
# Tensor
# ===================


class Tensor:
    """Dense N-D array with an optional gradient buffer.

    ``data`` is a numpy array in row-major order. Tensors produced by a recorded
    op keep a reference to their tape entry; tensors without one are leaves.
    """

    __slots__ = ("data", "requires_grad", "grad", "_entry")

    def __init__(self, data, requires_grad: bool = False, dtype: np.dtype | None = None):
        array = np.asarray(data)
        if dtype is not None:
            array = array.astype(dtype, copy=False)
        elif not np.issubdtype(array.dtype, np.floating):
            array = array.astype(default_dtype())
        self.data: np.ndarray = array
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self._entry: TapeEntry | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    @property
    def is_leaf(self) -> bool:
        return self._entry is None

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.size != 1:
            raise ShapeError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(()))

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> Tensor:
        """Copy of the values with no gradient history."""
        return Tensor(self.data.copy(), dtype=self.dtype)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{flag})"

    # Operator sugar; implementations live in segviz.ndtensor.ops.

    def __add__(self, other: Operand) -> Tensor:
        from segviz.ndtensor import ops

        return ops.add(self, other) if isinstance(other, Tensor) else ops.shift(self, other)

    __radd__ = __add__

    def __sub__(self, other: Operand) -> Tensor:
        from segviz.ndtensor import ops

        return ops.sub(self, other) if isinstance(other, Tensor) else ops.shift(self, -other)

    def __rsub__(self, other: float) -> Tensor:
        from segviz.ndtensor import ops

        return ops.shift(ops.scale(self, -1.0), other)

    def __mul__(self, other: Operand) -> Tensor:
        from segviz.ndtensor import ops

        return ops.mul(self, other) if isinstance(other, Tensor) else ops.scale(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other: Operand) -> Tensor:
        from segviz.ndtensor import ops

        return ops.div(self, other) if isinstance(other, Tensor) else ops.scale(self, 1.0 / other)

    def __neg__(self) -> Tensor:
        from segviz.ndtensor import ops

        return ops.scale(self, -1.0)


Operand = Union[Tensor, float, int]


# ===================
# Initializers
# ===================


@dataclass(frozen=True)
class Zeros:
    pass


@dataclass(frozen=True)
class Constant:
    value: float


@dataclass(frozen=True)
class Uniform:
    low: float
    high: float
    seed: int | Sequence[int]


@dataclass(frozen=True)
class HeNormal:
    """Normal(0, sqrt(2 / fan_in)), fan_in = product of all but the first axis."""

    seed: int | Sequence[int]


Init = Zeros | Constant | Uniform | HeNormal


def create_tensor(
    shape: Sequence[int],
    init: Init = Zeros(),
    requires_grad: bool = False,
) -> Tensor:
    """Create a tensor of ``shape`` filled by ``init``.

    Random initializers draw in 64-bit and cast, so a seed yields the same
    values (up to rounding) in both numeric modes.
    """
    dims = tuple(int(d) for d in shape)
    if not dims or any(d < 1 for d in dims):
        raise ShapeError(f"invalid shape {list(shape)}: need at least one dimension, all >= 1")
    dtype = default_dtype()

    match init:
        case Zeros():
            values = np.zeros(dims, dtype=dtype)
        case Constant(value=value):
            values = np.full(dims, value, dtype=dtype)
        case Uniform(low=low, high=high, seed=seed):
            values = np.random.default_rng(seed).uniform(low, high, size=dims).astype(dtype)
        case HeNormal(seed=seed):
            fan_in = math.prod(dims[1:]) if len(dims) > 1 else dims[0]
            std = math.sqrt(2.0 / fan_in)
            values = (np.random.default_rng(seed).standard_normal(dims) * std).astype(dtype)
        case _:
            raise ValueError(f"unknown initializer {init!r}")

    return Tensor(values, requires_grad=requires_grad)


# ===================
# Tape
# ===================


@dataclass
class TapeEntry:
    """One executed differentiable operation."""

    op: str
    inputs: tuple[Tensor, ...]
    output: Tensor
    backward: BackwardFn


class Tape:
    """Ordered record of differentiable ops, replayed in reverse by ``backward``.

    Use as a context manager; ops run inside the block on tensors that require
    gradients are appended in execution order.
    """

    def __init__(self):
        self.entries: list[TapeEntry] = []
        self.consumed = False
        self._token = None

    def __enter__(self) -> Tape:
        self._token = _ACTIVE_TAPE.set(self)
        return self

    def __exit__(self, *exc) -> None:
        _ACTIVE_TAPE.reset(self._token)
        self._token = None

    def __len__(self) -> int:
        return len(self.entries)

    def record(self, entry: TapeEntry) -> None:
        if self.consumed:
            raise TapeError("cannot record on a consumed tape")
        self.entries.append(entry)

    def holds(self, tensor: Tensor) -> bool:
        return tensor._entry is not None and any(e is tensor._entry for e in self.entries)


def record_op(
    op: str,
    inputs: Sequence[Tensor],
    out_data: np.ndarray,
    backward_fn: BackwardFn,
) -> Tensor:
    """Wrap an op result in a Tensor and record it on the active tape."""
    if numerics_checked() and not np.all(np.isfinite(out_data)):
        raise NumericalError(f"{op} produced non-finite values")

    out = Tensor(out_data, dtype=out_data.dtype)
    tape = _ACTIVE_TAPE.get()
    if tape is not None and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        entry = TapeEntry(op=op, inputs=tuple(inputs), output=out, backward=backward_fn)
        out._entry = entry
        tape.record(entry)
    return out


def backward(loss: Tensor, tape: Tape) -> None:
    """Populate ``grad`` on every leaf that ``loss`` depends on.

    Gradients accumulate into existing ``grad`` buffers (sum over fan-out and
    over calls on different tapes); the tape is consumed.
    """
    if tape.consumed:
        raise TapeError("tape already consumed by a previous backward()")
    if loss.size != 1:
        raise ShapeError(f"backward() needs a scalar loss, got shape {loss.shape}")
    if not tape.holds(loss):
        raise TapeError("loss was not recorded on this tape")

    pending: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for entry in reversed(tape.entries):
        upstream = pending.pop(id(entry.output), None)
        if upstream is None:
            continue
        input_grads = entry.backward(upstream)
        for tensor, grad in zip(entry.inputs, input_grads):
            if grad is None or not tensor.requires_grad:
                continue
            grad = grad.astype(tensor.dtype, copy=False)
            if tensor.is_leaf:
                if tensor.grad is None:
                    tensor.grad = grad.copy()
                else:
                    tensor.grad += grad
            elif id(tensor) in pending:
                pending[id(tensor)] = pending[id(tensor)] + grad
            else:
                pending[id(tensor)] = grad

    tape.consumed = True
    logger.debug(f"backward replayed {len(tape.entries)} ops")
