"""Adam optimizer with bias correction."""

from collections.abc import Mapping
from dataclasses import dataclass, field

import numpy as np

from segviz.core.errors import TrainingError
from segviz.ndtensor import Tensor


@dataclass
class AdamState:
    """First/second moment buffers per parameter name and the step counter."""

    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(params: Mapping[str, Tensor], state: AdamState, lr: float) -> AdamState:
    """One in-place Adam update of every parameter; gradients are cleared afterwards.

    m <- b1 m + (1 - b1) g;  v <- b2 v + (1 - b2) g^2;
    theta <- theta - lr * m_hat / (sqrt(v_hat) + eps).
    """
    for name, tensor in params.items():
        if tensor.grad is None:
            raise TrainingError(f"parameter {name!r} has no gradient")

    state.step += 1
    correction1 = 1.0 - state.beta1**state.step
    correction2 = 1.0 - state.beta2**state.step
    for name, tensor in params.items():
        grad = tensor.grad
        m = state.m.setdefault(name, np.zeros_like(tensor.data))
        v = state.v.setdefault(name, np.zeros_like(tensor.data))
        m *= state.beta1
        m += (1.0 - state.beta1) * grad
        v *= state.beta2
        v += (1.0 - state.beta2) * grad * grad
        m_hat = m / correction1
        v_hat = v / correction2
        tensor.data -= (lr * m_hat / (np.sqrt(v_hat) + state.eps)).astype(tensor.dtype)
        tensor.grad = None
    return state


class Adam:
    """Optimizer over a fixed name -> tensor mapping."""

    def __init__(
        self,
        params: Mapping[str, Tensor],
        betas: tuple[float, float] = (0.9, 0.999),
        eps: float = 1e-8,
    ):
        self.params = dict(params)
        self.state = AdamState(beta1=betas[0], beta2=betas[1], eps=eps)

    def step(self, lr: float) -> None:
        adam_step(self.params, self.state, lr)

    def zero_grad(self) -> None:
        for tensor in self.params.values():
            tensor.zero_grad()
