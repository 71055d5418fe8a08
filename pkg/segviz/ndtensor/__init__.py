"""Dense N-D tensors with reverse-mode automatic differentiation.

This package provides:
- Tensor values with optional gradients and seeded initializers
- A gradient Tape replayed in reverse by backward()
- Convolution, transposed convolution, batch norm and activations
- Finite-difference gradients for testing
"""

from segviz.ndtensor.conv import (
    conv_nd,
    conv_output_size,
    conv_transpose_nd,
    conv_transpose_output_size,
)
from segviz.ndtensor.gradcheck import finite_difference_gradient, max_relative_error
from segviz.ndtensor.norm import BN_EPS, BN_MOMENTUM, batch_norm_nd
from segviz.ndtensor.ops import (
    activation,
    add,
    concat_channels,
    div,
    mean_all,
    mul,
    relu,
    scale,
    shift,
    sigmoid,
    slice_channels,
    softmax,
    sub,
    sum_all,
)
from segviz.ndtensor.tensor import (
    Constant,
    HeNormal,
    Init,
    Tape,
    Tensor,
    Uniform,
    Zeros,
    backward,
    checked_numerics,
    create_tensor,
    default_dtype,
    float64,
    no_grad,
)

__all__ = [
    "BN_EPS",
    "BN_MOMENTUM",
    "Constant",
    "HeNormal",
    "Init",
    "Tape",
    "Tensor",
    "Uniform",
    "Zeros",
    "activation",
    "add",
    "backward",
    "batch_norm_nd",
    "checked_numerics",
    "concat_channels",
    "conv_nd",
    "conv_output_size",
    "conv_transpose_nd",
    "conv_transpose_output_size",
    "create_tensor",
    "default_dtype",
    "div",
    "finite_difference_gradient",
    "float64",
    "max_relative_error",
    "mean_all",
    "mul",
    "no_grad",
    "relu",
    "scale",
    "shift",
    "sigmoid",
    "slice_channels",
    "softmax",
    "sub",
    "sum_all",
]
