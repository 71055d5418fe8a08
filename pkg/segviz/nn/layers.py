"""Building blocks of the encoder-decoder: conv, norm, residual units, heads."""

import zlib
from collections.abc import Callable

from segviz.ndtensor import (
    Constant,
    HeNormal,
    Tensor,
    Zeros,
    activation,
    add,
    batch_norm_nd,
    concat_channels,
    conv_nd,
    conv_transpose_nd,
    create_tensor,
)
from segviz.ndtensor.norm import Mode
from segviz.nn.params import BlockTag, Parameter


def parameter_seed(seed: int, name: str) -> tuple[int, int]:
    """Initialization seed of one parameter, independent of build order."""
    return (seed, zlib.crc32(name.encode("utf-8")))


class ParameterStore:
    """Collects the named parameters of a model while its layers are built."""

    def __init__(self, seed: int):
        self.seed = seed
        self.parameters: dict[str, Parameter] = {}

    def add(self, name: str, tag: BlockTag, tensor: Tensor, is_buffer: bool = False) -> Tensor:
        if name in self.parameters:
            raise ValueError(f"duplicate parameter name {name!r}")
        self.parameters[name] = Parameter(name=name, tag=tag, tensor=tensor, is_buffer=is_buffer)
        return tensor

    def weight(self, name: str, tag: BlockTag, shape: tuple[int, ...]) -> Tensor:
        init = HeNormal(parameter_seed(self.seed, name))
        return self.add(name, tag, create_tensor(shape, init, requires_grad=True))

    def constant(self, name: str, tag: BlockTag, size: int, value: float,
                 trainable: bool = True) -> Tensor:
        init = Zeros() if value == 0 else Constant(value)
        tensor = create_tensor((size,), init, requires_grad=trainable)
        return self.add(name, tag, tensor, is_buffer=not trainable)


class Conv:
    def __init__(self, store: ParameterStore, prefix: str, tag: BlockTag, c_in: int, c_out: int,
                 kernel: int, dims: int, stride: int = 1, bias: bool = False):
        self.stride = stride
        self.padding = kernel // 2
        self.weight = store.weight(f"{prefix}.weight", tag, (c_out, c_in) + (kernel,) * dims)
        self.bias = store.constant(f"{prefix}.bias", tag, c_out, 0.0) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        return conv_nd(x, self.weight, self.bias, stride=self.stride, padding=self.padding)


class ConvTranspose:
    """Factor-2 upsampling: kernel 2, stride 2."""

    def __init__(self, store: ParameterStore, prefix: str, tag: BlockTag, c_in: int, c_out: int,
                 dims: int):
        self.weight = store.weight(f"{prefix}.weight", tag, (c_in, c_out) + (2,) * dims)

    def __call__(self, x: Tensor) -> Tensor:
        return conv_transpose_nd(x, self.weight, stride=2, padding=0)


class BatchNorm:
    def __init__(self, store: ParameterStore, prefix: str, tag: BlockTag, channels: int,
                 eps: float, momentum: float):
        self.eps = eps
        self.momentum = momentum
        self.gamma = store.constant(f"{prefix}.weight", tag, channels, 1.0)
        self.beta = store.constant(f"{prefix}.bias", tag, channels, 0.0)
        self.running_mean = store.constant(f"{prefix}.running_mean", tag, channels, 0.0,
                                           trainable=False)
        self.running_var = store.constant(f"{prefix}.running_var", tag, channels, 1.0,
                                          trainable=False)

    def __call__(self, x: Tensor, mode: Mode) -> Tensor:
        return batch_norm_nd(x, self.gamma, self.beta, self.running_mean, self.running_var,
                             mode=mode, eps=self.eps, momentum=self.momentum)


class LayerSettings:
    """Shared per-model layer hyperparameters."""

    def __init__(self, dims: int, kernel: int, act: str, bn_eps: float, bn_momentum: float):
        self.dims = dims
        self.kernel = kernel
        self.act = act
        self.bn_eps = bn_eps
        self.bn_momentum = bn_momentum

    def norm(self, store: ParameterStore, prefix: str, tag: BlockTag, channels: int) -> BatchNorm:
        return BatchNorm(store, prefix, tag, channels, self.bn_eps, self.bn_momentum)

    def activate(self, x: Tensor) -> Tensor:
        return activation(x, self.act)


class ConvNormAct:
    """Convolution, batch norm, activation."""

    def __init__(self, store: ParameterStore, prefix: str, tag: BlockTag, c_in: int, c_out: int,
                 layers: LayerSettings, stride: int = 1):
        self.layers = layers
        self.conv = Conv(store, f"{prefix}.conv", tag, c_in, c_out, layers.kernel, layers.dims,
                         stride=stride)
        self.norm = layers.norm(store, f"{prefix}.norm", tag, c_out)

    def __call__(self, x: Tensor, mode: Mode) -> Tensor:
        return self.layers.activate(self.norm(self.conv(x), mode))


class UpNormAct:
    """Transposed-conv upsampling, batch norm, activation."""

    def __init__(self, store: ParameterStore, prefix: str, tag: BlockTag, c_in: int, c_out: int,
                 layers: LayerSettings):
        self.layers = layers
        self.conv = ConvTranspose(store, f"{prefix}.conv", tag, c_in, c_out, layers.dims)
        self.norm = layers.norm(store, f"{prefix}.norm", tag, c_out)

    def __call__(self, x: Tensor, mode: Mode) -> Tensor:
        return self.layers.activate(self.norm(self.conv(x), mode))


class ResidualUnit:
    """Two conv + batch-norm layers around an identity or 1x1 projection skip."""

    def __init__(self, store: ParameterStore, prefix: str, tag: BlockTag, c_in: int, c_out: int,
                 layers: LayerSettings):
        self.layers = layers
        self.conv1 = Conv(store, f"{prefix}.conv1", tag, c_in, c_out, layers.kernel, layers.dims)
        self.norm1 = layers.norm(store, f"{prefix}.norm1", tag, c_out)
        self.conv2 = Conv(store, f"{prefix}.conv2", tag, c_out, c_out, layers.kernel, layers.dims)
        self.norm2 = layers.norm(store, f"{prefix}.norm2", tag, c_out)
        self.skip: Callable[[Tensor], Tensor] | None = None
        if c_in != c_out:
            self.skip = Conv(store, f"{prefix}.skip", tag, c_in, c_out, 1, layers.dims, bias=True)

    def __call__(self, x: Tensor, mode: Mode) -> Tensor:
        h = self.layers.activate(self.norm1(self.conv1(x), mode))
        h = self.norm2(self.conv2(h), mode)
        shortcut = x if self.skip is None else self.skip(x)
        return self.layers.activate(add(h, shortcut))


class EncoderLevel:
    """Optional stride-2 downsampling at block start, then residual units."""

    def __init__(self, store: ParameterStore, prefix: str, c_in: int, c_out: int,
                 num_res_units: int, layers: LayerSettings, downsample: bool):
        tag = BlockTag.representation()
        self.down = None
        if downsample:
            self.down = ConvNormAct(store, f"{prefix}.down", tag, c_in, c_out, layers, stride=2)
            c_in = c_out
        self.units = []
        for u in range(num_res_units):
            self.units.append(ResidualUnit(store, f"{prefix}.res{u}", tag, c_in, c_out, layers))
            c_in = c_out

    def __call__(self, x: Tensor, mode: Mode) -> Tensor:
        h = x if self.down is None else self.down(x, mode)
        for unit in self.units:
            h = unit(h, mode)
        return h


class DecoderLevel:
    """Upsampling at block start, skip concatenation, then residual units."""

    def __init__(self, store: ParameterStore, prefix: str, c_in: int, c_out: int,
                 num_res_units: int, layers: LayerSettings):
        tag = BlockTag.representation()
        self.up = UpNormAct(store, f"{prefix}.up", tag, c_in, c_out, layers)
        self.units = []
        width = 2 * c_out
        for u in range(num_res_units):
            self.units.append(ResidualUnit(store, f"{prefix}.res{u}", tag, width, c_out, layers))
            width = c_out

    def __call__(self, x: Tensor, skip: Tensor, mode: Mode) -> Tensor:
        h = concat_channels(skip, self.up(x, mode))
        for unit in self.units:
            h = unit(h, mode)
        return h


class TaskHead:
    """Task block: conv + norm + activation, then a 1x1 classifier to one logit."""

    def __init__(self, store: ParameterStore, task: str, channels: int, layers: LayerSettings):
        tag = BlockTag.for_task(task)
        prefix = f"head.{task}"
        self.block = ConvNormAct(store, prefix, tag, channels, channels, layers)
        self.classifier = Conv(store, f"{prefix}.classifier", tag, channels, 1, 1, layers.dims,
                               bias=True)

    def __call__(self, x: Tensor, mode: Mode) -> Tensor:
        return self.classifier(self.block(x, mode))
