"""Multi-head encoder-decoder and its representation/task parameter partition."""

import logging
from dataclasses import dataclass, field

import numpy as np

from segviz.core.errors import ShapeError, SnapshotMismatchError, UnknownTaskError
from segviz.ndtensor import Tensor
from segviz.ndtensor.norm import Mode
from segviz.nn.config import ModelConfig
from segviz.nn.layers import DecoderLevel, EncoderLevel, LayerSettings, ParameterStore, TaskHead
from segviz.nn.params import (
    BlockTag,
    Parameter,
    ParamSnapshot,
    Scope,
    SnapshotEntry,
    in_scope,
    is_running_stat,
)

logger = logging.getLogger(__name__)


@dataclass
class Partition:
    """Parameter names split into the representation block and per-task heads."""

    representation: list[str] = field(default_factory=list)
    tasks: dict[str, list[str]] = field(default_factory=dict)

    def all_names(self) -> list[str]:
        names = list(self.representation)
        for task_names in self.tasks.values():
            names.extend(task_names)
        return sorted(names)


class Model:
    """U-Net style encoder-decoder with one output head per task.

    Level 0 keeps full resolution; every deeper level starts with a stride-2
    convolution. The decoder mirrors it with transposed-conv upsampling and skip
    concatenation, and its full-resolution output feeds every task head.
    """

    def __init__(self, config: ModelConfig, seed: int):
        self.config = config
        self.seed = seed
        store = ParameterStore(seed)
        layers = LayerSettings(
            dims=config.spatial_dims,
            kernel=config.kernel_size,
            act=config.activation,
            bn_eps=config.bn_eps,
            bn_momentum=config.bn_momentum,
        )
        ch = config.channels

        self.encoder = [
            EncoderLevel(
                store,
                f"encoder.{level}",
                config.in_channels if level == 0 else ch[level - 1],
                ch[level],
                config.num_res_units,
                layers,
                downsample=level > 0,
            )
            for level in range(config.depth)
        ]
        self.decoder = {
            level: DecoderLevel(
                store, f"decoder.{level}", ch[level + 1], ch[level], config.num_res_units, layers
            )
            for level in reversed(range(config.depth - 1))
        }
        self.heads = {task: TaskHead(store, task, ch[0], layers) for task in config.tasks}
        self.parameters: dict[str, Parameter] = store.parameters

    @property
    def tasks(self) -> list[str]:
        return list(self.config.tasks)

    def forward(self, x: Tensor, task: str, mode: Mode = "train") -> Tensor:
        """Logits [N, 1, spatial...] of one task head."""
        if task not in self.heads:
            raise UnknownTaskError(f"model has no head for task {task!r}; tasks: {self.tasks}")
        expected_ndim = 2 + self.config.spatial_dims
        if x.ndim != expected_ndim or x.shape[1] != self.config.in_channels:
            raise ShapeError(
                f"expected input [N, {self.config.in_channels}, {self.config.spatial_dims} "
                f"spatial dims], got {x.shape}"
            )
        divisor = self.config.size_divisor
        if any(s % divisor for s in x.shape[2:]):
            raise ShapeError(f"spatial size {x.shape[2:]} is not divisible by {divisor}")

        skips = []
        h = x
        for level in self.encoder:
            h = level(h, mode)
            skips.append(h)
        for level, block in self.decoder.items():
            h = block(h, skips[level], mode)
        return self.heads[task](h, mode)

    def trainable(self, task: str) -> dict[str, Tensor]:
        """Weights the optimizer owns when training ``task``: representation + that head."""
        if task not in self.heads:
            raise UnknownTaskError(f"model has no head for task {task!r}")
        own = BlockTag.for_task(task)
        return {
            name: p.tensor
            for name, p in sorted(self.parameters.items())
            if not p.is_buffer and (p.tag.is_representation or p.tag == own)
        }


def build_model(config: ModelConfig, seed: int) -> Model:
    """Build a model; (config, seed) fully determine its initial parameters."""
    model = Model(config, seed)
    logger.debug(
        f"built model depth={config.depth} channels={config.channels} tasks={config.tasks} "
        f"({count_parameters(model)} weights)"
    )
    return model


def forward(model: Model, x: Tensor, task: str, mode: Mode = "train") -> Tensor:
    return model.forward(x, task, mode)


def extract_snapshot(model: Model) -> ParamSnapshot:
    """Deep copy of every parameter and buffer, in canonical name order."""
    return ParamSnapshot(
        SnapshotEntry(p.name, p.tag, p.tensor.data) for p in model.parameters.values()
    )


def apply_snapshot(
    model: Model,
    snapshot: ParamSnapshot,
    scope: Scope = "all",
    include_running_stats: bool = True,
) -> Model:
    """Overwrite the model parameters in ``scope`` with values from ``snapshot``.

    Every in-scope model parameter must be present in the snapshot with the same
    shape; extra snapshot entries (other heads) are ignored. Validation happens
    before any write, so a failing call leaves the model untouched.
    """
    targets = [
        p
        for p in model.parameters.values()
        if in_scope(p.tag, scope) and (include_running_stats or not is_running_stat(p.name))
    ]
    for p in targets:
        if p.name not in snapshot:
            raise SnapshotMismatchError(f"snapshot is missing parameter {p.name!r}")
        value = snapshot[p.name].value
        if value.shape != p.tensor.shape:
            raise ShapeError(
                f"shape mismatch for {p.name!r}: snapshot {value.shape}, model {p.tensor.shape}"
            )
    for p in targets:
        np.copyto(p.tensor.data, snapshot[p.name].value, casting="same_kind")
    return model


def partition_names(model: Model) -> Partition:
    """Disjoint cover of the model's parameter names by block."""
    partition = Partition(tasks={task: [] for task in model.tasks})
    for name in sorted(model.parameters):
        tag = model.parameters[name].tag
        if tag.is_representation:
            partition.representation.append(name)
        else:
            partition.tasks[tag.task].append(name)
    return partition


def count_parameters(
    model: Model, tag: BlockTag | None = None, include_buffers: bool = False
) -> int:
    """Number of scalar values, optionally restricted to one block tag."""
    return sum(
        p.tensor.size
        for p in model.parameters.values()
        if (tag is None or p.tag == tag) and (include_buffers or not p.is_buffer)
    )
