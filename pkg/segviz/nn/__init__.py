"""Multi-head segmentation network with a representation/task parameter split."""

from segviz.nn.config import ModelConfig
from segviz.nn.model import (
    Model,
    Partition,
    apply_snapshot,
    build_model,
    count_parameters,
    extract_snapshot,
    forward,
    partition_names,
)
from segviz.nn.params import (
    BlockTag,
    Parameter,
    ParamSnapshot,
    Scope,
    SnapshotEntry,
    TaskScope,
    is_running_stat,
)

__all__ = [
    "BlockTag",
    "Model",
    "ModelConfig",
    "Parameter",
    "ParamSnapshot",
    "Partition",
    "Scope",
    "SnapshotEntry",
    "TaskScope",
    "apply_snapshot",
    "build_model",
    "count_parameters",
    "extract_snapshot",
    "forward",
    "is_running_stat",
    "partition_names",
]
