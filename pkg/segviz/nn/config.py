"""Model architecture configuration."""

import re
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, model_validator

TASK_NAME_PATTERN = re.compile(r"^[A-Za-z0-9_-]+$")


class ModelConfig(BaseModel):
    """Architecture of the multi-head encoder-decoder.

    The full-scale network has 5 levels; the desk default scales it down to 3.
    """

    model_config = ConfigDict(extra="forbid")

    spatial_dims: Literal[2, 3] = 2
    depth: int = Field(3, ge=2)  # resolution levels
    channels: list[int] = Field(default_factory=lambda: [8, 16, 32])
    num_res_units: int = Field(2, ge=1)  # residual units per level
    in_channels: int = Field(1, ge=1)
    tasks: list[str] = Field(default_factory=lambda: ["liver", "spleen"])
    task_block_layers: Literal[2] = 2  # conv + classifier per head
    kernel_size: int = Field(3, ge=1)
    activation: Literal["relu", "sigmoid"] = "relu"
    bn_eps: float = Field(1e-5, gt=0)
    bn_momentum: float = Field(0.1, gt=0, le=1)

    @model_validator(mode="after")
    def _check_layout(self) -> "ModelConfig":
        if len(self.channels) != self.depth:
            raise ValueError(
                f"channels has {len(self.channels)} entries but depth is {self.depth}"
            )
        if any(c < 1 for c in self.channels):
            raise ValueError(f"channel counts must be positive, got {self.channels}")
        if self.kernel_size % 2 == 0:
            raise ValueError(f"kernel_size must be odd, got {self.kernel_size}")
        if not self.tasks:
            raise ValueError("tasks must not be empty")
        if len(set(self.tasks)) != len(self.tasks):
            raise ValueError(f"task names must be unique, got {self.tasks}")
        for task in self.tasks:
            if not TASK_NAME_PATTERN.match(task):
                raise ValueError(f"invalid task name {task!r}")
        return self

    @property
    def size_divisor(self) -> int:
        """Spatial sizes must be multiples of this value."""
        return 2 ** (self.depth - 1)

    def with_tasks(self, tasks: list[str]) -> "ModelConfig":
        """Same backbone with a different set of heads."""
        return ModelConfig.model_validate({**self.model_dump(), "tasks": list(tasks)})
