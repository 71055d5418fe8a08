"""Phantom and dataset configuration."""

from pathlib import Path
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, model_validator


class OrganSpec(BaseModel):
    """One ellipse-shaped structure painted into every phantom."""

    model_config = ConfigDict(extra="forbid")

    name: str
    class_id: int = Field(ge=1, le=255)
    intensity: float = Field(ge=0, le=1)
    min_axis_frac: float = Field(gt=0, le=1)  # full axis length / image extent
    max_axis_frac: float = Field(gt=0, le=1)

    @model_validator(mode="after")
    def _check_range(self) -> "OrganSpec":
        if self.min_axis_frac > self.max_axis_frac:
            raise ValueError(f"{self.name}: min_axis_frac > max_axis_frac")
        return self


def _default_organs() -> list[OrganSpec]:
    return [
        OrganSpec(name="liver", class_id=1, intensity=0.7, min_axis_frac=0.25, max_axis_frac=0.40),
        OrganSpec(name="spleen", class_id=2, intensity=0.5, min_axis_frac=0.08, max_axis_frac=0.15),
    ]


class PhantomConfig(BaseModel):
    """Synthetic two-organ volumes standing in for abdominal CT."""

    model_config = ConfigDict(extra="forbid")

    spatial_dims: Literal[2, 3] = 2
    size: list[int] = Field(default_factory=lambda: [64, 64])
    organs: list[OrganSpec] = Field(default_factory=_default_organs)
    background: float = Field(0.2, ge=0, le=1)
    noise_sigma: float = Field(0.03, ge=0)
    margin: int = Field(2, ge=0)  # voxels kept free at every border
    min_semi_axis: float = Field(1.0, gt=0)  # voxels
    max_placement_attempts: int = Field(200, ge=1)
    seed: int = Field(0, ge=0)

    @model_validator(mode="after")
    def _check_phantom(self) -> "PhantomConfig":
        if len(self.size) != self.spatial_dims:
            raise ValueError(f"size {self.size} does not have {self.spatial_dims} entries")
        if any(s < 4 for s in self.size):
            raise ValueError(f"every axis needs at least 4 voxels, got {self.size}")
        ids = [o.class_id for o in self.organs]
        if len(set(ids)) != len(ids):
            raise ValueError(f"organ class ids must be unique, got {ids}")
        for organ in self.organs:
            if abs(organ.intensity - self.background) < 3 * self.noise_sigma:
                raise ValueError(
                    f"{organ.name}: intensity {organ.intensity} within 3 sigma of background"
                )
        return self

    @property
    def class_ids(self) -> set[int]:
        return {o.class_id for o in self.organs}


class DataConfig(BaseModel):
    """Per-node datasets and the external test set."""

    model_config = ConfigDict(extra="forbid")

    phantom: PhantomConfig = Field(default_factory=PhantomConfig)
    task_classes: dict[str, int] = Field(default_factory=lambda: {"liver": 1, "spleen": 2})
    node_sizes: dict[str, int] = Field(default_factory=lambda: {"liver": 200, "spleen": 60})
    test_size: int = Field(30, ge=1)
    split_ratio: float = Field(0.8, gt=0, lt=1)  # train share of each node
    cache_dir: Path | None = None

    @model_validator(mode="after")
    def _check_tasks(self) -> "DataConfig":
        if set(self.task_classes) != set(self.node_sizes):
            raise ValueError(
                f"task_classes {sorted(self.task_classes)} and node_sizes "
                f"{sorted(self.node_sizes)} name different tasks"
            )
        unknown = set(self.task_classes.values()) - self.phantom.class_ids
        if unknown:
            raise ValueError(f"task classes {sorted(unknown)} are not phantom organs")
        for task, size in self.node_sizes.items():
            if size < 2:
                raise ValueError(f"node {task} needs at least 2 samples for a split, got {size}")
        return self
