"""Experiment configuration and the flat ``key = value`` config file format.

Example::

    # desk study
    model.channels = [8, 16, 32]
    train.batch_size = 2
    data.task_classes = {liver: 1, spleen: 2}

Values are YAML scalars or flow collections. Later keys may not repeat earlier
ones; overrides (``key=value`` strings) are applied after the file.
"""

import logging
import re
import typing
from collections.abc import Sequence
from pathlib import Path

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from segviz.core.config import settings
from segviz.core.errors import ConfigError
from segviz.fed import FederationConfig
from segviz.nn import ModelConfig
from segviz.optim import TrainConfig
from segviz.synthdata import DataConfig

logger = logging.getLogger(__name__)

KEY_PATTERN = re.compile(r"^[A-Za-z_]\w*(\.[A-Za-z_]\w*)*$")


class EvalConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    threshold: float = Field(0.5, gt=0, lt=1)  # on sigmoid probabilities


class ExperimentConfig(BaseModel):
    """Everything one study needs: data, model, training, federation and evaluation.

    ``seed`` drives model initialization, patch sampling and batch order in every
    arm; the federation runs with the same seed.
    """

    model_config = ConfigDict(extra="forbid")

    name: str = "desk"
    seed: int = Field(0, ge=0)
    output_dir: Path = settings.runs_dir
    data: DataConfig = Field(default_factory=DataConfig)
    model: ModelConfig = Field(default_factory=ModelConfig)
    train: TrainConfig = Field(default_factory=TrainConfig)
    fed: FederationConfig = Field(default_factory=FederationConfig)
    eval: EvalConfig = Field(default_factory=EvalConfig)

    @model_validator(mode="after")
    def _check_consistency(self) -> "ExperimentConfig":
        tasks = set(self.model.tasks)
        if tasks != set(self.data.task_classes):
            raise ValueError(
                f"model.tasks {sorted(tasks)} and data.task_classes "
                f"{sorted(self.data.task_classes)} must name the same tasks"
            )
        unknown = {n.task for n in self.fed.nodes} - tasks
        if unknown:
            raise ValueError(f"fed.nodes reference unknown tasks {sorted(unknown)}")

        dims = self.model.spatial_dims
        if self.data.phantom.spatial_dims != dims or len(self.train.patch_size) != dims:
            raise ValueError(
                f"model.spatial_dims={dims} disagrees with data.phantom.spatial_dims="
                f"{self.data.phantom.spatial_dims} or train.patch_size={self.train.patch_size}"
            )
        divisor = self.model.size_divisor
        for key, sizes in (
            ("data.phantom.size", self.data.phantom.size),
            ("train.patch_size", self.train.patch_size),
        ):
            if any(s % divisor for s in sizes):
                raise ValueError(f"{key} {sizes} must be multiples of {divisor} for this depth")
        if any(p > s for p, s in zip(self.train.patch_size, self.data.phantom.size)):
            raise ValueError(
                f"train.patch_size {self.train.patch_size} exceeds volume {self.data.phantom.size}"
            )

        if "seed" in self.fed.model_fields_set and self.fed.seed != self.seed:
            raise ValueError("fed.seed must match seed; set seed only")
        self.fed.seed = self.seed
        return self

    def class_of(self, task: str) -> int:
        return self.data.task_classes[task]


# ===================
# Flat key = value files
# ===================


def _field_type(model: type[BaseModel], name: str):
    field = model.model_fields.get(name)
    return None if field is None else field.annotation


def _check_key(key: str) -> None:
    """Reject keys that name no field of ExperimentConfig."""
    current: object = ExperimentConfig
    parts = key.split(".")
    for i, part in enumerate(parts):
        if isinstance(current, type) and issubclass(current, BaseModel):
            annotation = _field_type(current, part)
            if annotation is None:
                raise ConfigError(f"unknown key {key!r}")
            current = annotation
        elif typing.get_origin(current) is dict and i == len(parts) - 1:
            return
        else:
            raise ConfigError(f"unknown key {key!r}")


def _parse_line(text: str, where: str) -> tuple[str, object]:
    key, sep, raw = text.partition("=")
    key = key.strip()
    if not sep or not KEY_PATTERN.match(key):
        raise ConfigError(f"{where}: expected 'key = value', got {text.strip()!r}")
    try:
        value = yaml.safe_load(raw) if raw.strip() else None
    except yaml.YAMLError as e:
        raise ConfigError(f"{where}: cannot parse value of {key!r}: {e}") from e
    _check_key(key)
    return key, value


def _assign(tree: dict, key: str, value: object) -> None:
    *parents, leaf = key.split(".")
    node = tree
    for part in parents:
        child = node.setdefault(part, {})
        if not isinstance(child, dict):
            raise ConfigError(f"{key!r} conflicts with a value set for {part!r}")
        node = child
    if isinstance(node.get(leaf), dict) and not isinstance(value, dict):
        raise ConfigError(f"{key!r} conflicts with keys nested below it")
    node[leaf] = value


def _validation_message(error: ValidationError) -> str:
    lines = []
    for item in error.errors():
        key = ".".join(str(p) for p in item["loc"]) or "config"
        lines.append(f"{key}: {item['msg']}")
    return "; ".join(lines)


def parse_config_text(text: str, source: str = "<config>") -> dict:
    """Nested dict from flat ``key = value`` lines."""
    tree: dict = {}
    seen: dict[str, int] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        key, value = _parse_line(line, f"{source}:{lineno}")
        if key in seen:
            raise ConfigError(f"{source}:{lineno}: {key!r} already set on line {seen[key]}")
        seen[key] = lineno
        _assign(tree, key, value)
    return tree


def load_config(path: Path | None = None, overrides: Sequence[str] = ()) -> ExperimentConfig:
    """Load, override and validate an experiment config.

    Args:
        path: Config file; the shipped desk config when omitted.
        overrides: ``key=value`` strings applied after the file.

    Returns:
        The validated ExperimentConfig.
    """
    path = Path(path) if path is not None else settings.default_config
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e

    tree = parse_config_text(text, str(path))
    for index, override in enumerate(overrides, start=1):
        key, value = _parse_line(override, f"override {index}")
        _assign(tree, key, value)

    try:
        config = ExperimentConfig.model_validate(tree)
    except ValidationError as e:
        raise ConfigError(f"{path}: {_validation_message(e)}") from e
    logger.debug(f"loaded config {path} with {len(overrides)} overrides")
    return config
