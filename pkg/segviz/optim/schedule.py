"""Cosine annealing learning-rate schedule (no restarts)."""

import math

from pydantic import BaseModel, ConfigDict, Field, model_validator


class CosineSchedule(BaseModel):
    model_config = ConfigDict(frozen=True)

    base_lr: float = Field(1e-4, ge=0)
    eta_min: float = Field(0.0, ge=0)
    t_max: int = Field(1, ge=1)  # total scheduled epochs

    @model_validator(mode="after")
    def _check_bounds(self) -> "CosineSchedule":
        if self.eta_min > self.base_lr:
            raise ValueError(f"eta_min {self.eta_min} exceeds base_lr {self.base_lr}")
        return self


def cosine_lr(schedule: CosineSchedule, t: float) -> float:
    """lr(t) = eta_min + (base_lr - eta_min) * (1 + cos(pi * t / t_max)) / 2."""
    if not 0 <= t <= schedule.t_max:
        raise ValueError(f"epoch {t} outside schedule range [0, {schedule.t_max}]")
    cosine = 1.0 + math.cos(math.pi * t / schedule.t_max)
    return schedule.eta_min + 0.5 * (schedule.base_lr - schedule.eta_min) * cosine
