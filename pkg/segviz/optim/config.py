"""Training settings shared by baselines and federated clients."""

from pydantic import BaseModel, ConfigDict, Field, field_validator


class TrainConfig(BaseModel):
    """Patch-based dice-loss training recipe."""

    model_config = ConfigDict(extra="forbid")

    batch_size: int = Field(2, ge=1)
    base_lr: float = Field(1e-4, ge=0)
    eta_min: float = Field(0.0, ge=0)
    baseline_epochs: int = Field(80, ge=0)
    patch_size: list[int] = Field(default_factory=lambda: [32, 32])
    patches_per_volume: int = Field(2, ge=1)
    pos_ratio: float = Field(0.5, ge=0, le=1)
    dice_eps: float = Field(1e-5, gt=0)
    adam_beta1: float = Field(0.9, ge=0, lt=1)
    adam_beta2: float = Field(0.999, ge=0, lt=1)
    adam_eps: float = Field(1e-8, gt=0)
    # Optimizer steps per epoch; None means one pass over the node's patches.
    steps_per_epoch: int | None = Field(None, ge=1)

    @field_validator("patch_size")
    @classmethod
    def _positive_patch(cls, v: list[int]) -> list[int]:
        if not v or any(p < 1 for p in v):
            raise ValueError(f"patch_size entries must be positive, got {v}")
        return v
