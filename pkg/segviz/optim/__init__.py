"""Optimization: Adam, cosine annealing, dice loss/score and the local trainer."""

from segviz.optim.adam import Adam, AdamState, adam_step
from segviz.optim.config import TrainConfig
from segviz.optim.dice import DICE_EPS, binarize, dice_score, soft_dice_loss
from segviz.optim.schedule import CosineSchedule, cosine_lr
from segviz.optim.trainer import EpochResult, LocalTrainer, evaluate_samples, require_annotation

__all__ = [
    "DICE_EPS",
    "Adam",
    "AdamState",
    "CosineSchedule",
    "EpochResult",
    "LocalTrainer",
    "TrainConfig",
    "adam_step",
    "binarize",
    "cosine_lr",
    "dice_score",
    "evaluate_samples",
    "require_annotation",
    "soft_dice_loss",
]
