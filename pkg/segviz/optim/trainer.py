"""Local training loop shared by baselines and federated clients.

A baseline and a one-node federation call the same ``LocalTrainer`` with the
same seed, so both see exactly the same patch batches and learning rates.
"""

import logging
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from segviz.core.errors import ConfigError, TrainingError
from segviz.ndtensor import Tape, Tensor, backward, no_grad
from segviz.nn import Model
from segviz.optim.adam import Adam
from segviz.optim.config import TrainConfig
from segviz.optim.dice import binarize, dice_score, soft_dice_loss
from segviz.optim.schedule import CosineSchedule, cosine_lr
from segviz.synthdata import NodeDataset, Sample, sample_patches

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class EpochResult:
    epoch: int
    lr: float
    train_loss: float
    steps: int


def require_annotation(samples: Sequence[Sample], class_id: int, what: str) -> None:
    """Raise ConfigError if any sample lacks labels for ``class_id``."""
    for sample in samples:
        if class_id not in sample.annotated_classes:
            raise ConfigError(
                f"{what}: sample {sample.sample_id} is not annotated for class {class_id}"
            )


def _model_dtype(model: Model) -> np.dtype:
    return next(iter(model.parameters.values())).tensor.dtype


def evaluate_samples(
    model: Model,
    samples: Sequence[Sample],
    task: str,
    class_id: int,
    threshold: float = 0.5,
) -> list[float]:
    """Per-sample hard dice of one head on full volumes, eval mode, one volume at a time."""
    require_annotation(samples, class_id, f"evaluation of {task!r}")
    dtype = _model_dtype(model)
    scores = []
    with no_grad():
        for sample in samples:
            x = Tensor(sample.image[np.newaxis], dtype=dtype)
            logits = model.forward(x, task, mode="eval")
            pred = binarize(logits.data[0, 0], threshold)
            scores.append(dice_score(pred, sample.mask(class_id)))
    return scores


class LocalTrainer:
    """Trains one task head plus the representation on one node's data.

    Optimizer moments and the epoch counter live on the trainer, so a federated
    client keeps them across rounds while the model weights are overwritten by
    each broadcast.
    """

    def __init__(
        self,
        model: Model,
        dataset: NodeDataset,
        train: TrainConfig,
        schedule: CosineSchedule,
        seed: int,
    ):
        """Initialize the trainer.

        Args:
            model: Model holding a head for ``dataset.task``.
            dataset: The node's training and validation samples.
            train: Batch, patch and optimizer settings.
            schedule: Learning-rate schedule over the whole run.
            seed: Seed for patch sampling and batch order.
        """
        require_annotation(
            dataset.train + dataset.validation,
            dataset.class_id,
            f"node {dataset.node_id} ({dataset.task})",
        )
        if not dataset.train:
            raise ConfigError(f"node {dataset.node_id} has no training samples")
        if len(train.patch_size) != model.config.spatial_dims:
            raise ConfigError(
                f"patch_size {train.patch_size} does not match "
                f"{model.config.spatial_dims}-D model"
            )

        self.model = model
        self.dataset = dataset
        self.train_config = train
        self.schedule = schedule
        self.seed = seed
        self.optimizer = Adam(
            model.trainable(dataset.task),
            betas=(train.adam_beta1, train.adam_beta2),
            eps=train.adam_eps,
        )
        self.epoch = 0
        self.history: list[EpochResult] = []

    @property
    def task(self) -> str:
        return self.dataset.task

    def _batches(self) -> list[tuple[np.ndarray, np.ndarray]]:
        cfg = self.train_config
        node = self.dataset.node_id
        rng = np.random.default_rng([self.seed, node, self.epoch])
        patches = []
        for index in rng.permutation(len(self.dataset.train)):
            sample = self.dataset.train[int(index)]
            patches.extend(
                sample_patches(
                    sample,
                    cfg.patch_size,
                    cfg.patches_per_volume,
                    cfg.pos_ratio,
                    self.dataset.class_id,
                    seed=[self.seed, node, self.epoch, sample.sample_id],
                )
            )

        groups = [patches[i : i + cfg.batch_size] for i in range(0, len(patches), cfg.batch_size)]
        if cfg.steps_per_epoch is not None:
            groups = [groups[i % len(groups)] for i in range(cfg.steps_per_epoch)]
        return [
            (np.stack([p.image for p in g]), np.stack([p.label for p in g])) for g in groups
        ]

    def train_epoch(self) -> EpochResult:
        """One epoch at the learning rate of the current epoch index."""
        if self.epoch >= self.schedule.t_max:
            raise TrainingError(
                f"epoch {self.epoch} is past the schedule length {self.schedule.t_max}"
            )
        lr = cosine_lr(self.schedule, self.epoch)
        dtype = _model_dtype(self.model)
        losses = []
        for images, labels in self._batches():
            x = Tensor(images, dtype=dtype)
            y = Tensor(labels, dtype=dtype)
            with Tape() as tape:
                logits = self.model.forward(x, self.task, mode="train")
                loss = soft_dice_loss(logits, y, eps=self.train_config.dice_eps)
            backward(loss, tape)
            self.optimizer.step(lr)
            losses.append(loss.item())
            logger.debug(
                f"{self.task} epoch {self.epoch} step {len(losses)}: loss {losses[-1]:.5f}"
            )

        result = EpochResult(
            epoch=self.epoch, lr=lr, train_loss=float(np.mean(losses)), steps=len(losses)
        )
        self.history.append(result)
        self.epoch += 1
        return result

    def train(self, epochs: int) -> list[EpochResult]:
        """Run ``epochs`` epochs; zero epochs leaves the model untouched."""
        if epochs < 0:
            raise ValueError(f"epochs must be >= 0, got {epochs}")
        results = [self.train_epoch() for _ in range(epochs)]
        if results:
            logger.info(
                f"node {self.dataset.node_id} ({self.task}): epochs {results[0].epoch}-"
                f"{results[-1].epoch}, loss {results[-1].train_loss:.4f}"
            )
        return results

    def validate(self, threshold: float = 0.5) -> float:
        """Mean dice on the node's validation split (nan when the split is empty)."""
        if not self.dataset.validation:
            return float("nan")
        scores = evaluate_samples(
            self.model,
            self.dataset.validation,
            self.task,
            self.dataset.class_id,
            threshold,
        )
        return float(np.mean(scores))
