"""Federation client: local training between broadcasts."""

import asyncio
import logging
import math
from dataclasses import dataclass

from segviz.core.errors import MalformedMessageError
from segviz.fed.config import AggregationPolicy, FederationConfig
from segviz.fed.messages import ClientUpdate, GlobalParams, Hello, Shutdown
from segviz.fed.transport import Channel
from segviz.nn import ModelConfig, apply_snapshot, build_model, extract_snapshot
from segviz.optim import CosineSchedule, LocalTrainer, TrainConfig
from segviz.synthdata import NodeDataset

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RoundMetrics:
    round: int
    node_id: int
    task: str
    train_loss: float
    val_dice: float


def client_local_train(trainer: LocalTrainer, local_epochs: int, round: int = 0) -> ClientUpdate:
    """Train ``local_epochs`` epochs and package the node's representation and head.

    The trainer carries the optimizer moments and the schedule position, so
    calling this once per round continues a single annealing run.
    """
    trainer.train(local_epochs)
    snapshot = extract_snapshot(trainer.model)
    snapshot = snapshot.representation().merge(snapshot.task(trainer.task))
    return ClientUpdate(
        round=round,
        node_id=trainer.dataset.node_id,
        sample_count=trainer.dataset.sample_count,
        snapshot=snapshot,
    )


def build_trainer(
    dataset: NodeDataset,
    model_config: ModelConfig,
    train: TrainConfig,
    epochs: int,
    seed: int,
) -> LocalTrainer:
    """Single-head model and trainer for one node, annealed over ``epochs`` epochs."""
    model = build_model(model_config.with_tasks([dataset.task]), seed)
    schedule = CosineSchedule(base_lr=train.base_lr, eta_min=train.eta_min, t_max=max(epochs, 1))
    return LocalTrainer(model, dataset, train, schedule, seed)


class FederationClient:
    """One node: applies each broadcast, trains locally, uploads its update."""

    def __init__(
        self,
        dataset: NodeDataset,
        model_config: ModelConfig,
        train: TrainConfig,
        config: FederationConfig,
    ):
        self.dataset = dataset
        self.local_epochs = config.local_epochs
        self.policy: AggregationPolicy = config.policy
        self.trainer = build_trainer(
            dataset, model_config, train, config.total_local_epochs, config.seed
        )
        self.metrics: list[RoundMetrics] = []
        self._next_round = 0

    @property
    def node_id(self) -> int:
        return self.dataset.node_id

    @property
    def hello(self) -> Hello:
        return Hello(
            node_id=self.node_id, task=self.dataset.task, sample_count=self.dataset.sample_count
        )

    def _train_round(self, round: int) -> tuple[ClientUpdate, RoundMetrics]:
        update = client_local_train(self.trainer, self.local_epochs, round)
        metrics = RoundMetrics(
            round=round,
            node_id=self.node_id,
            task=self.dataset.task,
            train_loss=self.trainer.history[-1].train_loss if self.trainer.history else math.nan,
            val_dice=self.trainer.validate(),
        )
        return update, metrics

    async def run(self, channel: Channel) -> list[RoundMetrics]:
        """Serve rounds until the server sends Shutdown; the channel is closed on exit."""
        try:
            while True:
                message = await channel.recv()
                match message:
                    case GlobalParams(round=rnd, snapshot=snapshot):
                        if rnd != self._next_round:
                            raise MalformedMessageError(
                                f"node {self.node_id} expected round {self._next_round}, got {rnd}"
                            )
                        apply_snapshot(
                            self.trainer.model,
                            snapshot,
                            include_running_stats=self.policy.aggregate_running_stats,
                        )
                        update, metrics = await asyncio.to_thread(self._train_round, rnd)
                        self.metrics.append(metrics)
                        logger.info(
                            f"node {self.node_id} round {rnd}: loss {metrics.train_loss:.4f}, "
                            f"val dice {metrics.val_dice:.4f}"
                        )
                        await channel.send(update)
                        self._next_round += 1
                    case Shutdown(round=rnd):
                        logger.info(f"node {self.node_id}: shutdown after round {rnd}")
                        return self.metrics
                    case _:
                        raise MalformedMessageError(
                            f"node {self.node_id} got unexpected {type(message).__name__}"
                        )
        finally:
            await channel.close()
