"""In-process orchestration of a whole federation (server plus every client)."""

import asyncio
import itertools
import logging
from collections.abc import Sequence
from dataclasses import dataclass, field

from segviz.core.errors import ConfigError
from segviz.fed.client import FederationClient, RoundMetrics
from segviz.fed.config import FederationConfig, NodeSpec
from segviz.fed.server import FederationServer
from segviz.fed.transport import open_transport
from segviz.nn import ModelConfig, ParamSnapshot
from segviz.optim import TrainConfig
from segviz.synthdata import NodeDataset

logger = logging.getLogger(__name__)

_RUN_IDS = itertools.count()


@dataclass
class FederationResult:
    snapshot: ParamSnapshot
    metrics: list[RoundMetrics] = field(default_factory=list)


def resolve_nodes(config: FederationConfig, datasets: Sequence[NodeDataset]) -> list[NodeSpec]:
    """Node specs with sample counts taken from the datasets.

    With no nodes configured, every dataset becomes a node.
    """
    by_id = {d.node_id: d for d in datasets}
    if len(by_id) != len(datasets):
        raise ConfigError("datasets must have distinct node ids")
    if not config.nodes:
        specs = [NodeSpec(node_id=d.node_id, task=d.task) for d in datasets]
    else:
        specs = list(config.nodes)
        for spec in specs:
            dataset = by_id.get(spec.node_id)
            if dataset is None:
                raise ConfigError(f"no dataset for node {spec.node_id}")
            if dataset.task != spec.task:
                raise ConfigError(
                    f"node {spec.node_id} is configured for {spec.task!r}, "
                    f"its dataset is annotated for {dataset.task!r}"
                )
    tasks = [s.task for s in specs]
    if len(set(tasks)) != len(tasks):
        raise ConfigError(f"each task needs exactly one node, got {tasks}")
    return [
        NodeSpec(node_id=s.node_id, task=s.task, sample_count=by_id[s.node_id].sample_count)
        for s in sorted(specs, key=lambda s: s.node_id)
    ]


async def run_federation_async(
    config: FederationConfig,
    datasets: Sequence[NodeDataset],
    model_config: ModelConfig,
    train: TrainConfig,
) -> FederationResult:
    if config.rounds < 1:
        raise ConfigError(f"a federation needs at least one round, got {config.rounds}")
    nodes = resolve_nodes(config, datasets)
    by_id = {d.node_id: d for d in datasets}

    clients = [FederationClient(by_id[n.node_id], model_config, train, config) for n in nodes]
    server = FederationServer(config, model_config, nodes)
    address = config.listen if config.transport == "tcp" else f"segviz-run-{next(_RUN_IDS)}"
    listener = await open_transport(config.transport, "server", address)
    logger.info(
        f"federation: {len(clients)} nodes, {config.rounds} rounds x {config.local_epochs} "
        f"local epochs over {config.transport}"
    )

    serving = asyncio.create_task(server.serve(listener))
    try:
        channels = [
            await open_transport(config.transport, "client", listener.address, hello=c.hello)
            for c in clients
        ]
        logs = await asyncio.gather(*(c.run(ch) for c, ch in zip(clients, channels)))
    except BaseException:
        serving.cancel()
        await listener.close()
        raise
    snapshot = await serving

    metrics = sorted(itertools.chain.from_iterable(logs), key=lambda m: (m.round, m.node_id))
    return FederationResult(snapshot=snapshot, metrics=metrics)


def run_federation(
    config: FederationConfig,
    datasets: Sequence[NodeDataset],
    model_config: ModelConfig,
    train: TrainConfig,
) -> FederationResult:
    """Run every round in this process and return the final global snapshot and round log.

    Args:
        config: Rounds, local epochs, policy, transport and seed.
        datasets: One dataset per node.
        model_config: Backbone settings shared by the server and all clients.
        train: Local training recipe.

    Returns:
        The final global snapshot and per-round, per-node metrics.
    """
    return asyncio.run(run_federation_async(config, datasets, model_config, train))
