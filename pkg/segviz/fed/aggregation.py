"""Masked FedAvg: representation averaged, task heads copied from their owners."""

import logging
from collections.abc import Sequence

import numpy as np

from segviz.core.errors import AggregationError, SnapshotMismatchError, UnknownTaskError
from segviz.fed.config import AggregationPolicy, NodeSpec
from segviz.fed.messages import ClientUpdate
from segviz.nn import ParamSnapshot, SnapshotEntry, is_running_stat

logger = logging.getLogger(__name__)


def _check_updates(
    updates: Sequence[ClientUpdate],
    nodes: Sequence[NodeSpec] | None,
    round: int | None,
) -> list[ClientUpdate]:
    if not updates:
        raise AggregationError("no client updates to aggregate")

    by_node: dict[int, ClientUpdate] = {}
    for update in updates:
        if update.node_id in by_node:
            raise AggregationError(f"duplicate update from node {update.node_id}")
        by_node[update.node_id] = update

    rounds = {u.round for u in updates}
    if len(rounds) > 1:
        raise AggregationError(f"updates span several rounds: {sorted(rounds)}")
    if round is not None and rounds != {round}:
        raise AggregationError(f"updates are for round {rounds.pop()}, server is in round {round}")

    if nodes is not None:
        expected = {n.node_id: n for n in nodes}
        missing = sorted(set(expected) - set(by_node))
        if missing:
            raise AggregationError(f"missing updates from nodes {missing}")
        unknown = sorted(set(by_node) - set(expected))
        if unknown:
            raise AggregationError(f"updates from unknown nodes {unknown}")
        for node_id, update in by_node.items():
            if update.task != expected[node_id].task:
                raise AggregationError(
                    f"node {node_id} sent head {update.task!r}, owns {expected[node_id].task!r}"
                )

    owners: dict[str, int] = {}
    for node_id in sorted(by_node):
        task = by_node[node_id].task
        if task in owners:
            raise AggregationError(f"task {task!r} owned by nodes {owners[task]} and {node_id}")
        owners[task] = node_id
    return [by_node[k] for k in sorted(by_node)]


def aggregation_weights(updates: Sequence[ClientUpdate], policy: AggregationPolicy) -> list[float]:
    """Per-update weights summing to one, in the order of ``updates``."""
    if policy.weighting == "uniform":
        return [1.0 / len(updates)] * len(updates)
    total = sum(u.sample_count for u in updates)
    if total == 0:
        raise AggregationError("sample-count weighting needs at least one sample")
    return [u.sample_count / total for u in updates]


def server_aggregate(
    updates: Sequence[ClientUpdate],
    policy: AggregationPolicy,
    nodes: Sequence[NodeSpec] | None = None,
    round: int | None = None,
) -> ParamSnapshot:
    """Build the global snapshot from one update per node.

    Representation tensors become the weighted mean of the updates (accumulated
    in float64, ascending node id, then cast back). Task tensors are copied
    bit for bit from the node that owns the task. With
    ``policy.aggregate_running_stats`` off, representation running statistics
    come from the node with the most samples (lowest id on ties).

    Args:
        updates: Client updates, in any order.
        policy: Weighting and running-statistics handling.
        nodes: Expected participants; when given, every node must report.
        round: Server round the updates must belong to.

    Returns:
        Snapshot with the representation block and every owned task head.
    """
    ordered = _check_updates(updates, nodes, round)
    weights = aggregation_weights(ordered, policy)

    reference = ordered[0].snapshot.representation()
    for update in ordered[1:]:
        names = update.snapshot.representation().names()
        if names != reference.names():
            raise SnapshotMismatchError(
                f"node {update.node_id} representation differs from node {ordered[0].node_id}"
            )

    stats_source = min(ordered, key=lambda u: (-u.sample_count, u.node_id))
    entries = []
    for entry in reference:
        if is_running_stat(entry.name) and not policy.aggregate_running_stats:
            local = stats_source.snapshot[entry.name].value
            entries.append(SnapshotEntry(entry.name, entry.tag, local))
            continue
        total = np.zeros(entry.value.shape, dtype=np.float64)
        for weight, update in zip(weights, ordered):
            value = update.snapshot[entry.name].value
            if value.shape != entry.value.shape:
                raise SnapshotMismatchError(
                    f"{entry.name!r}: node {update.node_id} shape {value.shape}, "
                    f"expected {entry.value.shape}"
                )
            total += weight * value.astype(np.float64)
        entries.append(SnapshotEntry(entry.name, entry.tag, total.astype(entry.value.dtype)))

    for update in ordered:
        entries.extend(update.snapshot.task(update.task))

    logger.debug(
        f"aggregated {len(ordered)} updates, weights "
        + ", ".join(f"node {u.node_id}: {w:.4f}" for u, w in zip(ordered, weights))
    )
    return ParamSnapshot(entries)


def server_broadcast(global_snapshot: ParamSnapshot, node: NodeSpec) -> ParamSnapshot:
    """Representation block plus only the head of ``node``'s task."""
    if node.task not in global_snapshot.tasks():
        raise UnknownTaskError(
            f"global snapshot has no head for task {node.task!r} of node {node.node_id}"
        )
    return global_snapshot.representation().merge(global_snapshot.task(node.task))
