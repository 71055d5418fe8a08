"""Federation server: synchronous rounds behind a full-participation barrier."""

import asyncio
import logging
from collections.abc import Sequence
from dataclasses import dataclass

from segviz.core.errors import FederationAbortedError, SegVizError, TransportError
from segviz.fed.aggregation import server_aggregate, server_broadcast
from segviz.fed.config import FederationConfig, NodeSpec
from segviz.fed.messages import ClientUpdate, GlobalParams, Shutdown
from segviz.fed.transport import Channel, Listener
from segviz.nn import ModelConfig, ParamSnapshot, build_model, extract_snapshot

logger = logging.getLogger(__name__)


@dataclass
class Session:
    node: NodeSpec
    channel: Channel


class FederationServer:
    """Holds the global multi-head model and drives every round.

    Round r broadcasts the current global snapshot (round 0 sends the seeded
    initialization), waits for one update from every node, then aggregates.
    Updates are processed in ascending node id whatever their arrival order.
    """

    def __init__(
        self, config: FederationConfig, model_config: ModelConfig, nodes: Sequence[NodeSpec]
    ):
        """Initialize the server.

        Args:
            config: Rounds, policy and seed of the federation.
            model_config: Backbone settings; heads are created for the nodes' tasks.
            nodes: Expected participants (ids and tasks).
        """
        self.config = config
        self.nodes = {n.node_id: n for n in sorted(nodes, key=lambda n: n.node_id)}
        tasks = [n.task for n in self.nodes.values()]
        self.global_model = build_model(model_config.with_tasks(tasks), config.seed)
        self.global_snapshot: ParamSnapshot = extract_snapshot(self.global_model)
        self.round = 0

    async def _admit_all(self, listener: Listener) -> dict[int, Session]:
        sessions: dict[int, Session] = {}
        while len(sessions) < len(self.nodes):
            hello, channel = await listener.accept()
            expected = self.nodes.get(hello.node_id)
            if expected is None or expected.task != hello.task:
                logger.warning(
                    f"rejecting node {hello.node_id} ({hello.task}): not part of this federation"
                )
                listener.release(hello.node_id)
                await channel.close()
                continue
            node = NodeSpec(
                node_id=hello.node_id, task=hello.task, sample_count=hello.sample_count
            )
            sessions[node.node_id] = Session(node, channel)
        logger.info(f"all {len(sessions)} nodes connected")
        return dict(sorted(sessions.items()))

    async def _send(self, session: Session, message) -> None:
        try:
            await session.channel.send(message)
        except TransportError as e:
            raise FederationAbortedError(session.node.node_id, f"unreachable: {e}") from e

    async def _receive(self, session: Session, rnd: int) -> ClientUpdate:
        node_id = session.node.node_id
        try:
            message = await session.channel.recv()
        except SegVizError as e:
            raise FederationAbortedError(node_id, f"failed in round {rnd}: {e}") from e
        if not isinstance(message, ClientUpdate):
            raise FederationAbortedError(node_id, f"sent {type(message).__name__} in round {rnd}")
        if message.node_id != node_id or message.round != rnd:
            raise FederationAbortedError(
                node_id,
                f"sent update (node {message.node_id}, round {message.round}) in round {rnd}",
            )
        return message

    async def _round(self, sessions: dict[int, Session], rnd: int) -> None:
        self.round = rnd
        for session in sessions.values():
            await self._send(
                session, GlobalParams(rnd, server_broadcast(self.global_snapshot, session.node))
            )
        results = await asyncio.gather(
            *(self._receive(s, rnd) for s in sessions.values()), return_exceptions=True
        )
        for result in results:
            if isinstance(result, BaseException):
                raise result
        self.global_snapshot = server_aggregate(
            results, self.config.policy, [s.node for s in sessions.values()], round=rnd
        )
        logger.info(f"round {rnd + 1}/{self.config.rounds} aggregated")

    async def _close(self, sessions: dict[int, Session], final_round: int) -> None:
        for session in sessions.values():
            try:
                await session.channel.send(Shutdown(final_round))
            except TransportError:
                pass
            await session.channel.close()

    async def serve(self, listener: Listener) -> ParamSnapshot:
        """Run every round and return the final global snapshot."""
        sessions = await self._admit_all(listener)
        try:
            for rnd in range(self.config.rounds):
                await self._round(sessions, rnd)
            self.round = self.config.rounds
        except FederationAbortedError as e:
            logger.error(f"federation aborted in round {self.round}: {e}")
            raise
        finally:
            await self._close(sessions, self.round)
            await listener.close()
        return self.global_snapshot
