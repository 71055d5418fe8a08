"""Federation protocol: masked FedAvg rounds over in-process or TCP channels.

This module provides:
- Wire messages and their CRC-checked binary codec
- Snapshot files in the same encoding
- In-process and TCP transports with Hello admission
- Aggregation (representation averaged, heads copied) and broadcast
- Server, client and an in-process federation runner
"""

from segviz.fed.aggregation import aggregation_weights, server_aggregate, server_broadcast
from segviz.fed.client import (
    FederationClient,
    RoundMetrics,
    build_trainer,
    client_local_train,
)
from segviz.fed.config import AggregationPolicy, FederationConfig, NodeSpec
from segviz.fed.messages import (
    ClientUpdate,
    GlobalParams,
    Hello,
    Message,
    MessageType,
    Shutdown,
    decode_message,
    encode_message,
    encode_snapshot,
    load_snapshot,
    save_snapshot,
)
from segviz.fed.runner import (
    FederationResult,
    resolve_nodes,
    run_federation,
    run_federation_async,
)
from segviz.fed.server import FederationServer
from segviz.fed.transport import Channel, Listener, open_transport, parse_address

__all__ = [
    "AggregationPolicy",
    "Channel",
    "ClientUpdate",
    "FederationClient",
    "FederationConfig",
    "FederationResult",
    "FederationServer",
    "GlobalParams",
    "Hello",
    "Listener",
    "Message",
    "MessageType",
    "NodeSpec",
    "RoundMetrics",
    "Shutdown",
    "aggregation_weights",
    "build_trainer",
    "client_local_train",
    "decode_message",
    "encode_message",
    "encode_snapshot",
    "load_snapshot",
    "open_transport",
    "parse_address",
    "resolve_nodes",
    "run_federation",
    "run_federation_async",
    "save_snapshot",
    "server_aggregate",
    "server_broadcast",
]
