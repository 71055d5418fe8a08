"""Exception hierarchy shared by all segviz packages."""


class SegVizError(Exception):
    """Base class for every error raised by segviz."""


class ShapeError(SegVizError, ValueError):
    """Tensor shapes are invalid or incompatible."""


class TapeError(SegVizError, RuntimeError):
    """Misuse of a gradient tape (consumed twice, loss not recorded)."""


class NumericalError(SegVizError, FloatingPointError):
    """A checked operation produced NaN or Inf."""


class ConfigError(SegVizError, ValueError):
    """Configuration could not be parsed or failed validation."""


class DataGenerationError(SegVizError, RuntimeError):
    """Synthetic data could not be generated or sampled."""


class TrainingError(SegVizError, RuntimeError):
    """Training could not proceed (missing gradients, bad dataset)."""


class ProtocolError(SegVizError, ValueError):
    """A wire message is invalid."""


class BadMagicError(ProtocolError):
    """Header does not start with the SGVZ magic."""


class VersionMismatchError(ProtocolError):
    """Header carries an unsupported protocol version."""


class ChecksumError(ProtocolError):
    """Payload CRC-32 does not match the trailer."""


class TruncatedMessageError(ProtocolError):
    """Fewer bytes are available than the header or payload declares."""


class MalformedMessageError(ProtocolError):
    """Payload is structurally invalid (unknown type, tag or dtype)."""


class AggregationError(SegVizError, ValueError):
    """Client updates cannot be aggregated (missing, duplicate or stale updates)."""


class UnknownTaskError(SegVizError, ValueError):
    """A task name is not part of the model or federation."""


class SnapshotMismatchError(SegVizError, ValueError):
    """A parameter snapshot does not fit the model it is applied to."""


class TransportError(SegVizError, ConnectionError):
    """A channel could not be opened or was closed unexpectedly."""


class FederationAbortedError(TransportError):
    """A round was aborted because a client failed."""

    def __init__(self, node_id: int, reason: str):
        self.node_id = node_id
        self.reason = reason
        super().__init__(f"round aborted: node {node_id} {reason}")
