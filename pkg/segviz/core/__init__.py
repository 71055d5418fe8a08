"""Core configuration and error types."""

from segviz.core.config import Settings, get_settings, settings
from segviz.core.errors import (
    AggregationError,
    BadMagicError,
    ChecksumError,
    ConfigError,
    DataGenerationError,
    FederationAbortedError,
    MalformedMessageError,
    NumericalError,
    ProtocolError,
    SegVizError,
    ShapeError,
    SnapshotMismatchError,
    TapeError,
    TrainingError,
    TransportError,
    TruncatedMessageError,
    UnknownTaskError,
    VersionMismatchError,
)

__all__ = [
    "Settings",
    "get_settings",
    "settings",
    "AggregationError",
    "BadMagicError",
    "ChecksumError",
    "ConfigError",
    "DataGenerationError",
    "FederationAbortedError",
    "MalformedMessageError",
    "NumericalError",
    "ProtocolError",
    "SegVizError",
    "ShapeError",
    "SnapshotMismatchError",
    "TapeError",
    "TrainingError",
    "TransportError",
    "TruncatedMessageError",
    "UnknownTaskError",
    "VersionMismatchError",
]
