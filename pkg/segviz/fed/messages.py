"""Federation wire messages and their binary codec.

Frame layout (all integers little-endian)::

    magic "SGVZ" | version u8 | msg_type u8 | round u32 | payload_len u64
    payload (payload_len bytes)
    crc32 u32 over the payload

Payloads:

    Hello          node_id u16 | task (u16 len + UTF-8) | sample_count u64
    GlobalParams   snapshot
    ClientUpdate   node_id u16 | sample_count u64 | snapshot
    Shutdown       (empty)

    snapshot       tensor_count u32, then per tensor in name order:
                   name (u16 len + UTF-8) | block_tag u8 (0 representation, 1 task)
                   | ndim u8 | dims u32 x ndim | dtype u8 (0 f32, 1 f64) | raw data

The task of a task-tagged tensor is recovered from its name (``head.<task>.*``).
"""

import logging
import struct
import zlib
from dataclasses import dataclass
from enum import IntEnum
from pathlib import Path

import numpy as np

from segviz.core.errors import (
    BadMagicError,
    ChecksumError,
    MalformedMessageError,
    TruncatedMessageError,
    VersionMismatchError,
)
from segviz.nn import BlockTag, ParamSnapshot, SnapshotEntry

logger = logging.getLogger(__name__)

MAGIC = b"SGVZ"
VERSION = 1

HEADER = struct.Struct("<4sBBIQ")
HEADER_SIZE = HEADER.size
CRC = struct.Struct("<I")
CRC_SIZE = CRC.size

_U8 = struct.Struct("<B")
_U16 = struct.Struct("<H")
_U32 = struct.Struct("<I")
_U64 = struct.Struct("<Q")

_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}
_DTYPE_CODES = {np.dtype(np.float32): 0, np.dtype(np.float64): 1}

TAG_REPRESENTATION = 0
TAG_TASK = 1


class MessageType(IntEnum):
    HELLO = 1
    GLOBAL_PARAMS = 2
    CLIENT_UPDATE = 3
    SHUTDOWN = 4


@dataclass(frozen=True)
class Hello:
    """First message of every client connection."""

    node_id: int
    task: str
    sample_count: int


@dataclass(frozen=True)
class GlobalParams:
    round: int
    snapshot: ParamSnapshot


@dataclass(frozen=True)
class ClientUpdate:
    """A node's snapshot after local training in ``round``."""

    round: int
    node_id: int
    sample_count: int
    snapshot: ParamSnapshot

    @property
    def task(self) -> str:
        tasks = self.snapshot.tasks()
        if len(tasks) != 1:
            raise MalformedMessageError(
                f"update from node {self.node_id} carries heads {sorted(tasks)}, expected one"
            )
        return next(iter(tasks))


@dataclass(frozen=True)
class Shutdown:
    round: int


Message = Hello | GlobalParams | ClientUpdate | Shutdown


# ===================
# Encoding
# ===================


def _encode_str(value: str) -> bytes:
    raw = value.encode("utf-8")
    if len(raw) > 0xFFFF:
        raise MalformedMessageError(f"string of {len(raw)} bytes exceeds the 65535-byte limit")
    return _U16.pack(len(raw)) + raw


def encode_snapshot(snapshot: ParamSnapshot) -> bytes:
    parts = [_U32.pack(len(snapshot))]
    for entry in snapshot:
        value = entry.value
        code = _DTYPE_CODES.get(value.dtype.newbyteorder("="))
        if code is None:
            raise MalformedMessageError(f"{entry.name!r}: unsupported dtype {value.dtype}")
        if value.ndim > 0xFF:
            raise MalformedMessageError(f"{entry.name!r}: rank {value.ndim} too large")
        tag = TAG_REPRESENTATION if entry.tag.is_representation else TAG_TASK
        parts.append(_encode_str(entry.name))
        parts.append(struct.pack(f"<BB{value.ndim}I", tag, value.ndim, *value.shape))
        parts.append(_U8.pack(code))
        parts.append(np.ascontiguousarray(value, dtype=_DTYPES[code]).tobytes())
    return b"".join(parts)


def _payload(message: Message) -> tuple[MessageType, int, bytes]:
    match message:
        case Hello(node_id=node_id, task=task, sample_count=count):
            body = _U16.pack(node_id) + _encode_str(task) + _U64.pack(count)
            return MessageType.HELLO, 0, body
        case GlobalParams(round=rnd, snapshot=snapshot):
            return MessageType.GLOBAL_PARAMS, rnd, encode_snapshot(snapshot)
        case ClientUpdate(round=rnd, node_id=node_id, sample_count=count, snapshot=snapshot):
            body = _U16.pack(node_id) + _U64.pack(count) + encode_snapshot(snapshot)
            return MessageType.CLIENT_UPDATE, rnd, body
        case Shutdown(round=rnd):
            return MessageType.SHUTDOWN, rnd, b""
    raise MalformedMessageError(f"cannot encode {type(message).__name__}")


def encode_message(message: Message) -> bytes:
    """Serialize one message into a self-contained frame."""
    try:
        msg_type, rnd, payload = _payload(message)
        header = HEADER.pack(MAGIC, VERSION, msg_type, rnd, len(payload))
    except struct.error as e:
        raise MalformedMessageError(f"{type(message).__name__} field out of range: {e}") from e
    return header + payload + CRC.pack(zlib.crc32(payload))


# ===================
# Decoding
# ===================


class _Reader:
    """Cursor over a CRC-verified payload; any overrun means a malformed payload."""

    def __init__(self, data: bytes):
        self.data = memoryview(data)
        self.pos = 0

    def take(self, n: int) -> memoryview:
        if self.pos + n > len(self.data):
            raise MalformedMessageError(
                f"payload field at offset {self.pos} needs {n} bytes, "
                f"{len(self.data) - self.pos} left"
            )
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: struct.Struct) -> tuple:
        return fmt.unpack(self.take(fmt.size))

    def string(self) -> str:
        (length,) = self.unpack(_U16)
        try:
            return bytes(self.take(length)).decode("utf-8")
        except UnicodeDecodeError as e:
            raise MalformedMessageError(f"invalid UTF-8 string: {e}") from e

    def finish(self) -> None:
        if self.pos != len(self.data):
            raise MalformedMessageError(f"{len(self.data) - self.pos} unparsed payload bytes")


def _task_of(name: str) -> str:
    parts = name.split(".")
    if len(parts) < 3 or parts[0] != "head" or not parts[1]:
        raise MalformedMessageError(f"task-tagged tensor {name!r} is not named head.<task>.*")
    return parts[1]


def _decode_snapshot(reader: _Reader) -> ParamSnapshot:
    (count,) = reader.unpack(_U32)
    entries = []
    for _ in range(count):
        name = reader.string()
        tag_code, ndim = reader.unpack(struct.Struct("<BB"))
        dims = reader.unpack(struct.Struct(f"<{ndim}I"))
        (code,) = reader.unpack(_U8)
        if tag_code == TAG_REPRESENTATION:
            tag = BlockTag.representation()
        elif tag_code == TAG_TASK:
            tag = BlockTag.for_task(_task_of(name))
        else:
            raise MalformedMessageError(f"{name!r}: unknown block tag {tag_code}")
        if code not in _DTYPES:
            raise MalformedMessageError(f"{name!r}: unknown dtype code {code}")
        dtype = _DTYPES[code]
        raw = reader.take(int(np.prod(dims, dtype=np.int64)) * dtype.itemsize)
        value = np.frombuffer(raw, dtype=dtype).astype(dtype.newbyteorder("=")).reshape(dims)
        entries.append(SnapshotEntry(name, tag, value))
    names = [e.name for e in entries]
    if names != sorted(names):
        raise MalformedMessageError("snapshot tensors are not in name order")
    return ParamSnapshot(entries)


def payload_length(header: bytes) -> int:
    """Validate a frame header and return its declared payload length."""
    if len(header) < HEADER_SIZE:
        raise TruncatedMessageError(f"header needs {HEADER_SIZE} bytes, got {len(header)}")
    magic, version, _, _, length = HEADER.unpack(header[:HEADER_SIZE])
    if magic != MAGIC:
        raise BadMagicError(f"bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise VersionMismatchError(f"protocol version {version}, expected {VERSION}")
    return length


def decode_message(data: bytes) -> Message:
    """Parse exactly one frame; each failure mode raises its own ProtocolError kind."""
    length = payload_length(data)
    _, _, msg_type, rnd, _ = HEADER.unpack(data[:HEADER_SIZE])
    end = HEADER_SIZE + length
    if end + CRC_SIZE > len(data):
        raise TruncatedMessageError(
            f"frame declares {length} payload bytes, only {len(data) - HEADER_SIZE} follow"
        )
    if end + CRC_SIZE < len(data):
        raise MalformedMessageError(f"{len(data) - end - CRC_SIZE} trailing bytes after frame")
    payload = data[HEADER_SIZE:end]
    (expected,) = CRC.unpack(data[end : end + CRC_SIZE])
    if zlib.crc32(payload) != expected:
        raise ChecksumError(f"payload CRC {zlib.crc32(payload):#010x} != {expected:#010x}")

    reader = _Reader(payload)
    match msg_type:
        case MessageType.HELLO:
            (node_id,) = reader.unpack(_U16)
            task = reader.string()
            (count,) = reader.unpack(_U64)
            message = Hello(node_id=node_id, task=task, sample_count=count)
        case MessageType.GLOBAL_PARAMS:
            message = GlobalParams(round=rnd, snapshot=_decode_snapshot(reader))
        case MessageType.CLIENT_UPDATE:
            (node_id,) = reader.unpack(_U16)
            (count,) = reader.unpack(_U64)
            message = ClientUpdate(
                round=rnd, node_id=node_id, sample_count=count, snapshot=_decode_snapshot(reader)
            )
        case MessageType.SHUTDOWN:
            message = Shutdown(round=rnd)
        case _:
            raise MalformedMessageError(f"unknown message type {msg_type}")
    reader.finish()
    return message


# ===================
# Snapshot files
# ===================


def save_snapshot(path: Path, snapshot: ParamSnapshot, round: int = 0) -> Path:
    """Persist a snapshot as one encoded GlobalParams frame."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_message(GlobalParams(round=round, snapshot=snapshot)))
    logger.info(f"saved snapshot ({len(snapshot)} tensors, round {round}) to {path}")
    return path


def load_snapshot(path: Path) -> ParamSnapshot:
    message = decode_message(Path(path).read_bytes())
    if not isinstance(message, GlobalParams):
        raise MalformedMessageError(f"{path} holds a {type(message).__name__}, not GlobalParams")
    return message.snapshot
