"""Message channels between the federation server and its clients.

Two transports share one interface. ``inproc`` connects coroutines of the same
event loop through a pair of queues; ``tcp`` uses asyncio streams. Both carry
encoded frames, so every exchanged snapshot goes through the codec and arrives
as an independent copy.
"""

import asyncio
import itertools
import logging
from typing import Literal, Protocol

from tenacity import AsyncRetrying, retry_if_exception_type, stop_after_delay, wait_fixed

from segviz.core.config import settings
from segviz.core.errors import ConfigError, ProtocolError, TransportError
from segviz.fed.messages import (
    CRC_SIZE,
    HEADER_SIZE,
    Hello,
    Message,
    decode_message,
    encode_message,
    payload_length,
)

logger = logging.getLogger(__name__)

TransportKind = Literal["inproc", "tcp"]
Role = Literal["server", "client"]


class Channel(Protocol):
    """Ordered, reliable, message-framed bidirectional channel."""

    peer: str

    async def send(self, message: Message) -> None: ...

    async def recv(self) -> Message: ...

    async def close(self) -> None: ...


def parse_address(address: str) -> tuple[str, int]:
    """Split ``host:port``; the port may be 0 to bind an ephemeral one."""
    host, sep, port = address.rpartition(":")
    if not sep or not host or not port.isdigit() or int(port) > 0xFFFF:
        raise ConfigError(f"malformed address {address!r}, expected host:port")
    return host, int(port)


# ===================
# Channels
# ===================


class QueueChannel:
    """One end of an in-process queue pair. ``None`` on a queue marks a closed peer."""

    def __init__(self, inbox: asyncio.Queue, outbox: asyncio.Queue, peer: str):
        self.inbox = inbox
        self.outbox = outbox
        self.peer = peer
        self.closed = False

    async def send(self, message: Message) -> None:
        if self.closed:
            raise TransportError(f"channel to {self.peer} is closed")
        await self.outbox.put(encode_message(message))

    async def recv(self) -> Message:
        if self.closed:
            raise TransportError(f"channel to {self.peer} is closed")
        frame = await self.inbox.get()
        if frame is None:
            self.closed = True
            raise TransportError(f"{self.peer} closed the connection")
        return decode_message(frame)

    async def close(self) -> None:
        if not self.closed:
            self.closed = True
            await self.outbox.put(None)


class StreamChannel:
    """Frames over an asyncio TCP stream."""

    def __init__(self, reader: asyncio.StreamReader, writer: asyncio.StreamWriter):
        self.reader = reader
        self.writer = writer
        peer = writer.get_extra_info("peername")
        self.peer = f"{peer[0]}:{peer[1]}" if peer else "tcp peer"

    async def send(self, message: Message) -> None:
        try:
            self.writer.write(encode_message(message))
            await self.writer.drain()
        except (ConnectionError, RuntimeError) as e:
            raise TransportError(f"send to {self.peer} failed: {e}") from e

    async def recv(self) -> Message:
        try:
            header = await self.reader.readexactly(HEADER_SIZE)
            body = await self.reader.readexactly(payload_length(header) + CRC_SIZE)
        except asyncio.IncompleteReadError as e:
            raise TransportError(f"{self.peer} closed the connection") from e
        except ConnectionError as e:
            raise TransportError(f"receive from {self.peer} failed: {e}") from e
        return decode_message(header + body)

    async def close(self) -> None:
        if self.writer.is_closing():
            return
        self.writer.close()
        try:
            await self.writer.wait_closed()
        except ConnectionError:
            pass


# ===================
# Listeners
# ===================


class Listener:
    """Server endpoint: admits clients whose Hello names a node id not yet connected."""

    def __init__(self, address: str, hello_timeout: float):
        self.address = address
        self.hello_timeout = hello_timeout
        self._admitted: asyncio.Queue[tuple[Hello, Channel]] = asyncio.Queue()
        self._node_ids: set[int] = set()
        self._pending: set[asyncio.Task] = set()

    def _spawn(self, channel: Channel) -> None:
        task = asyncio.create_task(self._admit(channel))
        self._pending.add(task)
        task.add_done_callback(self._pending.discard)

    async def _admit(self, channel: Channel) -> None:
        try:
            hello = await asyncio.wait_for(channel.recv(), self.hello_timeout)
        except TimeoutError:
            logger.warning(f"no Hello from {channel.peer} within {self.hello_timeout}s, dropping")
            await channel.close()
            return
        except (TransportError, ProtocolError) as e:
            logger.warning(f"handshake with {channel.peer} failed: {e}")
            await channel.close()
            return
        except asyncio.CancelledError:
            await channel.close()
            raise

        if not isinstance(hello, Hello):
            logger.warning(f"{channel.peer} opened with {type(hello).__name__}, expected Hello")
            await channel.close()
            return
        if hello.node_id in self._node_ids:
            logger.warning(f"rejecting duplicate node id {hello.node_id} from {channel.peer}")
            await channel.close()
            return
        self._node_ids.add(hello.node_id)
        logger.info(f"node {hello.node_id} ({hello.task}) connected from {channel.peer}")
        await self._admitted.put((hello, channel))

    async def accept(self) -> tuple[Hello, Channel]:
        """Wait for the next admitted client."""
        return await self._admitted.get()

    def release(self, node_id: int) -> None:
        """Forget an admitted node id so it may connect again."""
        self._node_ids.discard(node_id)

    async def close(self) -> None:
        """Stop admitting; connections still in their handshake are closed."""
        pending = list(self._pending)
        for task in pending:
            task.cancel()
        await asyncio.gather(*pending, return_exceptions=True)


_INPROC_LISTENERS: dict[str, "InprocListener"] = {}
_INPROC_PEERS = itertools.count()


class InprocListener(Listener):
    async def start(self) -> "InprocListener":
        if self.address in _INPROC_LISTENERS:
            raise TransportError(f"in-process address {self.address!r} is already bound")
        _INPROC_LISTENERS[self.address] = self
        return self

    def connect(self) -> QueueChannel:
        to_server: asyncio.Queue = asyncio.Queue()
        to_client: asyncio.Queue = asyncio.Queue()
        peer = f"inproc-client-{next(_INPROC_PEERS)}"
        self._spawn(QueueChannel(inbox=to_server, outbox=to_client, peer=peer))
        return QueueChannel(inbox=to_client, outbox=to_server, peer=f"inproc:{self.address}")

    async def close(self) -> None:
        _INPROC_LISTENERS.pop(self.address, None)
        await super().close()


class TcpListener(Listener):
    server: asyncio.Server | None = None

    async def start(self) -> "TcpListener":
        host, port = parse_address(self.address)
        try:
            self.server = await asyncio.start_server(self._on_connect, host, port)
        except OSError as e:
            raise TransportError(f"cannot bind {self.address}: {e}") from e
        bound = self.server.sockets[0].getsockname()
        self.address = f"{bound[0]}:{bound[1]}"
        logger.info(f"listening on {self.address}")
        return self

    async def _on_connect(self, reader: asyncio.StreamReader, writer: asyncio.StreamWriter):
        self._spawn(StreamChannel(reader, writer))

    async def close(self) -> None:
        if self.server is not None:
            self.server.close()
        await super().close()
        if self.server is not None:
            await self.server.wait_closed()


# ===================
# Entry point
# ===================


async def _connect_tcp(address: str) -> StreamChannel:
    host, port = parse_address(address)
    try:
        async for attempt in AsyncRetrying(
            stop=stop_after_delay(settings.connect_timeout_s),
            wait=wait_fixed(settings.connect_retry_interval_s),
            retry=retry_if_exception_type(OSError),
            reraise=True,
        ):
            with attempt:
                reader, writer = await asyncio.open_connection(host, port)
    except OSError as e:
        raise TransportError(f"cannot connect to {address}: {e}") from e
    return StreamChannel(reader, writer)


async def open_transport(
    kind: TransportKind,
    role: Role,
    address: str,
    hello: Hello | None = None,
    hello_timeout: float | None = None,
) -> Listener | Channel:
    """Open a server listener or a connected client channel.

    Args:
        kind: ``inproc`` or ``tcp``.
        role: ``server`` binds ``address``; ``client`` connects to it.
        address: ``host:port`` for tcp, any name for inproc.
        hello: Client identity, sent as the first message (client role only).
        hello_timeout: Seconds a server waits for a new client's Hello.

    Returns:
        A started Listener for servers, a Channel for clients.
    """
    if role == "server":
        timeout = settings.hello_timeout_s if hello_timeout is None else hello_timeout
        match kind:
            case "inproc":
                return await InprocListener(address, timeout).start()
            case "tcp":
                return await TcpListener(address, timeout).start()
        raise ConfigError(f"unknown transport {kind!r}")

    if hello is None:
        raise ConfigError("a client transport needs a Hello message")
    match kind:
        case "inproc":
            listener = _INPROC_LISTENERS.get(address)
            if listener is None:
                raise TransportError(f"nothing listening on in-process address {address!r}")
            channel: Channel = listener.connect()
        case "tcp":
            channel = await _connect_tcp(address)
        case _:
            raise ConfigError(f"unknown transport {kind!r}")
    await channel.send(hello)
    return channel
