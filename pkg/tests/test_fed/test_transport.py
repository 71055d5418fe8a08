"""Tests for in-process and TCP channels and Hello admission."""

import asyncio

import numpy as np
import pytest

from segviz.core.errors import ConfigError, TransportError
from segviz.fed import (
    GlobalParams,
    Hello,
    Shutdown,
    encode_message,
    open_transport,
    parse_address,
)
from segviz.fed.messages import HEADER, MAGIC, VERSION
from segviz.nn import BlockTag, ParamSnapshot, SnapshotEntry

TIMEOUT = 5.0
HELLO_FRAME = encode_message(Hello(0, "liver", 3))


@pytest.fixture
def snapshot():
    return ParamSnapshot(
        [SnapshotEntry("encoder.w", BlockTag.representation(), np.arange(4, dtype=np.float32))]
    )


class TestParseAddress:
    """Test host:port parsing."""

    def test_valid(self):
        assert parse_address("127.0.0.1:7100") == ("127.0.0.1", 7100)
        assert parse_address("localhost:0") == ("localhost", 0)

    @pytest.mark.parametrize("address", ["7100", ":7100", "host:", "host:port", "host:70000"])
    def test_invalid(self, address):
        with pytest.raises(ConfigError):
            parse_address(address)


class TestInprocTransport:
    """Test the queue-backed transport."""

    @pytest.mark.asyncio
    async def test_exchange(self, snapshot):
        listener = await open_transport("inproc", "server", "transport-exchange")
        try:
            client = await open_transport(
                "inproc", "client", "transport-exchange", hello=Hello(0, "liver", 3)
            )
            hello, server_side = await asyncio.wait_for(listener.accept(), TIMEOUT)
            assert hello == Hello(0, "liver", 3)

            await server_side.send(GlobalParams(round=0, snapshot=snapshot))
            received = await asyncio.wait_for(client.recv(), TIMEOUT)
            assert received.snapshot == snapshot
            assert received.snapshot["encoder.w"].value is not snapshot["encoder.w"].value

            await client.send(Shutdown(round=1))
            assert await asyncio.wait_for(server_side.recv(), TIMEOUT) == Shutdown(round=1)
        finally:
            await listener.close()

    @pytest.mark.asyncio
    async def test_duplicate_node_id_rejected(self):
        listener = await open_transport("inproc", "server", "transport-duplicate")
        try:
            first = await open_transport(
                "inproc", "client", "transport-duplicate", hello=Hello(0, "liver", 3)
            )
            hello, _ = await asyncio.wait_for(listener.accept(), TIMEOUT)
            assert hello.node_id == 0

            second = await open_transport(
                "inproc", "client", "transport-duplicate", hello=Hello(0, "spleen", 2)
            )
            with pytest.raises(TransportError):
                await asyncio.wait_for(second.recv(), TIMEOUT)
            await first.close()
        finally:
            await listener.close()

    @pytest.mark.asyncio
    async def test_released_id_may_reconnect(self):
        listener = await open_transport("inproc", "server", "transport-release")
        try:
            await open_transport("inproc", "client", "transport-release", hello=Hello(4, "a", 1))
            await asyncio.wait_for(listener.accept(), TIMEOUT)
            listener.release(4)
            await open_transport("inproc", "client", "transport-release", hello=Hello(4, "a", 1))
            hello, _ = await asyncio.wait_for(listener.accept(), TIMEOUT)
            assert hello.node_id == 4
        finally:
            await listener.close()

    @pytest.mark.asyncio
    async def test_peer_close(self):
        listener = await open_transport("inproc", "server", "transport-close")
        try:
            client = await open_transport(
                "inproc", "client", "transport-close", hello=Hello(1, "spleen", 2)
            )
            _, server_side = await asyncio.wait_for(listener.accept(), TIMEOUT)
            await client.close()
            with pytest.raises(TransportError):
                await server_side.recv()
            with pytest.raises(TransportError):
                await client.send(Shutdown(round=0))
        finally:
            await listener.close()

    @pytest.mark.asyncio
    async def test_address_in_use(self):
        listener = await open_transport("inproc", "server", "transport-busy")
        try:
            with pytest.raises(TransportError):
                await open_transport("inproc", "server", "transport-busy")
        finally:
            await listener.close()

    @pytest.mark.asyncio
    async def test_nothing_listening(self):
        with pytest.raises(TransportError):
            await open_transport("inproc", "client", "transport-nowhere", hello=Hello(0, "a", 1))

    @pytest.mark.asyncio
    async def test_client_needs_hello(self):
        with pytest.raises(ConfigError):
            await open_transport("inproc", "client", "transport-nowhere")


class TestTcpTransport:
    """Test the stream transport over loopback."""

    @pytest.mark.asyncio
    async def test_exchange(self, snapshot):
        listener = await open_transport("tcp", "server", "127.0.0.1:0")
        try:
            host, port = parse_address(listener.address)
            assert host == "127.0.0.1" and port > 0

            client = await open_transport(
                "tcp", "client", listener.address, hello=Hello(2, "spleen", 16)
            )
            hello, server_side = await asyncio.wait_for(listener.accept(), TIMEOUT)
            assert hello == Hello(2, "spleen", 16)

            await server_side.send(GlobalParams(round=3, snapshot=snapshot))
            received = await asyncio.wait_for(client.recv(), TIMEOUT)
            assert received == GlobalParams(round=3, snapshot=snapshot)

            await server_side.close()
            with pytest.raises(TransportError):
                await asyncio.wait_for(client.recv(), TIMEOUT)
            await client.close()
        finally:
            await listener.close()

    @pytest.mark.asyncio
    @pytest.mark.parametrize(
        "garbage",
        [
            b"XXXX" + HEADER.pack(MAGIC, VERSION, 1, 0, 0)[4:],
            HEADER.pack(MAGIC, VERSION + 1, 1, 0, 0),
            HELLO_FRAME[:-1] + bytes([HELLO_FRAME[-1] ^ 0xFF]),
        ],
        ids=["bad-magic", "version", "checksum"],
    )
    async def test_garbage_handshake_is_dropped(self, garbage):
        """The server hangs up, keeps admitting others and still shuts down promptly."""
        listener = await open_transport("tcp", "server", "127.0.0.1:0")
        try:
            reader, writer = await asyncio.open_connection(*parse_address(listener.address))
            writer.write(garbage)
            await writer.drain()
            assert await asyncio.wait_for(reader.read(), TIMEOUT) == b""
            writer.close()

            client = await open_transport(
                "tcp", "client", listener.address, hello=Hello(1, "spleen", 2)
            )
            hello, _ = await asyncio.wait_for(listener.accept(), TIMEOUT)
            assert hello.node_id == 1
            await client.close()
        finally:
            await asyncio.wait_for(listener.close(), TIMEOUT)

    @pytest.mark.asyncio
    async def test_close_drops_silent_connection(self):
        listener = await open_transport("tcp", "server", "127.0.0.1:0")
        reader, writer = await asyncio.open_connection(*parse_address(listener.address))
        await asyncio.sleep(0.1)
        await asyncio.wait_for(listener.close(), TIMEOUT)
        assert await asyncio.wait_for(reader.read(), TIMEOUT) == b""
        writer.close()
