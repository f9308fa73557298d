"""
The protocol over TCP: stateless answer servers and a retrieving client.

Frame: 4-byte big-endian payload length, then the payload (at most 2^16 bytes).
Payloads start with a type byte:

    query   0x00 + K vector bytes | 0x01 + 2-byte big-endian message index
    answer  0x00 + the answer symbols
    error   0xFF + reason code
"""
import asyncio
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

from loguru import logger as log

from .allocation import Allocation
from .core import SystemParams
from .errors import AnswerLengthMismatch, ConnectionFailed, FrameError, InvalidParams, Timeout
from .scheme import Answer, Escape, MessageStore, Query, RandomKey, Vec, answer, answer_length, decode, encode_queries
from .sim import key_stream, sample_key

HEADER = struct.Struct(">I")
HEADER_SIZE = HEADER.size
MAX_PAYLOAD = 2**16

TYPE_VECTOR = 0x00
TYPE_ESCAPE = 0x01
TYPE_ANSWER = 0x00
TYPE_ERROR = 0xFF

# error reasons
TRUNCATED = 0x01
UNKNOWN_TYPE = 0x02
INVALID_QUERY = 0x03
OVERSIZE = 0x04

DEFAULT_TIMEOUT = 5.0


def parse_address(address: str) -> Tuple[str, int]:
    host, sep, port = address.strip().rpartition(":")
    if not sep or not port.isdigit():
        raise InvalidParams(f"address '{address}' is not host:port")
    return host or "127.0.0.1", int(port)


# --------------------------------------------------------------
# wire codec
# --------------------------------------------------------------


def encode_frame(payload: bytes) -> bytes:
    if len(payload) > MAX_PAYLOAD:
        raise FrameError(OVERSIZE, f"payload of {len(payload)} bytes exceeds {MAX_PAYLOAD}")
    return HEADER.pack(len(payload)) + payload


def encode_query(q: Query) -> bytes:
    if isinstance(q, Escape):
        return bytes([TYPE_ESCAPE]) + struct.pack(">H", q.k)
    return bytes([TYPE_VECTOR]) + bytes(q.q)


def decode_query(payload: bytes, params: SystemParams) -> Query:
    if not payload:
        raise FrameError(TRUNCATED, "empty payload")
    kind, body = payload[0], payload[1:]
    if kind == TYPE_VECTOR:
        if len(body) != params.K or any(v > params.L for v in body):
            raise FrameError(INVALID_QUERY, f"vector query {body.hex()} is not in [0:{params.L}]^{params.K}")
        return Vec(tuple(body))
    if kind == TYPE_ESCAPE:
        if len(body) != 2:
            raise FrameError(INVALID_QUERY, f"escape query needs 2 bytes, got {len(body)}")
        (k,) = struct.unpack(">H", body)
        if not 1 <= k <= params.K:
            raise FrameError(INVALID_QUERY, f"escape for message {k} not in [1:{params.K}]")
        return Escape(k)
    raise FrameError(UNKNOWN_TYPE, f"unknown payload type 0x{kind:02X}")


def encode_answer(a: Answer) -> bytes:
    return bytes([TYPE_ANSWER]) + bytes(a)


def encode_error(reason: int) -> bytes:
    return bytes([TYPE_ERROR, reason])


def decode_answer(payload: bytes) -> Answer:
    if not payload:
        raise FrameError(TRUNCATED, "empty payload")
    if payload[0] == TYPE_ERROR:
        reason = payload[1] if len(payload) > 1 else 0
        raise FrameError(reason, f"server replied with error 0x{reason:02X}")
    if payload[0] != TYPE_ANSWER:
        raise FrameError(UNKNOWN_TYPE, f"unknown payload type 0x{payload[0]:02X}")
    return payload[1:]


async def read_frame(reader: asyncio.StreamReader) -> Optional[bytes]:
    """Next payload, or None on a clean end of stream"""
    try:
        header = await reader.readexactly(HEADER_SIZE)
    except asyncio.IncompleteReadError as e:
        if not e.partial:
            return None
        raise FrameError(TRUNCATED, "stream ended inside a frame header") from e
    (length,) = HEADER.unpack(header)
    if length > MAX_PAYLOAD:
        raise FrameError(OVERSIZE, f"frame announces {length} bytes, limit is {MAX_PAYLOAD}")
    try:
        return await reader.readexactly(length)
    except asyncio.IncompleteReadError as e:
        raise FrameError(TRUNCATED, f"frame announced {length} bytes, got {len(e.partial)}") from e


async def write_frame(writer: asyncio.StreamWriter, payload: bytes):
    writer.write(encode_frame(payload))
    await writer.drain()


# --------------------------------------------------------------
# server
# --------------------------------------------------------------


class RetrievalServer:
    """Answers query frames from a read-only message store, one reply per frame"""

    def __init__(self, store: MessageStore):
        self.store = store
        self.params = store.params
        self.server: Optional[asyncio.AbstractServer] = None
        self.requests = 0

    async def start(self, host: str = "127.0.0.1", port: int = 0) -> "RetrievalServer":
        self.server = await asyncio.start_server(self.handle, host, port)
        log.info(f"serving {self.params.K} messages of {self.params.L} symbols on {self.address}")
        return self

    @property
    def port(self) -> int:
        return self.server.sockets[0].getsockname()[1]

    @property
    def address(self) -> str:
        host, port = self.server.sockets[0].getsockname()[:2]
        return f"{host}:{port}"

    async def handle(self, reader: asyncio.StreamReader, writer: asyncio.StreamWriter):
        peer = writer.get_extra_info("peername")
        try:
            while True:
                try:
                    payload = await read_frame(reader)
                except FrameError as e:
                    # the stream position is lost: report and hang up
                    log.warning(f"{peer}: {e}")
                    await write_frame(writer, encode_error(e.reason))
                    break
                if payload is None:
                    break
                await write_frame(writer, self.reply(payload))
        except (ConnectionError, asyncio.CancelledError):
            pass
        finally:
            writer.close()

    def reply(self, payload: bytes) -> bytes:
        try:
            q = decode_query(payload, self.params)
        except FrameError as e:
            log.debug(f"rejecting query: {e}")
            return encode_error(e.reason)
        self.requests += 1
        return encode_answer(answer(q, self.store))

    async def stop(self):
        if self.server is not None:
            self.server.close()
            await self.server.wait_closed()


def serve(store_file: Path, address: str = "127.0.0.1:0"):
    """Run one server until interrupted"""
    store = MessageStore.load(store_file)
    host, port = parse_address(address)

    async def run():
        server = await RetrievalServer(store).start(host, port)
        async with server.server:
            await server.server.serve_forever()

    try:
        asyncio.run(run())
    except KeyboardInterrupt:
        log.info("server stopped")


# --------------------------------------------------------------
# client
# --------------------------------------------------------------


@dataclass
class RetrievalResult:
    k: int
    key: RandomKey
    message: bytes
    answers: List[Answer]
    frames_sent: int

    @property
    def symbols(self) -> int:
        return sum(len(a) for a in self.answers)


class RetrievalClient:
    def __init__(self, params: SystemParams, endpoints: Sequence[str], timeout: float = DEFAULT_TIMEOUT):
        if len(endpoints) != params.N:
            raise InvalidParams(f"need {params.N} server endpoints, got {len(endpoints)}")
        self.params = params
        self.endpoints = list(endpoints)
        self.timeout = timeout
        self.frames_sent = 0

    async def ask(self, endpoint: str, q: Query) -> Answer:
        host, port = parse_address(endpoint)
        try:
            reader, writer = await asyncio.wait_for(asyncio.open_connection(host, port), self.timeout)
        except asyncio.TimeoutError as e:
            raise Timeout(endpoint) from e
        except OSError as e:
            raise ConnectionFailed(endpoint, str(e)) from e
        try:
            await write_frame(writer, encode_query(q))
            self.frames_sent += 1
            payload = await asyncio.wait_for(read_frame(reader), self.timeout)
        except asyncio.TimeoutError as e:
            raise Timeout(endpoint) from e
        except OSError as e:
            raise ConnectionFailed(endpoint, str(e)) from e
        finally:
            writer.close()
        if payload is None:
            raise ConnectionFailed(endpoint, "connection closed before the answer")
        return decode_answer(payload)

    async def retrieve(self, k: int, key: RandomKey) -> RetrievalResult:
        """Send all N queries concurrently, the empty ones included, and decode"""
        queries = encode_queries(k, key, self.params)
        before = self.frames_sent
        answers = await asyncio.gather(*(self.ask(e, q) for e, q in zip(self.endpoints, queries)))
        for n, (q, a) in enumerate(zip(queries, answers), start=1):
            if len(a) != answer_length(q, self.params):
                raise AnswerLengthMismatch(f"server {n} ({self.endpoints[n - 1]}) sent {len(a)} symbols for query {q}")
        message = decode(answers, k, key, self.params)
        return RetrievalResult(k, key, message, list(answers), self.frames_sent - before)


def client_retrieve(
    k: int, a: Allocation, addresses: Sequence[str], seed: int, timeout: float = DEFAULT_TIMEOUT
) -> RetrievalResult:
    key = sample_key(a, k, key_stream(seed, k))
    log.debug(f"retrieving message {k} with key {key}")
    client = RetrievalClient(a.params, addresses, timeout)
    return asyncio.run(client.retrieve(k, key))
