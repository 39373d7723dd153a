"""Bit-exact wire protocol for running the dialogue across processes.

Framing: every message is a 1-byte type tag, a 4-byte big-endian payload
length and the payload; all multi-byte integers are big-endian and values
are IEEE-754 binary64. The dialogue over a reliable byte stream:

    teacher                       apprentice
    HELLO(N, q, K, digest)  -->
                            <--   HELLO(N, q, K, digest)
    FEATURE(position, value) -->        (repeated)
                            <--   STOP(element, confidence)
    SATURATED               -->        (only if all N features went out)
                            <--   STOP(element, confidence)

Both sides verify the same SHA-256 digest of the canonically serialized
semantic base before any feature flows; ERRORMSG aborts the session.

Transports: a TCP socket wrapper and an in-memory duplex that implements
the same contract for tests. The in-memory duplex hands a frame over only
when the peer is actually waiting for one, so a loopback session is fully
deterministic: the teacher sends exactly as many FEATURE frames as the
apprentice consumes.

Bit accounting stays ideal (position index bits plus q bits per packet);
the byte-aligned framing overhead is reported separately by the CLI.
"""

from __future__ import annotations

import hashlib
import select
import socket
import struct
import threading
from dataclasses import dataclass

import numpy as np

from .base import FeaturePacket, SemanticBase
from .errors import ConfigError, DataError, IOFailure, ProtocolError
from .identifier import (
    Decision,
    check_stop,
    force_decision,
    init_posterior,
    receive_packet,
)
from .teacher import TransmitPlan, next_packet

__all__ = [
    "Hello",
    "Feature",
    "Stop",
    "Saturated",
    "ErrorMsg",
    "encode_message",
    "decode_message",
    "read_message",
    "base_digest",
    "memory_pair",
    "MemoryStream",
    "SocketStream",
    "teacher_session",
    "apprentice_session",
    "TeacherReport",
    "FRAME_HEADER_SIZE",
    "frame_size",
]

TAG_HELLO = 0x01
TAG_FEATURE = 0x02
TAG_STOP = 0x03
TAG_SATURATED = 0x04
TAG_ERRORMSG = 0x05

ERR_DIGEST_MISMATCH = 1
ERR_MALFORMED = 2
ERR_ORDER = 3
ERR_BAD_FEATURE = 4

FRAME_HEADER_SIZE = 5
MAX_PAYLOAD = 1 << 20

_U16_MAX = 0xFFFF
_U32_MAX = 0xFFFFFFFF


@dataclass(frozen=True)
class Hello:
    n_features: int
    q: int
    n_elements: int
    digest: bytes


@dataclass(frozen=True)
class Feature:
    position: int
    value: float


@dataclass(frozen=True)
class Stop:
    element_id: int
    confidence: float


@dataclass(frozen=True)
class Saturated:
    pass


@dataclass(frozen=True)
class ErrorMsg:
    code: int
    text: str


WireMessage = Hello | Feature | Stop | Saturated | ErrorMsg


def _check_u32(value: int, what: str) -> int:
    if not 0 <= value <= _U32_MAX:
        raise ProtocolError(f"{what} {value} does not fit an unsigned 32-bit field")
    return value


def _check_u16(value: int, what: str) -> int:
    if not 0 <= value <= _U16_MAX:
        raise ProtocolError(f"{what} {value} does not fit an unsigned 16-bit field")
    return value


def _frame(tag: int, payload: bytes) -> bytes:
    return struct.pack(">BI", tag, len(payload)) + payload


def encode_message(msg: WireMessage) -> bytes:
    """Canonical frame bytes for one message; deterministic."""
    if isinstance(msg, Hello):
        if len(msg.digest) != 32:
            raise ProtocolError(f"digest must be 32 bytes, got {len(msg.digest)}")
        payload = struct.pack(
            ">IHI32s",
            _check_u32(msg.n_features, "feature count"),
            _check_u16(msg.q, "bits per value"),
            _check_u32(msg.n_elements, "element count"),
            msg.digest,
        )
        return _frame(TAG_HELLO, payload)
    if isinstance(msg, Feature):
        if not np.isfinite(msg.value):
            raise ProtocolError("feature value must be finite")
        payload = struct.pack(">Id", _check_u32(msg.position, "feature position"), msg.value)
        return _frame(TAG_FEATURE, payload)
    if isinstance(msg, Stop):
        if not 0.0 <= msg.confidence <= 1.0:
            raise ProtocolError(f"confidence {msg.confidence} outside [0, 1]")
        payload = struct.pack(">Id", _check_u32(msg.element_id, "element id"), msg.confidence)
        return _frame(TAG_STOP, payload)
    if isinstance(msg, Saturated):
        return _frame(TAG_SATURATED, b"")
    if isinstance(msg, ErrorMsg):
        text = msg.text.encode("utf-8")
        payload = struct.pack(">HH", _check_u16(msg.code, "error code"), _check_u16(len(text), "error text length")) + text
        return _frame(TAG_ERRORMSG, payload)
    raise ProtocolError(f"cannot encode {type(msg).__name__}")


def _decode_payload(tag: int, payload: bytes) -> WireMessage:
    if tag == TAG_HELLO:
        if len(payload) != 42:
            raise ProtocolError(f"HELLO payload must be 42 bytes, got {len(payload)}")
        n, q, k, digest = struct.unpack(">IHI32s", payload)
        return Hello(n_features=n, q=q, n_elements=k, digest=digest)
    if tag == TAG_FEATURE:
        if len(payload) != 12:
            raise ProtocolError(f"FEATURE payload must be 12 bytes, got {len(payload)}")
        position, value = struct.unpack(">Id", payload)
        return Feature(position=position, value=value)
    if tag == TAG_STOP:
        if len(payload) != 12:
            raise ProtocolError(f"STOP payload must be 12 bytes, got {len(payload)}")
        element_id, confidence = struct.unpack(">Id", payload)
        return Stop(element_id=element_id, confidence=confidence)
    if tag == TAG_SATURATED:
        if payload:
            raise ProtocolError(f"SATURATED carries no payload, got {len(payload)} bytes")
        return Saturated()
    if tag == TAG_ERRORMSG:
        if len(payload) < 4:
            raise ProtocolError("ERRORMSG payload truncated")
        code, text_len = struct.unpack(">HH", payload[:4])
        if len(payload) != 4 + text_len:
            raise ProtocolError(
                f"ERRORMSG declares {text_len} text bytes but frame has {len(payload) - 4}"
            )
        try:
            text = payload[4:].decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ProtocolError(f"ERRORMSG text is not valid UTF-8: {exc}")
        return ErrorMsg(code=code, text=text)
    raise ProtocolError(f"unknown message tag 0x{tag:02x}")


def decode_message(data: bytes) -> WireMessage:
    """Parse one complete frame; rejects truncation and trailing bytes."""
    if len(data) < FRAME_HEADER_SIZE:
        raise ProtocolError(f"frame header needs {FRAME_HEADER_SIZE} bytes, got {len(data)}")
    tag, length = struct.unpack(">BI", data[:FRAME_HEADER_SIZE])
    if length > MAX_PAYLOAD:
        raise ProtocolError(f"payload length {length} exceeds limit {MAX_PAYLOAD}")
    payload = data[FRAME_HEADER_SIZE:]
    if len(payload) < length:
        raise ProtocolError(f"frame truncated: expected {length} payload bytes, got {len(payload)}")
    if len(payload) > length:
        raise ProtocolError(f"{len(payload) - length} trailing bytes after frame payload")
    return _decode_payload(tag, payload)


def frame_size(msg: WireMessage) -> int:
    return len(encode_message(msg))


def base_digest(base: SemanticBase) -> bytes:
    """SHA-256 over the canonical serialization; the handshake token."""
    return hashlib.sha256(base.canonical_bytes()).digest()


# ---------------------------------------------------------------------------
# Transports
# ---------------------------------------------------------------------------

READY = "ready"
INCOMING = "incoming"


class _DuplexCore:
    """Shared state of an in-memory stream pair."""

    def __init__(self):
        self.cond = threading.Condition()
        self.buffers = [bytearray(), bytearray()]
        self.reader_waiting = [False, False]
        self.closed = [False, False]


class MemoryStream:
    """One endpoint of an in-process duplex implementing the wire contract.

    send() appends to the peer's inbox. wait_sendable() blocks until the
    peer is starved and actively reading (READY) or until the peer has
    sent us something (INCOMING), which is what makes loopback sessions
    deterministic packet for packet.
    """

    def __init__(self, core: _DuplexCore, side: int):
        self._core = core
        self._side = side

    @property
    def _peer(self) -> int:
        return 1 - self._side

    def send(self, data: bytes):
        core = self._core
        with core.cond:
            if core.closed[self._peer]:
                raise ProtocolError("peer endpoint is closed")
            core.buffers[self._peer].extend(data)
            core.cond.notify_all()

    def recv_exact(self, n: int) -> bytes:
        core = self._core
        with core.cond:
            buf = core.buffers[self._side]
            while len(buf) < n:
                if core.closed[self._peer]:
                    raise ProtocolError("stream ended mid-frame: peer closed")
                core.reader_waiting[self._side] = True
                core.cond.notify_all()
                core.cond.wait()
                core.reader_waiting[self._side] = False
            out = bytes(buf[:n])
            del buf[:n]
            return out

    def wait_sendable(self) -> str:
        core = self._core
        with core.cond:
            while True:
                if core.buffers[self._side]:
                    return INCOMING
                if core.closed[self._peer]:
                    raise ProtocolError("peer endpoint is closed")
                if core.reader_waiting[self._peer] and not core.buffers[self._peer]:
                    return READY
                core.cond.wait()

    def close(self):
        core = self._core
        with core.cond:
            core.closed[self._side] = True
            core.cond.notify_all()


def memory_pair() -> tuple[MemoryStream, MemoryStream]:
    core = _DuplexCore()
    return MemoryStream(core, 0), MemoryStream(core, 1)


class SocketStream:
    """TCP transport. Pacing is best-effort: the kernel buffers frames, so
    the teacher may have a few packets in flight when the stop arrives;
    the apprentice's packet count is authoritative either way."""

    def __init__(self, sock: socket.socket):
        self._sock = sock

    def send(self, data: bytes):
        try:
            self._sock.sendall(data)
        except OSError as exc:
            raise IOFailure(f"send failed: {exc}")

    def recv_exact(self, n: int) -> bytes:
        chunks = []
        remaining = n
        while remaining > 0:
            try:
                chunk = self._sock.recv(remaining)
            except socket.timeout as exc:
                raise IOFailure(f"receive timed out: {exc}")
            except OSError as exc:
                raise IOFailure(f"receive failed: {exc}")
            if not chunk:
                raise ProtocolError("stream ended mid-frame: peer closed")
            chunks.append(chunk)
            remaining -= len(chunk)
        return b"".join(chunks)

    def wait_sendable(self) -> str:
        readable, writable, _ = select.select([self._sock], [self._sock], [])
        if readable:
            return INCOMING
        if writable:
            return READY
        return READY

    def close(self):
        # Graceful close: signal end-of-stream, then drain whatever the
        # peer already pipelined so its in-flight sends never hit a reset.
        try:
            self._sock.shutdown(socket.SHUT_WR)
            self._sock.settimeout(2.0)
            while self._sock.recv(4096):
                pass
        except OSError:
            pass
        finally:
            try:
                self._sock.close()
            except OSError:
                pass


def read_message(stream) -> WireMessage:
    """Read exactly one frame from a stream and decode it."""
    header = stream.recv_exact(FRAME_HEADER_SIZE)
    tag, length = struct.unpack(">BI", header)
    if length > MAX_PAYLOAD:
        raise ProtocolError(f"payload length {length} exceeds limit {MAX_PAYLOAD}")
    payload = stream.recv_exact(length) if length else b""
    return _decode_payload(tag, payload)


# ---------------------------------------------------------------------------
# Sessions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TeacherReport:
    """What the sending side observed during one session."""

    features_sent: int
    saturated: bool
    stop: Stop


def _abort(stream, code: int, text: str) -> ProtocolError:
    try:
        stream.send(encode_message(ErrorMsg(code=code, text=text)))
    except (ProtocolError, IOFailure):
        pass
    return ProtocolError(text)


def _hello_for(base: SemanticBase) -> Hello:
    return Hello(
        n_features=base.n_features,
        q=base.q,
        n_elements=base.n_elements,
        digest=base_digest(base),
    )


def teacher_session(plan: TransmitPlan, base: SemanticBase, stream) -> TeacherReport:
    """Serve one transmission: handshake, stream features, stop on STOP.

    Raises ProtocolError on digest mismatch (before any feature goes out),
    on out-of-order messages and on peer-reported errors.
    """
    mine = _hello_for(base)
    stream.send(encode_message(mine))
    reply = read_message(stream)
    if isinstance(reply, ErrorMsg):
        raise ProtocolError(f"peer aborted handshake: [{reply.code}] {reply.text}")
    if not isinstance(reply, Hello):
        raise _abort(stream, ERR_ORDER, f"expected HELLO reply, got {type(reply).__name__}")
    if reply != mine:
        raise _abort(
            stream,
            ERR_DIGEST_MISMATCH,
            "semantic base mismatch: peer holds different shared knowledge",
        )

    features_sent = 0
    sent_saturated = False
    while True:
        if plan.exhausted:
            if not sent_saturated:
                stream.send(encode_message(Saturated()))
                sent_saturated = True
            msg = read_message(stream)
        else:
            if stream.wait_sendable() == INCOMING:
                msg = read_message(stream)
            else:
                packet = next_packet(plan)
                stream.send(encode_message(Feature(packet.position, packet.value)))
                features_sent += 1
                continue
        if isinstance(msg, Stop):
            return TeacherReport(
                features_sent=features_sent, saturated=sent_saturated, stop=msg
            )
        if isinstance(msg, ErrorMsg):
            raise ProtocolError(f"peer aborted session: [{msg.code}] {msg.text}")
        raise _abort(stream, ERR_ORDER, f"unexpected {type(msg).__name__} while transmitting")


def apprentice_session(base: SemanticBase, threshold: float, stream) -> Decision:
    """Run the receiving side of one session and return its decision.

    Feeds every FEATURE through the engine, stops the peer as soon as the
    threshold is met, and falls back to a forced decision on SATURATED.
    """
    if not 0.0 < threshold <= 1.0:
        raise ConfigError(f"confidence threshold must be in (0, 1], got {threshold}")

    msg = read_message(stream)
    if isinstance(msg, ErrorMsg):
        raise ProtocolError(f"peer aborted handshake: [{msg.code}] {msg.text}")
    if not isinstance(msg, Hello):
        raise _abort(stream, ERR_ORDER, f"expected HELLO, got {type(msg).__name__}")
    mine = _hello_for(base)
    if msg != mine:
        raise _abort(
            stream,
            ERR_DIGEST_MISMATCH,
            "semantic base mismatch: peer holds different shared knowledge",
        )
    stream.send(encode_message(mine))

    state = init_posterior(base)
    decision = None
    while decision is None:
        msg = read_message(stream)
        if isinstance(msg, Feature):
            try:
                packet = FeaturePacket(position=msg.position, value=msg.value)
                state = receive_packet(state, packet, base)
            except (ProtocolError, DataError) as exc:
                raise _abort(stream, ERR_BAD_FEATURE, f"bad feature frame: {exc}")
            decision = check_stop(state, threshold)
        elif isinstance(msg, Saturated):
            try:
                decision = force_decision(state)
            except ProtocolError as exc:
                raise _abort(stream, ERR_ORDER, f"premature SATURATED: {exc}")
        elif isinstance(msg, ErrorMsg):
            raise ProtocolError(f"peer aborted session: [{msg.code}] {msg.text}")
        else:
            raise _abort(stream, ERR_ORDER, f"unexpected {type(msg).__name__} mid-session")

    stream.send(encode_message(Stop(element_id=decision.element_id, confidence=decision.confidence)))
    return decision
