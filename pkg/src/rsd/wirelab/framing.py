"""Binary framing for the classical channels.

Frame layout, all integers big-endian::

    offset  size  field
    0       2     magic  b"RD"
    2       1     version (1)
    3       1     msg_type
    4       4     round_k (u32)
    8       8     seq (u64)
    16      4     payload_len (u32)
    20      n     payload

For HELLO the ``round_k`` field carries the sender's role id (see
``Role``); it is otherwise unused before the first round.
"""

from __future__ import annotations

import socket
import struct
from dataclasses import dataclass
from enum import IntEnum

MAGIC = b"RD"
VERSION = 1
HEADER = struct.Struct(">2sBBIQI")
HEADER_SIZE = HEADER.size  # 20
MAX_PAYLOAD = 1 << 16


class MsgType(IntEnum):
    HELLO = 0x01
    ROUND_BEGIN = 0x02
    PS_BIT = 0x03
    MEAS_REQUEST = 0x04
    MEAS_RESULT = 0x05
    ROUND_END = 0x06
    ABORT = 0x07


class Role(IntEnum):
    SOURCE = 0
    ALICE = 1
    BOB = 2


class FramingError(ValueError):
    pass


class UnknownMessageType(FramingError):
    def __init__(self, code: int):
        super().__init__(f"unknown message type 0x{code:02X}")
        self.code = code


# fixed payload sizes; ABORT is variable
PAYLOAD_SIZE = {
    MsgType.HELLO: 32,
    MsgType.ROUND_BEGIN: 5,
    MsgType.PS_BIT: 1,
    MsgType.MEAS_REQUEST: 8,
    MsgType.MEAS_RESULT: 2,
    MsgType.ROUND_END: 8,
}


@dataclass(frozen=True)
class WireMessage:
    msg_type: MsgType
    round_k: int
    seq: int
    payload: bytes = b""

    def encode(self) -> bytes:
        return HEADER.pack(MAGIC, VERSION, int(self.msg_type), self.round_k, self.seq, len(self.payload)) + self.payload

    @classmethod
    def decode(cls, frame: bytes) -> "WireMessage":
        header = parse_header(frame[:HEADER_SIZE])
        msg_type, round_k, seq, n = header
        payload = frame[HEADER_SIZE:]
        if len(payload) != n:
            raise FramingError(f"payload length {len(payload)} does not match header ({n})")
        msg = cls(msg_type, round_k, seq, bytes(payload))
        msg.fields()  # validates the payload
        return msg

    def fields(self) -> dict:
        return decode_payload(self.msg_type, self.payload)


def parse_header(raw: bytes) -> tuple[MsgType, int, int, int]:
    if len(raw) != HEADER_SIZE:
        raise FramingError(f"short header ({len(raw)} bytes)")
    magic, version, code, round_k, seq, n = HEADER.unpack(raw)
    if magic != MAGIC:
        raise FramingError(f"bad magic {magic!r}")
    if version != VERSION:
        raise FramingError(f"unsupported version {version}")
    if n > MAX_PAYLOAD:
        raise FramingError(f"payload too large ({n} bytes)")
    try:
        msg_type = MsgType(code)
    except ValueError:
        raise UnknownMessageType(code) from None
    return msg_type, round_k, seq, n


def decode_payload(msg_type: MsgType, payload: bytes) -> dict:
    want = PAYLOAD_SIZE.get(msg_type)
    if want is not None and len(payload) != want:
        raise FramingError(f"{msg_type.name} payload must be {want} bytes, got {len(payload)}")
    if msg_type is MsgType.HELLO:
        return {"config_hash": payload}
    if msg_type is MsgType.ROUND_BEGIN:
        k, set_id = struct.unpack(">IB", payload)
        if set_id not in (1, 2):
            raise FramingError(f"ROUND_BEGIN set must be 1 or 2, got {set_id}")
        return {"k": k, "set": set_id}
    if msg_type is MsgType.PS_BIT:
        bit = payload[0]
        if bit not in (0, 1):
            raise FramingError(f"PS_BIT must be 0 or 1, got {bit}")
        return {"bit": bit}
    if msg_type is MsgType.MEAS_REQUEST:
        return {"copy_index": struct.unpack(">Q", payload)[0]}
    if msg_type is MsgType.MEAS_RESULT:
        return {"eigenvalue_index": struct.unpack(">H", payload)[0]}
    if msg_type is MsgType.ROUND_END:
        return {"successes": struct.unpack(">Q", payload)[0]}
    return {"reason": payload.decode("utf-8", errors="replace")}


# -- payload builders ----------------------------------------------------------


def hello(config_hash: bytes) -> bytes:
    if len(config_hash) != 32:
        raise ValueError("config hash must be 32 bytes")
    return bytes(config_hash)


def round_begin(k: int, set_id: int) -> bytes:
    return struct.pack(">IB", k, set_id)


def ps_bit(bit: int) -> bytes:
    if bit not in (0, 1):
        raise ValueError("bit must be 0 or 1")
    return bytes([bit])


def meas_request(copy_index: int) -> bytes:
    return struct.pack(">Q", copy_index)


def meas_result(eigenvalue_index: int) -> bytes:
    return struct.pack(">H", eigenvalue_index)


def round_end(successes: int) -> bytes:
    return struct.pack(">Q", successes)


def abort(reason: str) -> bytes:
    return reason.encode("utf-8")[:MAX_PAYLOAD]


def decode_or_abort(frame: bytes, round_k: int = 0, seq: int = 0) -> WireMessage:
    """Decode a frame; an unknown type becomes the ABORT reply to send back."""
    try:
        return WireMessage.decode(frame)
    except UnknownMessageType:
        return WireMessage(MsgType.ABORT, round_k, seq, abort("unknown-msg"))


# -- sockets ---------------------------------------------------------------------


class TransportError(ConnectionError):
    pass


def _recv_exact(sock: socket.socket, n: int) -> bytes:
    buf = bytearray()
    while len(buf) < n:
        try:
            chunk = sock.recv(n - len(buf))
        except socket.timeout as exc:
            raise TransportError("timed out waiting for peer") from exc
        except OSError as exc:
            raise TransportError(str(exc)) from exc
        if not chunk:
            if not buf:
                raise EOFError("peer closed the connection")
            raise TransportError("connection closed mid-frame")
        buf.extend(chunk)
    return bytes(buf)


def read_frame(sock: socket.socket) -> bytes:
    """Read one raw frame.  Raises EOFError on a clean close between frames."""
    head = _recv_exact(sock, HEADER_SIZE)
    n = struct.unpack(">I", head[16:20])[0]
    if n > MAX_PAYLOAD:
        raise FramingError(f"payload too large ({n} bytes)")
    return head + (_recv_exact(sock, n) if n else b"")
