"""Session configuration and the framed, logged channel used by every role."""

from __future__ import annotations

import hashlib
import json
import socket
import time
from dataclasses import dataclass
from pathlib import Path

from ..inversion import ProtocolConfig
from ..states import PureState, QState
from ..stats import SamplingPlan
from . import framing
from .framing import MsgType, Role, TransportError, WireMessage

ROLES = ("source", "alice", "bob")

EXIT_OK = 0
EXIT_ABORT = 2
EXIT_TRANSPORT = 3


class ProtocolAbort(RuntimeError):
    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


def parse_endpoint(text: str) -> tuple[str, int]:
    host, _, port = text.rpartition(":")
    return host or "127.0.0.1", int(port)


@dataclass
class SessionConfig:
    """What each process reads at start-up.

    ``psi_true`` is only read by the source role.  Alice initiates both of
    her connections, so her endpoint is reserved but never bound.
    """

    protocol: ProtocolConfig
    resource: QState
    seed: int
    endpoints: dict[str, tuple[str, int]]
    output_dir: str
    psi_true: PureState | None = None
    accounting: str = "successes"
    forward: str = "first_order"
    timeout: float = 30.0

    def __post_init__(self):
        if set(self.endpoints) != set(ROLES):
            raise ValueError(f"endpoints must name exactly {ROLES}")
        eps = [tuple(self.endpoints[r]) for r in ROLES]
        if len(set(eps)) != 3:
            raise ValueError("source, alice and bob endpoints must be distinct")
        self.endpoints = {r: (str(h), int(p)) for r, (h, p) in self.endpoints.items()}

    @property
    def plan(self) -> SamplingPlan:
        return SamplingPlan(self.protocol.N, self.seed, self.accounting)  # type: ignore[arg-type]

    def shared_json(self) -> dict:
        """The pre-agreed part every party holds; hashed into HELLO."""
        return {
            "protocol": self.protocol.to_json(),
            "resource": self.resource.to_json(),
            "seed": self.seed,
            "accounting": self.accounting,
            "forward": self.forward,
        }

    def digest(self) -> bytes:
        blob = json.dumps(self.shared_json(), sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(blob).digest()

    def to_json(self) -> dict:
        doc = self.shared_json()
        doc["endpoints"] = {r: f"{h}:{p}" for r, (h, p) in self.endpoints.items()}
        doc["output_dir"] = self.output_dir
        doc["timeout"] = self.timeout
        if self.psi_true is not None:
            doc["source"] = {"psi_true": self.psi_true.to_json()}
        return doc

    @classmethod
    def from_json(cls, doc: dict, role: str | None = None) -> "SessionConfig":
        psi = None
        if role in (None, "source") and "source" in doc:
            psi = PureState.from_json(doc["source"]["psi_true"])
        return cls(
            protocol=ProtocolConfig.from_json(doc["protocol"]),
            resource=QState.from_json(doc["resource"]),
            seed=int(doc["seed"]),
            endpoints={r: parse_endpoint(v) for r, v in doc["endpoints"].items()},
            output_dir=doc["output_dir"],
            psi_true=psi,
            accounting=doc.get("accounting", "successes"),
            forward=doc.get("forward", "first_order"),
            timeout=float(doc.get("timeout", 30.0)),
        )

    def write(self, path: str | Path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.to_json(), indent=1))
        return path

    @classmethod
    def load(cls, path: str | Path, role: str | None = None) -> "SessionConfig":
        return cls.from_json(json.loads(Path(path).read_text()), role)


def _log_fields(fields: dict) -> dict:
    return {k: (v.hex() if isinstance(v, bytes) else v) for k, v in fields.items()}


class Channel:
    """One peer connection: assigns sequence numbers and records every frame."""

    def __init__(self, sock: socket.socket, me: Role, peer: Role, log: list):
        self.sock = sock
        self.me = me
        self.peer = peer
        self.log = log
        self.seq = 0

    def send(self, msg_type: MsgType, round_k: int, payload: bytes, **note) -> WireMessage:
        msg = WireMessage(msg_type, round_k, self.seq, payload)
        self.seq += 1
        try:
            self.sock.sendall(msg.encode())
        except OSError as exc:
            raise TransportError(str(exc)) from exc
        self._record("send", msg, note)
        return msg

    def recv(self, expect: set[MsgType] | None = None, **note) -> WireMessage:
        raw = framing.read_frame(self.sock)
        try:
            msg = WireMessage.decode(raw)
        except framing.UnknownMessageType:
            self.abort("unknown-msg")
            raise ProtocolAbort("unknown-msg") from None
        except framing.FramingError as exc:
            self.abort("bad-frame")
            raise ProtocolAbort(f"bad frame: {exc}") from None
        self._record("recv", msg, note)
        if msg.msg_type is MsgType.ABORT:
            raise ProtocolAbort("peer aborted: " + msg.fields()["reason"])
        if expect is not None and msg.msg_type not in expect:
            self.abort("unexpected-msg")
            raise ProtocolAbort(f"unexpected {msg.msg_type.name} from {self.peer.name.lower()}")
        return msg

    def abort(self, reason: str) -> None:
        try:
            self.send(MsgType.ABORT, 0, framing.abort(reason))
        except TransportError:
            pass

    def _record(self, direction: str, msg: WireMessage, note: dict) -> None:
        entry = {
            "dir": direction,
            "peer": self.peer.name.lower(),
            "type": msg.msg_type.name,
            "k": msg.round_k,
            "seq": msg.seq,
            "bytes": len(msg.payload),
        }
        entry.update(_log_fields(msg.fields()))
        entry.update(note)
        self.log.append(entry)

    def close(self) -> None:
        try:
            self.sock.close()
        except OSError:
            pass


def connect(endpoint: tuple[str, int], timeout: float) -> socket.socket:
    """Connect with retries until ``timeout`` (peers start in any order)."""
    deadline = time.monotonic() + timeout
    delay = 0.01
    while True:
        try:
            sock = socket.create_connection(endpoint, timeout=timeout)
            sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            return sock
        except OSError as exc:
            if time.monotonic() >= deadline:
                raise TransportError(f"could not reach {endpoint}: {exc}") from exc
            time.sleep(delay)
            delay = min(delay * 2, 0.2)


def listen(endpoint: tuple[str, int]) -> socket.socket:
    srv = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    srv.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
    srv.bind(endpoint)
    srv.listen(4)
    return srv


def accept(srv: socket.socket, timeout: float) -> socket.socket:
    srv.settimeout(timeout)
    try:
        sock, _ = srv.accept()
    except socket.timeout as exc:
        raise TransportError("timed out waiting for a peer to connect") from exc
    sock.settimeout(timeout)
    sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
    return sock


def write_log(path: Path, log: list) -> None:
    with open(path, "w") as fh:
        for entry in log:
            fh.write(json.dumps(entry) + "\n")


def read_log(path: str | Path) -> list[dict]:
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]
