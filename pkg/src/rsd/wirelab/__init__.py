"""Multi-process loopback implementation of the classical side of the protocol."""

from .framing import FramingError, MsgType, Role, TransportError, UnknownMessageType, WireMessage
from .harness import DistributedRun, SessionFailed, make_session, run_distributed
from .session import EXIT_ABORT, EXIT_OK, EXIT_TRANSPORT, ProtocolAbort, SessionConfig

__all__ = [
    "FramingError",
    "MsgType",
    "Role",
    "TransportError",
    "UnknownMessageType",
    "WireMessage",
    "DistributedRun",
    "SessionFailed",
    "make_session",
    "run_distributed",
    "EXIT_ABORT",
    "EXIT_OK",
    "EXIT_TRANSPORT",
    "ProtocolAbort",
    "SessionConfig",
]
