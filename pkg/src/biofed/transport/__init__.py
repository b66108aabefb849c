"""Wire protocol and the loopback / socket transports built on it."""

from .loopback import LoopbackTransport
from .protocol import (
    ERR_INTERNAL,
    ERR_MALFORMED,
    ERR_UNEXPECTED,
    ERR_VERSION_MISMATCH,
    HEADER_LEN,
    MAX_FRAME,
    MESSAGE_TYPES,
    PROTOCOL_VERSION,
    Error,
    EvaluateInstruction,
    EvaluateResultMsg,
    FitInstruction,
    FitResultMsg,
    Join,
    JoinAck,
    Shutdown,
    decode,
    encode,
    parse_header,
)
from .socket_transport import (
    SocketClientSession,
    SocketServerTransport,
    read_frame,
    recv_exact,
    send_frame,
)

__all__ = [
    "ERR_INTERNAL",
    "ERR_MALFORMED",
    "ERR_UNEXPECTED",
    "ERR_VERSION_MISMATCH",
    "HEADER_LEN",
    "MAX_FRAME",
    "MESSAGE_TYPES",
    "PROTOCOL_VERSION",
    "Error",
    "EvaluateInstruction",
    "EvaluateResultMsg",
    "FitInstruction",
    "FitResultMsg",
    "Join",
    "JoinAck",
    "Shutdown",
    "decode",
    "encode",
    "parse_header",
    "LoopbackTransport",
    "SocketClientSession",
    "SocketServerTransport",
    "read_frame",
    "recv_exact",
    "send_frame",
]
