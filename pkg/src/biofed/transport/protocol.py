"""Binary wire protocol for server-client coordination.

Frame layout, little-endian throughout:

    u32  payload length (bytes after the 11-byte header)
    u8   variant tag
    u16  protocol version (currently 1)
    u32  round index (0 for Join / JoinAck)
    ...  payload, per variant

Model parameters travel embedded in the checkpoint binary layout. Strings are
u16 length + UTF-8 bytes. The decoder is total: any byte string yields either
a message or a typed ProtocolError, never an unhandled exception. Only model
parameters, training configuration, and evaluation tallies are representable;
there is deliberately no variant that could carry raw samples.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from ..errors import (
    LengthMismatchError,
    OversizeFrameError,
    ProtocolError,
    TruncatedFrameError,
    UnknownTagError,
    ValidationError,
    VersionMismatchError,
)
from ..metrics import ConfusionMatrix
from ..nn.params import ModelParameters
from ..nn.train import TrainConfig

PROTOCOL_VERSION = 1
HEADER_LEN = 11
MAX_FRAME = 64 * 1024 * 1024

TAG_JOIN = 1
TAG_JOIN_ACK = 2
TAG_FIT_INSTRUCTION = 3
TAG_FIT_RESULT = 4
TAG_EVALUATE_INSTRUCTION = 5
TAG_EVALUATE_RESULT = 6
TAG_SHUTDOWN = 7
TAG_ERROR = 8

ERR_VERSION_MISMATCH = 1
ERR_MALFORMED = 2
ERR_UNEXPECTED = 3
ERR_INTERNAL = 4


@dataclass(frozen=True)
class Join:
    client_id: str
    round_index: int = 0


@dataclass(frozen=True)
class JoinAck:
    client_id: str
    round_index: int = 0


@dataclass(frozen=True)
class FitInstruction:
    round_index: int
    config: TrainConfig
    params: ModelParameters


@dataclass(frozen=True)
class FitResultMsg:
    client_id: str
    round_index: int
    params: ModelParameters
    num_examples: int
    train_loss: float


@dataclass(frozen=True)
class EvaluateInstruction:
    round_index: int
    params: ModelParameters


@dataclass(frozen=True)
class EvaluateResultMsg:
    client_id: str
    round_index: int
    loss: float
    matrix: ConfusionMatrix


@dataclass(frozen=True)
class Shutdown:
    round_index: int = 0


@dataclass(frozen=True)
class Error:
    code: int
    text: str
    round_index: int = 0


MESSAGE_TYPES = (
    Join,
    JoinAck,
    FitInstruction,
    FitResultMsg,
    EvaluateInstruction,
    EvaluateResultMsg,
    Shutdown,
    Error,
)

_TAG_OF = {
    Join: TAG_JOIN,
    JoinAck: TAG_JOIN_ACK,
    FitInstruction: TAG_FIT_INSTRUCTION,
    FitResultMsg: TAG_FIT_RESULT,
    EvaluateInstruction: TAG_EVALUATE_INSTRUCTION,
    EvaluateResultMsg: TAG_EVALUATE_RESULT,
    Shutdown: TAG_SHUTDOWN,
    Error: TAG_ERROR,
}


def _pack_str(value):
    raw = value.encode("utf-8")
    if len(raw) > 0xFFFF:
        raise ValidationError([("string", f"field of {len(raw)} bytes exceeds the u16 length prefix")])
    return struct.pack("<H", len(raw)) + raw


def _unpack_str(view, pos):
    if len(view) - pos < 2:
        raise LengthMismatchError("string length prefix runs past the payload")
    (n,) = struct.unpack_from("<H", view, pos)
    pos += 2
    if len(view) - pos < n:
        raise LengthMismatchError("string body runs past the payload")
    try:
        return bytes(view[pos:pos + n]).decode("utf-8"), pos + n
    except UnicodeDecodeError as exc:
        raise LengthMismatchError(f"string is not valid UTF-8: {exc}") from exc


def _pack_train_config(cfg):
    return struct.pack("<dIIQ", cfg.learning_rate, cfg.batch_size, cfg.local_epochs, cfg.seed)


def _unpack_train_config(view, pos):
    if len(view) - pos < 24:
        raise LengthMismatchError("training configuration runs past the payload")
    lr, batch, epochs, seed = struct.unpack_from("<dIIQ", view, pos)
    try:
        return TrainConfig(learning_rate=lr, batch_size=batch, local_epochs=epochs, seed=seed), pos + 24
    except ValidationError as exc:
        raise LengthMismatchError(f"training configuration invalid: {exc}") from exc


def _pack_params(params):
    return params.to_bytes()


def _unpack_params(view, pos, end):
    params, pos = ModelParameters.from_bytes(view, offset=pos, consume_all=False)
    if pos > end:
        raise LengthMismatchError("embedded checkpoint runs past the payload")
    return params, pos


def encode_payload(msg):
    if isinstance(msg, (Join, JoinAck)):
        return _pack_str(msg.client_id)
    if isinstance(msg, FitInstruction):
        return _pack_train_config(msg.config) + _pack_params(msg.params)
    if isinstance(msg, FitResultMsg):
        return (
            _pack_str(msg.client_id)
            + struct.pack("<Qd", msg.num_examples, msg.train_loss)
            + _pack_params(msg.params)
        )
    if isinstance(msg, EvaluateInstruction):
        return _pack_params(msg.params)
    if isinstance(msg, EvaluateResultMsg):
        counts = msg.matrix.counts
        k = msg.matrix.num_classes
        return (
            _pack_str(msg.client_id)
            + struct.pack("<dI", msg.loss, k)
            + counts.astype("<u8").tobytes()
        )
    if isinstance(msg, Shutdown):
        return b""
    if isinstance(msg, Error):
        return struct.pack("<H", msg.code) + _pack_str(msg.text)
    raise ValidationError([("message", f"not a protocol message: {type(msg).__name__}")])


def encode(msg, max_frame=MAX_FRAME):
    """Message -> framed bytes."""
    tag = _TAG_OF.get(type(msg))
    if tag is None:
        raise ValidationError([("message", f"not a protocol message: {type(msg).__name__}")])
    payload = encode_payload(msg)
    if len(payload) > max_frame:
        raise OversizeFrameError(f"payload of {len(payload)} bytes exceeds the {max_frame}-byte frame cap")
    header = struct.pack("<IBHI", len(payload), tag, PROTOCOL_VERSION, msg.round_index)
    return header + payload


def parse_header(data, max_frame=MAX_FRAME):
    """First 11 bytes -> (payload_len, tag, version, round_index)."""
    if len(data) < HEADER_LEN:
        raise TruncatedFrameError(f"header needs {HEADER_LEN} bytes, got {len(data)}")
    payload_len, tag, version, round_index = struct.unpack_from("<IBHI", data, 0)
    if payload_len > max_frame:
        raise OversizeFrameError(f"declared payload of {payload_len} bytes exceeds the {max_frame}-byte frame cap")
    return payload_len, tag, version, round_index


def decode_payload(tag, round_index, payload):
    view = memoryview(payload)
    end = len(view)

    def done(msg, pos):
        if pos != end:
            raise LengthMismatchError(f"{end - pos} unexpected trailing payload bytes")
        return msg

    if tag in (TAG_JOIN, TAG_JOIN_ACK):
        client_id, pos = _unpack_str(view, 0)
        cls = Join if tag == TAG_JOIN else JoinAck
        return done(cls(client_id, round_index), pos)
    if tag == TAG_FIT_INSTRUCTION:
        cfg, pos = _unpack_train_config(view, 0)
        params, pos = _unpack_params(view, pos, end)
        return done(FitInstruction(round_index, cfg, params), pos)
    if tag == TAG_FIT_RESULT:
        client_id, pos = _unpack_str(view, 0)
        if end - pos < 16:
            raise LengthMismatchError("fit result fields run past the payload")
        num_examples, train_loss = struct.unpack_from("<Qd", view, pos)
        pos += 16
        params, pos = _unpack_params(view, pos, end)
        return done(FitResultMsg(client_id, round_index, params, num_examples, train_loss), pos)
    if tag == TAG_EVALUATE_INSTRUCTION:
        params, pos = _unpack_params(view, 0, end)
        return done(EvaluateInstruction(round_index, params), pos)
    if tag == TAG_EVALUATE_RESULT:
        client_id, pos = _unpack_str(view, 0)
        if end - pos < 12:
            raise LengthMismatchError("evaluate result fields run past the payload")
        loss, k = struct.unpack_from("<dI", view, pos)
        pos += 12
        need = k * k * 8
        if end - pos < need:
            raise LengthMismatchError(f"confusion counts need {need} bytes, payload has {end - pos}")
        if k < 1:
            raise LengthMismatchError("confusion matrix needs at least one class")
        raw = np.frombuffer(view[pos:pos + need], dtype="<u8").reshape(k, k)
        pos += need
        if raw.max(initial=0) > np.iinfo(np.int64).max:
            raise LengthMismatchError("confusion count exceeds the tally range")
        try:
            matrix = ConfusionMatrix(raw.astype(np.int64))
        except ValidationError as exc:
            raise LengthMismatchError(f"confusion matrix invalid: {exc}") from exc
        return done(EvaluateResultMsg(client_id, round_index, loss, matrix), pos)
    if tag == TAG_SHUTDOWN:
        return done(Shutdown(round_index), 0)
    if tag == TAG_ERROR:
        if end < 2:
            raise LengthMismatchError("error code runs past the payload")
        (code,) = struct.unpack_from("<H", view, 0)
        text, pos = _unpack_str(view, 2)
        return done(Error(code, text, round_index), pos)
    raise UnknownTagError(f"unknown message tag {tag}")


def decode(data, max_frame=MAX_FRAME):
    """Framed bytes -> (Message, bytes consumed). Raises ProtocolError only."""
    payload_len, tag, version, round_index = parse_header(data, max_frame)
    if len(data) - HEADER_LEN < payload_len:
        raise TruncatedFrameError(
            f"frame declares {payload_len} payload bytes, only {len(data) - HEADER_LEN} present"
        )
    if version != PROTOCOL_VERSION:
        raise VersionMismatchError(f"protocol version {version}, expected {PROTOCOL_VERSION}")
    if tag not in _TAG_OF.values():
        raise UnknownTagError(f"unknown message tag {tag}")
    payload = bytes(data[HEADER_LEN:HEADER_LEN + payload_len])
    try:
        msg = decode_payload(tag, round_index, payload)
    except ProtocolError:
        raise
    except Exception as exc:  # decoder totality: surface as a typed error
        raise LengthMismatchError(f"malformed payload: {exc}") from exc
    return msg, HEADER_LEN + payload_len
