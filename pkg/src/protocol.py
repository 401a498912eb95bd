"""
Wire protocol: length-prefixed frames carrying one canonical JSON message.

A frame is a 4-byte big-endian unsigned length followed by that many bytes of
UTF-8 JSON. The JSON object has ``type`` first, then the remaining fields in
alphabetical order, with no insignificant whitespace.
"""
import json
import struct
from dataclasses import dataclass
from typing import Any, Dict, Iterator, Optional, Union

from .errors import (
    FrameEncodeError,
    FrameTooLargeError,
    InvalidEncodingError,
    InvalidFieldError,
    MalformedPayloadError,
    MissingFieldError,
    ShortReadError,
    SkillFlowError,
    UnknownMessageTypeError,
)
from .models import AgentId, BodyKind, SkillDescriptor, validate_skill_name

HEADER = struct.Struct(">I")
MAX_FRAME_BYTES = 16 * 1024 * 1024


@dataclass(frozen=True)
class SkillRequest:
    skill: str
    requester: AgentId
    text: str

    def __post_init__(self) -> None:
        validate_skill_name(self.skill)


@dataclass(frozen=True)
class SkillTransfer:
    descriptor: SkillDescriptor


@dataclass(frozen=True)
class TaskText:
    text: str


@dataclass(frozen=True)
class Ack:
    ref: str


@dataclass(frozen=True)
class ProtocolError:
    code: str
    detail: str = ""


Message = Union[SkillRequest, SkillTransfer, TaskText, Ack, ProtocolError]

_TAGS = {
    SkillRequest: "skill_request",
    SkillTransfer: "skill_transfer",
    TaskText: "task_text",
    Ack: "ack",
    ProtocolError: "protocol_error",
}


def _fields(message: Message) -> Dict[str, Any]:
    if isinstance(message, SkillRequest):
        return {
            "requester": {"address": message.requester.address, "id": message.requester.id},
            "skill": message.skill,
            "text": message.text,
        }
    if isinstance(message, SkillTransfer):
        d = message.descriptor
        return {
            "descriptor": {
                "body": d.body,
                "body_kind": d.body_kind.value,
                "description": d.description,
                "name": d.name,
            }
        }
    if isinstance(message, TaskText):
        return {"text": message.text}
    if isinstance(message, Ack):
        return {"ref": message.ref}
    if isinstance(message, ProtocolError):
        return {"code": message.code, "detail": message.detail}
    raise FrameEncodeError(f"not a protocol message: {type(message).__name__}")


def encode_payload(message: Message) -> bytes:
    fields = _fields(message)
    obj: Dict[str, Any] = {"type": _TAGS[type(message)]}
    obj.update(sorted(fields.items()))
    text = json.dumps(obj, ensure_ascii=False, separators=(",", ":"), sort_keys=False)
    return text.encode("utf-8")


def encode_frame(message: Message) -> bytes:
    payload = encode_payload(message)
    if len(payload) > MAX_FRAME_BYTES:
        raise FrameEncodeError(f"payload of {len(payload)} bytes exceeds the {MAX_FRAME_BYTES} byte cap")
    return HEADER.pack(len(payload)) + payload


# ----------------------------------------------------------------------
# Decoding
# ----------------------------------------------------------------------
def _require(obj: Dict[str, Any], key: str, kind: type = str) -> Any:
    if key not in obj:
        raise MissingFieldError(f"missing field '{key}'")
    value = obj[key]
    if not isinstance(value, kind):
        raise InvalidFieldError(f"field '{key}' must be {kind.__name__}")
    return value


def _build(tag: str, obj: Dict[str, Any]) -> Message:
    if tag == "skill_request":
        requester = _require(obj, "requester", dict)
        agent = AgentId.parse(_require(requester, "id"), _require(requester, "address"))
        return SkillRequest(skill=_require(obj, "skill"), requester=agent, text=_require(obj, "text"))
    if tag == "skill_transfer":
        d = _require(obj, "descriptor", dict)
        return SkillTransfer(
            SkillDescriptor(
                name=_require(d, "name"),
                description=_require(d, "description"),
                body_kind=BodyKind(_require(d, "body_kind")),
                body=_require(d, "body"),
            )
        )
    if tag == "task_text":
        return TaskText(text=_require(obj, "text"))
    if tag == "ack":
        return Ack(ref=_require(obj, "ref"))
    if tag == "protocol_error":
        return ProtocolError(code=_require(obj, "code"), detail=_require(obj, "detail"))
    raise UnknownMessageTypeError(f"unknown message type {tag!r}")


def decode_payload(payload: bytes) -> Message:
    try:
        text = bytes(payload).decode("utf-8")
    except UnicodeDecodeError as e:
        raise InvalidEncodingError(f"payload is not valid UTF-8: {e}") from None
    try:
        obj = json.loads(text)
    except (ValueError, RecursionError) as e:
        raise MalformedPayloadError(f"payload is not JSON: {e}") from None
    if not isinstance(obj, dict):
        raise MalformedPayloadError("payload must be a JSON object")
    tag = _require(obj, "type")
    try:
        return _build(tag, obj)
    except SkillFlowError as e:
        if isinstance(e, (MissingFieldError, InvalidFieldError, UnknownMessageTypeError)):
            raise
        raise InvalidFieldError(str(e)) from None
    except ValueError as e:
        raise InvalidFieldError(str(e)) from None


def read_length(header: bytes) -> int:
    if len(header) < HEADER.size:
        raise ShortReadError(f"need {HEADER.size} header bytes, got {len(header)}")
    (length,) = HEADER.unpack_from(header)
    if length > MAX_FRAME_BYTES:
        raise FrameTooLargeError(f"frame length {length} exceeds the {MAX_FRAME_BYTES} byte cap")
    return length


def decode_frame(data: bytes) -> Message:
    """Decode exactly one frame; trailing bytes are an error."""
    length = read_length(data)
    body = data[HEADER.size:]
    if len(body) < length:
        raise ShortReadError(f"frame announces {length} bytes, only {len(body)} available")
    if len(body) > length:
        raise MalformedPayloadError(f"{len(body) - length} trailing bytes after frame")
    return decode_payload(body)


class FrameDecoder:
    """Incremental decoder for one stream connection."""

    def __init__(self) -> None:
        self._buffer = bytearray()

    def feed(self, data: bytes) -> None:
        self._buffer.extend(data)

    def next_message(self) -> Optional[Message]:
        """
        Pop the next complete message, or None if more bytes are needed.

        A bad frame raises after being dropped from the buffer, so the
        stream stays aligned for the next frame. An oversize length is
        unrecoverable and clears the buffer.
        """
        if len(self._buffer) < HEADER.size:
            return None
        try:
            length = read_length(self._buffer)
        except FrameTooLargeError:
            self._buffer.clear()
            raise
        end = HEADER.size + length
        if len(self._buffer) < end:
            return None
        payload = bytes(self._buffer[HEADER.size:end])
        del self._buffer[:end]
        return decode_payload(payload)

    def messages(self) -> Iterator[Message]:
        while True:
            message = self.next_message()
            if message is None:
                return
            yield message

    @property
    def pending(self) -> int:
        return len(self._buffer)
