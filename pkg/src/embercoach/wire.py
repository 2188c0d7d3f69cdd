"""Wire protocol: typed JSON messages between client and server.

Sixteen message types, seven client-to-server and nine server-to-client.
Each direction numbers its messages with its own monotonically increasing
seq, which is what reconnection resume keys on. parse/serialize round-trip
exactly; unknown types and missing fields fail with a coded WireError the
server answers without dropping the connection.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Any


class WireError(ValueError):
    def __init__(self, code: str, detail: str):
        super().__init__(f"{code}: {detail}")
        self.code = code
        self.detail = detail


class MessageType(str, Enum):
    # client -> server
    SESSION_START = "session.start"
    UTTERANCE_PUSH = "utterance.push"
    STAGE_ADVANCE = "stage.advance"
    AGENT_INVOKE = "agent.invoke"
    IMAGE_REQUEST = "image.request"
    INTERVIEW_ANSWER = "interview.answer"
    SESSION_END = "session.end"
    # server -> client
    ADVICE_PHASE = "advice.phase"
    ADVICE_REALTIME = "advice.realtime"
    STAGE_STATE = "stage.state"
    AGENT_REPLY = "agent.reply"
    IMAGE_READY = "image.ready"
    REPORT_READY = "report.ready"
    INTERVIEW_QUESTION = "interview.question"
    PROFILE_UPDATED = "profile.updated"
    ERROR = "error"


CLIENT_TYPES = frozenset(
    {
        MessageType.SESSION_START,
        MessageType.UTTERANCE_PUSH,
        MessageType.STAGE_ADVANCE,
        MessageType.AGENT_INVOKE,
        MessageType.IMAGE_REQUEST,
        MessageType.INTERVIEW_ANSWER,
        MessageType.SESSION_END,
    }
)

SERVER_TYPES = frozenset(set(MessageType) - CLIENT_TYPES)


@dataclass(frozen=True)
class WireMessage:
    type: MessageType
    session_id: str
    seq: int
    body: dict[str, Any] = field(default_factory=dict)


def _require(body: dict[str, Any], fields: tuple[str, ...], mtype: str) -> None:
    for name in fields:
        if name not in body:
            raise WireError("missing-field", f'{mtype} requires body field "{name}"')


def validate_body(mtype: MessageType, body: dict[str, Any]) -> None:
    """Structural per-type checks; raises WireError on the first problem."""
    t = mtype.value
    if mtype is MessageType.SESSION_START:
        if body.get("mode") == "interview":
            _require(body, ("child_id",), t)
        else:
            _require(body, ("scenario_id",), t)
    elif mtype is MessageType.UTTERANCE_PUSH:
        _require(body, ("speaker", "turn_index", "stage", "t_start", "t_end"), t)
        if "text" not in body and "audio" not in body:
            raise WireError("missing-field", f'{t} requires "text" or "audio"')
        if not isinstance(body["turn_index"], int) or isinstance(body["turn_index"], bool):
            raise WireError("malformed", f"{t}: turn_index must be an integer")
        for key in ("t_start", "t_end"):
            if not isinstance(body[key], (int, float)) or isinstance(body[key], bool):
                raise WireError("malformed", f"{t}: {key} must be a number")
    elif mtype is MessageType.INTERVIEW_ANSWER:
        _require(body, ("question_id", "text"), t)
    elif mtype in (
        MessageType.STAGE_ADVANCE,
        MessageType.AGENT_INVOKE,
        MessageType.IMAGE_REQUEST,
        MessageType.SESSION_END,
    ):
        at = body.get("at")
        if at is not None and (not isinstance(at, (int, float)) or isinstance(at, bool)):
            raise WireError("malformed", f"{t}: at must be a number")
    elif mtype in (MessageType.ADVICE_PHASE, MessageType.ADVICE_REALTIME):
        _require(body, ("advice",), t)
        if not isinstance(body["advice"], dict):
            raise WireError("malformed", f"{t}: advice must be an object")
    elif mtype is MessageType.STAGE_STATE:
        _require(body, ("nodes",), t)
        if not isinstance(body["nodes"], list):
            raise WireError("malformed", f"{t}: nodes must be a list")
    elif mtype is MessageType.AGENT_REPLY:
        _require(body, ("utterance",), t)
    elif mtype is MessageType.IMAGE_READY:
        _require(body, ("image",), t)
    elif mtype is MessageType.REPORT_READY:
        _require(body, ("report",), t)
    elif mtype is MessageType.PROFILE_UPDATED:
        _require(body, ("child_id", "version"), t)
    elif mtype is MessageType.INTERVIEW_QUESTION:
        if not body.get("done") and "question" not in body:
            raise WireError("missing-field", f'{t} requires "question" unless done')
    elif mtype is MessageType.ERROR:
        _require(body, ("code", "message"), t)


def parse_message(raw: str | bytes) -> WireMessage:
    """Parse and validate one wire frame."""
    try:
        doc = json.loads(raw)
    except json.JSONDecodeError as e:
        raise WireError("malformed", f"not valid JSON: {e.msg}") from e
    if not isinstance(doc, dict):
        raise WireError("malformed", "frame must be a JSON object")
    for name in ("type", "session_id", "seq"):
        if name not in doc:
            raise WireError("missing-field", f'frame requires "{name}"')
    try:
        mtype = MessageType(doc["type"])
    except ValueError:
        raise WireError("unknown-type", f"unknown message type {doc['type']!r}") from None
    if not isinstance(doc["seq"], int) or isinstance(doc["seq"], bool) or doc["seq"] < 0:
        raise WireError("malformed", "seq must be a non-negative integer")
    if not isinstance(doc["session_id"], str) or not doc["session_id"]:
        raise WireError("malformed", "session_id must be a non-empty string")
    body = doc.get("body", {})
    if not isinstance(body, dict):
        raise WireError("malformed", "body must be an object")
    validate_body(mtype, body)
    return WireMessage(type=mtype, session_id=doc["session_id"], seq=doc["seq"], body=body)


def serialize_message(msg: WireMessage) -> str:
    validate_body(msg.type, msg.body)
    return json.dumps(
        {
            "type": msg.type.value,
            "session_id": msg.session_id,
            "seq": msg.seq,
            "body": msg.body,
        },
        ensure_ascii=False,
        sort_keys=True,
        separators=(",", ": "),
    )
