"""Semantic layer: the narrow-waist message grammar.

Three core message types express intent:

    PLAN    - high-level intent      (intent_id, role, natural_language [, graph_ops])
    ACT     - external tool call     (intent_id, tool_call, params [, deadline, cost_cap])
    OBSERVE - result or status       (intent_id, status, output [, metrics])

Payload content beyond the mandatory fields is deliberately opaque: unknown
extra fields are preserved verbatim so richer schemas can ride on the core
grammar without renegotiation.

Serialization is canonical JSON: object keys sorted by UTF-8 byte order,
no insignificant whitespace, UTF-8 text. Two structurally equal payloads
always produce byte-identical encodings, which is what makes detached
signing and golden tests possible.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Mapping

from .errors import MalformedField, MissingField, ParseError, UnknownType

MAX_INTENT_ID_BYTES = 256

OBSERVE_STATUSES = ("ok", "error", "timeout")

# mandatory field names per type, in reporting order
MANDATORY_FIELDS = {
    "PLAN": ("intent_id", "role", "natural_language"),
    "ACT": ("intent_id", "tool_call", "params"),
    "OBSERVE": ("intent_id", "status", "output"),
}

OPTIONAL_FIELDS = {
    "PLAN": ("graph_ops",),
    "ACT": ("deadline", "cost_cap"),
    "OBSERVE": ("metrics",),
}


class MessageType(str, Enum):
    PLAN = "PLAN"
    ACT = "ACT"
    OBSERVE = "OBSERVE"


@dataclass(frozen=True)
class SemanticPayload:
    """A validated message body.

    ``fields`` holds every field except ``type``, optionals and extras
    included. Treat instances as immutable values.
    """

    type: MessageType
    fields: Mapping[str, Any] = field(default_factory=dict)

    @property
    def intent_id(self) -> str:
        return self.fields["intent_id"]

    def get(self, name: str, default: Any = None) -> Any:
        return self.fields.get(name, default)

    def to_dict(self) -> dict[str, Any]:
        return {"type": self.type.value, **self.fields}


def canonical_bytes(value: Any) -> bytes:
    """Deterministic JSON encoding: sorted keys, compact separators, UTF-8.

    Key order is sorted by Unicode code point, which for valid text equals
    UTF-8 byte order. NaN and infinity are unrepresentable.
    """
    try:
        text = json.dumps(value, sort_keys=True, separators=(",", ":"),
                          ensure_ascii=False, allow_nan=False)
    except (TypeError, ValueError) as exc:
        raise MalformedField("payload", f"not canonically serializable: {exc}") from exc
    return text.encode("utf-8")


def _is_number(value: Any) -> bool:
    # bool is an int subclass but is not a number in this grammar
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def _require_nonempty_str(fields: Mapping[str, Any], name: str) -> None:
    value = fields[name]
    if not isinstance(value, str):
        raise MalformedField(name, f"expected string, got {type(value).__name__}")
    if not value:
        raise MalformedField(name, "must be non-empty")


def validate_payload(raw: Any) -> SemanticPayload:
    """Check a parsed structured value against the grammar.

    Returns a typed payload iff all mandatory fields for the declared type
    are present and well-formed. Optional and unknown fields pass through
    verbatim. Raises UnknownType, MissingField or MalformedField.
    """
    if not isinstance(raw, Mapping):
        raise ParseError(f"payload must be an object, got {type(raw).__name__}")
    if "type" not in raw:
        raise MissingField("type")
    type_name = raw["type"]
    if not isinstance(type_name, str) or type_name not in MANDATORY_FIELDS:
        raise UnknownType(type_name)

    fields = {k: v for k, v in raw.items() if k != "type"}

    for name in MANDATORY_FIELDS[type_name]:
        if name not in fields:
            raise MissingField(name)

    _require_nonempty_str(fields, "intent_id")
    if len(fields["intent_id"].encode("utf-8")) > MAX_INTENT_ID_BYTES:
        raise MalformedField("intent_id", f"exceeds {MAX_INTENT_ID_BYTES} bytes")

    if type_name == "PLAN":
        _require_nonempty_str(fields, "role")
        _require_nonempty_str(fields, "natural_language")
        # graph_ops is opaque: presence is all that matters

    elif type_name == "ACT":
        _require_nonempty_str(fields, "tool_call")
        if not isinstance(fields["params"], Mapping):
            raise MalformedField("params", "expected an object")
        if "deadline" in fields:
            deadline = fields["deadline"]
            if not _is_number(deadline) or not math.isfinite(deadline) or deadline < 0:
                raise MalformedField("deadline", "expected a finite non-negative number")
        if "cost_cap" in fields:
            cost_cap = fields["cost_cap"]
            if not _is_number(cost_cap) or not math.isfinite(cost_cap) or cost_cap < 0:
                raise MalformedField("cost_cap", "expected a finite non-negative number")

    else:  # OBSERVE
        _require_nonempty_str(fields, "status")
        if fields["status"] not in OBSERVE_STATUSES:
            raise MalformedField("status", f"expected one of {OBSERVE_STATUSES}")
        # output is opaque and passes through unvalidated
        if "metrics" in fields:
            metrics = fields["metrics"]
            if not isinstance(metrics, Mapping):
                raise MalformedField("metrics", "expected an object")
            for key, value in metrics.items():
                if not isinstance(key, str) or not _is_number(value):
                    raise MalformedField("metrics", "expected string keys and numeric values")

    return SemanticPayload(type=MessageType(type_name), fields=fields)


def encode_payload(payload: SemanticPayload) -> bytes:
    """Canonical byte encoding of a valid payload.

    Re-encoding the decode of any output yields identical bytes.
    """
    return canonical_bytes(payload.to_dict())


def decode_payload(data: bytes) -> SemanticPayload:
    """Parse canonical (or any) JSON bytes and validate against the grammar."""
    try:
        raw = json.loads(data.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ParseError(f"not valid UTF-8 JSON: {exc}") from exc
    if not isinstance(raw, Mapping):
        raise ParseError(f"payload must be an object, got {type(raw).__name__}")
    return validate_payload(raw)


def plan(intent_id: str, role: str, natural_language: str,
         graph_ops: Any = None, **extra: Any) -> SemanticPayload:
    fields: dict[str, Any] = {"intent_id": intent_id, "role": role,
                              "natural_language": natural_language}
    if graph_ops is not None:
        fields["graph_ops"] = graph_ops
    fields.update(extra)
    return validate_payload({"type": "PLAN", **fields})


def act(intent_id: str, tool_call: str, params: Mapping[str, Any],
        deadline: float | None = None, cost_cap: float | None = None,
        **extra: Any) -> SemanticPayload:
    fields: dict[str, Any] = {"intent_id": intent_id, "tool_call": tool_call,
                              "params": dict(params)}
    if deadline is not None:
        fields["deadline"] = deadline
    if cost_cap is not None:
        fields["cost_cap"] = cost_cap
    fields.update(extra)
    return validate_payload({"type": "ACT", **fields})


def observe(intent_id: str, status: str, output: Any,
            metrics: Mapping[str, float] | None = None, **extra: Any) -> SemanticPayload:
    fields: dict[str, Any] = {"intent_id": intent_id, "status": status, "output": output}
    if metrics is not None:
        fields["metrics"] = dict(metrics)
    fields.update(extra)
    return validate_payload({"type": "OBSERVE", **fields})
