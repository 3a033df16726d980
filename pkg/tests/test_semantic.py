from __future__ import annotations

import json

import pytest
from hypothesis import given, settings, strategies as st

from lacp import semantic
from lacp.errors import MalformedField, MissingField, ParseError, UnknownType
from lacp.semantic import (
    MANDATORY_FIELDS,
    MessageType,
    act,
    decode_payload,
    encode_payload,
    observe,
    plan,
    validate_payload,
)


# --- an independent serializer used as the canonical-bytes oracle -------------
# Deliberately written from the format rules alone, not shared with the
# implementation. Restricted to the clean-ASCII values the fixtures use.

def oracle_serialize(value) -> str:
    if value is None:
        return "null"
    if value is True:
        return "true"
    if value is False:
        return "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, str):
        assert all(ch >= " " and ch not in '"\\' for ch in value), "oracle fixture only"
        return '"' + value + '"'
    if isinstance(value, dict):
        keys = sorted(value, key=lambda k: k.encode("utf-8"))
        return "{" + ",".join(oracle_serialize(k) + ":" + oracle_serialize(value[k])
                              for k in keys) + "}"
    if isinstance(value, list):
        return "[" + ",".join(oracle_serialize(v) for v in value) + "]"
    raise AssertionError(f"oracle does not cover {type(value)}")


VALID_EXAMPLES = {
    "PLAN": {"type": "PLAN", "intent_id": "i1", "role": "planner",
             "natural_language": "move arm"},
    "ACT": {"type": "ACT", "intent_id": "i1", "tool_call": "calculator",
            "params": {"expression": "15*7"}},
    "OBSERVE": {"type": "OBSERVE", "intent_id": "i1", "status": "ok",
                "output": "105", "metrics": {"latency_ms": 3}},
}


class TestValidate:
    def test_plan_mandatory_fields(self):
        payload = validate_payload(VALID_EXAMPLES["PLAN"])
        assert payload.type is MessageType.PLAN
        assert payload.intent_id == "i1"

    def test_act_missing_tool_call(self):
        with pytest.raises(MissingField) as exc:
            validate_payload({"type": "ACT", "intent_id": "i1", "params": {}})
        assert exc.value.name == "tool_call"

    def test_observe_with_metrics(self):
        payload = validate_payload(VALID_EXAMPLES["OBSERVE"])
        assert payload.type is MessageType.OBSERVE
        assert payload.fields["metrics"] == {"latency_ms": 3}

    def test_unknown_type_rejected(self):
        with pytest.raises(UnknownType):
            validate_payload({"type": "NUDGE", "intent_id": "i1"})

    def test_type_must_be_string(self):
        with pytest.raises(UnknownType):
            validate_payload({"type": 3, "intent_id": "i1"})

    def test_missing_type(self):
        with pytest.raises(MissingField) as exc:
            validate_payload({"intent_id": "i1"})
        assert exc.value.name == "type"

    @pytest.mark.parametrize("type_name", sorted(MANDATORY_FIELDS))
    def test_every_mandatory_deletion_is_reported_by_name(self, type_name):
        base = VALID_EXAMPLES[type_name]
        for name in MANDATORY_FIELDS[type_name]:
            broken = {k: v for k, v in base.items() if k != name}
            with pytest.raises(MissingField) as exc:
                validate_payload(broken)
            assert exc.value.name == name

    def test_intent_id_empty(self):
        with pytest.raises(MalformedField):
            validate_payload({"type": "PLAN", "intent_id": "", "role": "r",
                              "natural_language": "x"})

    def test_intent_id_byte_cap(self):
        ok = dict(VALID_EXAMPLES["PLAN"], intent_id="x" * 256)
        assert validate_payload(ok).intent_id == "x" * 256
        # multibyte characters count in bytes, not code points
        too_long = dict(VALID_EXAMPLES["PLAN"], intent_id="é" * 129)
        with pytest.raises(MalformedField) as exc:
            validate_payload(too_long)
        assert exc.value.name == "intent_id"

    @pytest.mark.parametrize("deadline", [-1, float("nan"), float("inf"), True, "soon"])
    def test_bad_deadline(self, deadline):
        raw = dict(VALID_EXAMPLES["ACT"], deadline=deadline)
        with pytest.raises(MalformedField) as exc:
            validate_payload(raw)
        assert exc.value.name == "deadline"

    def test_deadline_zero_is_fine(self):
        assert validate_payload(dict(VALID_EXAMPLES["ACT"], deadline=0)).get("deadline") == 0

    def test_bad_cost_cap(self):
        with pytest.raises(MalformedField):
            validate_payload(dict(VALID_EXAMPLES["ACT"], cost_cap=-0.5))

    def test_params_must_be_object(self):
        with pytest.raises(MalformedField):
            validate_payload(dict(VALID_EXAMPLES["ACT"], params=[1, 2]))

    @pytest.mark.parametrize("status", ["OK", "done", "", 1])
    def test_observe_status_enum(self, status):
        raw = dict(VALID_EXAMPLES["OBSERVE"], status=status)
        with pytest.raises(MalformedField):
            validate_payload(raw)

    def test_observe_output_is_opaque(self):
        for output in [None, "", 0, {"nested": [1, 2]}, False]:
            raw = dict(VALID_EXAMPLES["OBSERVE"], output=output)
            assert validate_payload(raw).get("output") == output

    def test_metrics_values_must_be_numeric(self):
        with pytest.raises(MalformedField):
            validate_payload(dict(VALID_EXAMPLES["OBSERVE"], metrics={"n": "3"}))

    def test_unknown_extra_fields_preserved(self):
        raw = dict(VALID_EXAMPLES["ACT"], priority=7, trace={"hop": 1})
        payload = validate_payload(raw)
        assert payload.fields["priority"] == 7
        assert payload.fields["trace"] == {"hop": 1}


class TestCanonicalEncoding:
    def test_key_order_is_sorted(self):
        payload = plan(intent_id="a", role="r", natural_language="x")
        data = encode_payload(payload)
        assert data == b'{"intent_id":"a","natural_language":"x","role":"r","type":"PLAN"}'

    def test_empty_params_against_independent_serializer(self):
        payload = act(intent_id="a", tool_call="e", params={})
        expected = oracle_serialize(payload.to_dict()).encode("utf-8")
        data = encode_payload(payload)
        assert data == expected
        assert data.count(b'"params":{}') == 1

    def test_structured_value_against_independent_serializer(self):
        payload = observe(intent_id="zz", status="ok",
                          output={"rows": [1, 2, 3], "b": {"a": None}},
                          metrics={"latency_ms": 3})
        assert encode_payload(payload) == oracle_serialize(payload.to_dict()).encode()

    def test_reencode_of_decode_is_identical(self):
        payload = act(intent_id="i", tool_call="t", params={"k": [1, {"z": "y"}]},
                      cost_cap=2.5)
        data = encode_payload(payload)
        assert encode_payload(decode_payload(data)) == data

    def test_unicode_round_trip(self):
        payload = plan(intent_id="über-1", role="rôle",
                       natural_language="move → arm \U0001f916")
        decoded = decode_payload(encode_payload(payload))
        assert decoded == payload

    def test_non_serializable_value(self):
        payload = observe(intent_id="i", status="ok", output=object())
        with pytest.raises(MalformedField):
            encode_payload(payload)


class TestDecode:
    def test_truncated_bytes(self):
        data = encode_payload(plan(intent_id="a", role="r", natural_language="x"))
        with pytest.raises(ParseError):
            decode_payload(data[:-3])

    def test_not_utf8(self):
        with pytest.raises(ParseError):
            decode_payload(b"\xff\xfe{}")

    def test_top_level_not_object(self):
        with pytest.raises(ParseError):
            decode_payload(b'[1,2]')

    def test_unknown_type_after_parse(self):
        with pytest.raises(UnknownType):
            decode_payload(b'{"type":"NUDGE","intent_id":"i1"}')


# --- property tests -----------------------------------------------------------

_scalar = st.one_of(st.none(), st.booleans(), st.integers(-10**9, 10**9),
                    st.text(max_size=20))
_structured = st.recursive(
    _scalar,
    lambda children: st.one_of(st.lists(children, max_size=4),
                               st.dictionaries(st.text(max_size=8), children, max_size=4)),
    max_leaves=12)
_identifier = st.text(min_size=1, max_size=32).filter(lambda s: len(s.encode()) <= 256)
_number = st.one_of(st.integers(0, 10**6),
                    st.floats(min_value=0, max_value=1e9, allow_nan=False))


@st.composite
def payloads(draw):
    kind = draw(st.sampled_from(["PLAN", "ACT", "OBSERVE"]))
    raw = {"type": kind, "intent_id": draw(_identifier)}
    if kind == "PLAN":
        raw["role"] = draw(_identifier)
        raw["natural_language"] = draw(_identifier)
        if draw(st.booleans()):
            raw["graph_ops"] = draw(_structured)
    elif kind == "ACT":
        raw["tool_call"] = draw(_identifier)
        raw["params"] = draw(st.dictionaries(st.text(max_size=8), _structured, max_size=4))
        if draw(st.booleans()):
            raw["deadline"] = draw(_number)
        if draw(st.booleans()):
            raw["cost_cap"] = draw(_number)
    else:
        raw["status"] = draw(st.sampled_from(["ok", "error", "timeout"]))
        raw["output"] = draw(_structured)
        if draw(st.booleans()):
            raw["metrics"] = draw(st.dictionaries(st.text(min_size=1, max_size=8),
                                                  _number, max_size=4))
    if draw(st.booleans()):
        raw["x_extra"] = draw(_structured)
    return validate_payload(raw)


@given(payloads())
@settings(max_examples=300)
def test_round_trip_property(payload):
    assert decode_payload(encode_payload(payload)) == payload


@given(payloads())
@settings(max_examples=200)
def test_equal_payloads_encode_identically(payload):
    clone = validate_payload(json.loads(encode_payload(payload).decode()))
    assert encode_payload(clone) == encode_payload(payload)


@given(payloads())
@settings(max_examples=200)
def test_removing_any_mandatory_field_is_missing_field(payload):
    raw = payload.to_dict()
    for name in MANDATORY_FIELDS[payload.type.value]:
        broken = {k: v for k, v in raw.items() if k != name}
        with pytest.raises(MissingField) as exc:
            validate_payload(broken)
        assert exc.value.name == name
