"""Reference tool-server node.

The receive pipeline runs in a fixed order so that attacker-controlled
bytes can do nothing before they are authenticated:

    1. decode the compact envelope            -> 400 on malformed input
    2. verify the signature                   -> 403 on mismatch/unknown key
    3. replay check on the transaction id     -> 409 duplicate, 400 stale
    4. payload must be a valid ACT            -> 400 otherwise
    5. tool lookup                            -> 404 if absent
    6. deadline enforcement                   -> 504, status "timeout"
    7. execute and answer with a signed OBSERVE (200, status "ok")

Every response that can be correlated to a request is itself a signed
OBSERVE envelope carrying the numeric status code as an extension field,
so the status survives any transport. Responses for requests whose claims
cannot even be parsed are a bare ``status:<code>`` body instead.
"""

from __future__ import annotations

import logging
import threading
import time
from dataclasses import dataclass
from fractions import Fraction
from typing import Any, Callable, Mapping

from . import envelope as env
from . import semantic
from .errors import (
    DuplicateTool,
    LacpError,
    MalformedEnvelope,
    ReservedName,
    SignatureMismatch,
    UnknownKey,
)
from .framing import CLASS_RESPONSE, Frame
from .transaction import TXN_TOOL_PREFIX, ReplayGuard, ReplayOutcome
from .semantic import MessageType

log = logging.getLogger(__name__)

STATUS_OK = 200
STATUS_BAD_REQUEST = 400
STATUS_FORBIDDEN = 403
STATUS_NOT_FOUND = 404
STATUS_CONFLICT = 409
STATUS_TIMEOUT = 504

# handler(params, deadline) -> (status, output) or (status, output, metrics)
ToolHandler = Callable[[Mapping[str, Any], float | None], tuple]


class ToolRegistry:
    """Named tool handlers; "__txn.*" names are reserved for transaction
    control and cannot be registered."""

    def __init__(self):
        self._tools: dict[str, ToolHandler] = {}

    def register(self, name: str, handler: ToolHandler) -> None:
        if name.startswith(TXN_TOOL_PREFIX):
            raise ReservedName(name)
        if name in self._tools:
            raise DuplicateTool(name)
        self._tools[name] = handler

    def lookup(self, name: str) -> ToolHandler | None:
        return self._tools.get(name)

    def __contains__(self, name: str) -> bool:
        return name in self._tools


@dataclass
class NodeResponse:
    status_code: int
    envelope: env.Envelope | None
    claims: env.EnvelopeClaims | None = None

    def to_frame(self) -> Frame:
        if self.envelope is not None:
            body = env.compact_encode(self.envelope).encode("utf-8")
        else:
            body = f"status:{self.status_code}".encode("ascii")
        return Frame(frame_class=CLASS_RESPONSE, body=body)


@dataclass
class _RequestContext:
    sender: str | None = None
    intent_id: str | None = None
    transaction_id: str | None = None


class Node:
    """A tool server bound to one signing identity.

    ``verify_signatures`` and ``replay_protection`` exist solely so the
    attack harness can build negative-control nodes; production nodes
    keep both on.
    """

    def __init__(self, identity: env.AgentIdentity, keystore: env.Keystore,
                 registry: ToolRegistry | None = None,
                 guard: ReplayGuard | None = None,
                 clock: Callable[[], float] = time.time,
                 verify_signatures: bool = True,
                 replay_protection: bool = True):
        if not identity.can_sign:
            raise ValueError("node identity must include a private key")
        self.identity = identity
        self.keystore = keystore
        self.registry = registry if registry is not None else ToolRegistry()
        # explicit None check: an empty ReplayGuard is falsy via __len__
        self.guard = guard if guard is not None else ReplayGuard()
        self.clock = clock
        self.verify_signatures = verify_signatures
        self.replay_protection = replay_protection
        self.txn_participant_host = None  # optional, see txnsim/attach
        self._sequences: dict[str, int] = {}
        self._last_seen_seq: dict[str, int] = {}
        self._seq_lock = threading.Lock()

    # -- plumbing -------------------------------------------------------------

    def register_tool(self, name: str, handler: ToolHandler) -> None:
        self.registry.register(name, handler)

    def attach_txn_participant(self, host) -> None:
        """Route reserved "__txn.*" tool calls to a participant host."""
        self.txn_participant_host = host

    def frame_handler(self, frame: Frame) -> Frame:
        return self.handle_frame(frame).to_frame()

    def _next_sequence(self, recipient: str) -> int:
        with self._seq_lock:
            seq = self._sequences.get(recipient, 0)
            self._sequences[recipient] = seq + 1
            return seq

    def _note_sequence(self, sender: str, sequence: int) -> None:
        # gaps are informational only; ordering is not enforced
        with self._seq_lock:
            last = self._last_seen_seq.get(sender)
            self._last_seen_seq[sender] = sequence
        if last is not None and sequence != last + 1:
            log.info("sequence gap from %s: %d -> %d", sender, last, sequence)

    def _respond(self, status_code: int, context: _RequestContext,
                 output: Any, metrics: Mapping[str, float] | None = None,
                 obs_status: str | None = None) -> NodeResponse:
        if context.sender is None or context.intent_id is None:
            return NodeResponse(status_code=status_code, envelope=None)
        if obs_status is None:
            obs_status = {STATUS_OK: "ok", STATUS_TIMEOUT: "timeout"}.get(status_code, "error")
        payload = semantic.observe(intent_id=context.intent_id, status=obs_status,
                                   output=output, metrics=metrics,
                                   status_code=status_code)
        claims = env.EnvelopeClaims(
            sender=self.identity.agent_id,
            recipient=context.sender,
            transaction_id=env.new_transaction_id(),
            sequence=self._next_sequence(context.sender),
            timestamp=self.clock(),
            payload=payload,
        )
        signed = env.sign_envelope(claims, self.identity)
        return NodeResponse(status_code=status_code, envelope=signed, claims=claims)

    # -- the pipeline ----------------------------------------------------------

    def handle_frame(self, frame: Frame, now: float | None = None) -> NodeResponse:
        start = time.perf_counter()
        context = _RequestContext()
        response = self._pipeline(frame, context, now)
        log.info("request sender=%s txn=%s status=%d latency_us=%.0f",
                 context.sender, context.transaction_id, response.status_code,
                 (time.perf_counter() - start) * 1e6)
        return response

    def _pipeline(self, frame: Frame, context: _RequestContext,
                  now: float | None) -> NodeResponse:
        if now is None:
            now = self.clock()

        # 1. decode
        try:
            text = frame.body.decode("utf-8")
            received = env.compact_decode(text)
        except (UnicodeDecodeError, MalformedEnvelope) as exc:
            return self._respond(STATUS_BAD_REQUEST, context, f"malformed envelope: {exc}")

        # 2. verify before anything can touch shared state
        try:
            if self.verify_signatures:
                claims = env.verify_envelope(received, self.keystore)
            else:
                claims = env.decode_claims(received.claims_bytes)
        except (UnknownKey, SignatureMismatch) as exc:
            self._correlate_unverified(received, context)
            return self._respond(STATUS_FORBIDDEN, context, f"verification failed: {exc}")
        except MalformedEnvelope as exc:
            self._correlate_unverified(received, context)
            return self._respond(STATUS_BAD_REQUEST, context, f"malformed claims: {exc}")

        context.sender = claims.sender
        context.intent_id = claims.payload.intent_id
        context.transaction_id = claims.transaction_id
        self._note_sequence(claims.sender, claims.sequence)

        # 3. replay check
        if self.replay_protection:
            outcome = self.guard.check_and_record(claims.transaction_id,
                                                  claims.timestamp, now)
            if outcome is ReplayOutcome.DUPLICATE:
                return self._respond(STATUS_CONFLICT, context,
                                     f"duplicate transaction {claims.transaction_id}")
            if outcome is ReplayOutcome.STALE:
                return self._respond(STATUS_BAD_REQUEST, context,
                                     "timestamp outside freshness window")

        # 4. only ACT messages invoke tools
        payload = claims.payload
        if payload.type is not MessageType.ACT:
            return self._respond(STATUS_BAD_REQUEST, context,
                                 f"expected ACT, got {payload.type.value}")

        tool_call = payload.fields["tool_call"]
        params = payload.fields["params"]
        deadline = payload.fields.get("deadline")

        # 5. dispatch
        if tool_call.startswith(TXN_TOOL_PREFIX):
            if self.txn_participant_host is None:
                return self._respond(STATUS_NOT_FOUND, context,
                                     "no transaction participant attached")
            status, output = self.txn_participant_host.handle(claims)
            return self._respond(status, context, output)
        handler = self.registry.lookup(tool_call)
        if handler is None:
            return self._respond(STATUS_NOT_FOUND, context, f"unknown tool {tool_call!r}")

        # 6. deadline gate
        if deadline is not None and now > deadline:
            return self._respond(STATUS_TIMEOUT, context, "deadline exceeded",
                                 obs_status="timeout")

        # 7. execute
        try:
            result = handler(params, deadline)
        except Exception as exc:
            return self._respond(STATUS_BAD_REQUEST, context, f"tool failed: {exc}")
        status, output = result[0], result[1]
        metrics = result[2] if len(result) > 2 else None

        if deadline is not None and self.clock() > deadline:
            return self._respond(STATUS_TIMEOUT, context, "deadline exceeded",
                                 obs_status="timeout")
        if status == "ok":
            return self._respond(STATUS_OK, context, output, metrics)
        if status == "timeout":
            return self._respond(STATUS_TIMEOUT, context, output, metrics,
                                 obs_status="timeout")
        return self._respond(STATUS_BAD_REQUEST, context, output, metrics)

    def _correlate_unverified(self, received: env.Envelope,
                              context: _RequestContext) -> None:
        """Best-effort intent extraction so even a rejection can be answered
        with a correlated, signed OBSERVE. Claims here are untrusted."""
        try:
            claims = env.decode_claims(received.claims_bytes)
        except LacpError:
            return
        context.sender = claims.sender
        context.intent_id = claims.payload.intent_id
        context.transaction_id = claims.transaction_id


# --- the built-in calculator --------------------------------------------------

class _CalcError(ValueError):
    pass


class _Parser:
    """Recursive descent over integers, + - * / and parentheses, evaluated
    with exact rationals so outputs are machine-independent."""

    def __init__(self, text: str):
        # the displayed operators x and / have unicode forms; accept both
        normalized = (text.replace("×", "*").replace("÷", "/")
                      .replace("−", "-"))
        self.tokens = self._tokenize(normalized)
        self.pos = 0

    @staticmethod
    def _tokenize(text: str) -> list[str]:
        tokens: list[str] = []
        i = 0
        while i < len(text):
            ch = text[i]
            if ch.isspace():
                i += 1
            elif ch.isdigit():
                j = i
                while j < len(text) and text[j].isdigit():
                    j += 1
                tokens.append(text[i:j])
                i = j
            elif ch in "+-*/()":
                tokens.append(ch)
                i += 1
            else:
                raise _CalcError(f"unexpected character {ch!r}")
        return tokens

    def _peek(self) -> str | None:
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def _take(self) -> str:
        token = self._peek()
        if token is None:
            raise _CalcError("unexpected end of expression")
        self.pos += 1
        return token

    def parse(self) -> Fraction:
        value = self._expr()
        if self._peek() is not None:
            raise _CalcError(f"trailing input at {self._peek()!r}")
        return value

    def _expr(self) -> Fraction:
        value = self._term()
        while self._peek() in ("+", "-"):
            if self._take() == "+":
                value += self._term()
            else:
                value -= self._term()
        return value

    def _term(self) -> Fraction:
        value = self._factor()
        while self._peek() in ("*", "/"):
            op = self._take()
            rhs = self._factor()
            if op == "*":
                value *= rhs
            else:
                if rhs == 0:
                    raise _CalcError("division by zero")
                value /= rhs
        return value

    def _factor(self) -> Fraction:
        token = self._take()
        if token == "-":
            return -self._factor()
        if token == "(":
            value = self._expr()
            if self._take() != ")":
                raise _CalcError("unbalanced parentheses")
            return value
        if token.isdigit():
            return Fraction(int(token))
        raise _CalcError(f"unexpected token {token!r}")


def builtin_calculator(params: Mapping[str, Any], deadline: float | None = None) -> tuple:
    """Arbitrary-precision arithmetic tool; errors are reported in-band."""
    expression = params.get("expression")
    if not isinstance(expression, str) or not expression.strip():
        return ("error", "params.expression must be a non-empty string")
    try:
        value = _Parser(expression).parse()
    except _CalcError as exc:
        return ("error", str(exc))
    if value.denominator == 1:
        return ("ok", str(value.numerator))
    return ("ok", f"{value.numerator}/{value.denominator}")


def echo_tool(params: Mapping[str, Any], deadline: float | None = None) -> tuple:
    return ("ok", params.get("value", params))


def demo_transfer_tool(params: Mapping[str, Any], deadline: float | None = None) -> tuple:
    """Pretend financial transfer used by the attack demos; no real effect."""
    amount = params.get("amount")
    if not isinstance(amount, (int, float)) or isinstance(amount, bool) or amount < 0:
        return ("error", "params.amount must be a non-negative number")
    return ("ok", f"transferred {amount}")


def default_registry() -> ToolRegistry:
    registry = ToolRegistry()
    registry.register("calculator", builtin_calculator)
    registry.register("echo", echo_tool)
    registry.register("transfer", demo_transfer_tool)
    return registry
