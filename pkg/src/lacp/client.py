"""Client: builds signed PLAN/ACT envelopes, verifies signed OBSERVE
responses, and runs scripted plan-act-observe loops.

Retries are idempotent by construction: a timed-out attempt retransmits
the byte-identical envelope, so the server's replay guard guarantees at
most one application. A 409 that follows a timeout therefore means "the
first copy was applied and its response lost" and is surfaced as
AlreadyProcessed rather than an error response.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Any, Callable, Mapping

from . import envelope as env
from .errors import (
    AlreadyProcessed,
    LacpError,
    ResponseVerificationFailed,
    ServerRejected,
    TransportClosed,
    TransportTimeout,
    Unreachable,
)
from .framing import CLASS_REQUEST, Frame
from .semantic import MessageType, SemanticPayload, act, plan


@dataclass(frozen=True)
class RetryPolicy:
    max_attempts: int = 3
    base_backoff: float = 0.1
    per_attempt_timeout: float = 1.0
    backoff_factor: float = 2.0

    def __post_init__(self):
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be >= 1")

    def backoff_before(self, attempt: int) -> float:
        """Sleep before attempt N (attempts count from 1; no sleep before the first)."""
        if attempt <= 1:
            return 0.0
        return self.base_backoff * self.backoff_factor ** (attempt - 2)


@dataclass
class PlanStep:
    role: str
    text: str
    graph_ops: Any = None


@dataclass
class ActStep:
    tool_call: str
    params: Mapping[str, Any]
    deadline: float | None = None


@dataclass
class TranscriptEntry:
    kind: str                      # "plan" or "observe"
    payload: SemanticPayload
    claims: env.EnvelopeClaims
    envelope: env.Envelope

    @property
    def output(self) -> Any:
        return self.payload.get("output")


class Client:
    """Single-owner protocol client bound to one identity and one peer."""

    def __init__(self, identity: env.AgentIdentity, keystore: env.Keystore,
                 server_id: str, transport,
                 clock: Callable[[], float] = time.time,
                 sleep: Callable[[float], None] = time.sleep):
        if not identity.can_sign:
            raise ValueError("client identity must include a private key")
        if server_id not in keystore:
            raise ValueError(f"server {server_id!r} not in keystore")
        self.identity = identity
        self.keystore = keystore
        self.server_id = server_id
        self.transport = transport
        self.clock = clock
        self.sleep = sleep
        self._sequence = 0

    # -- envelope construction ---------------------------------------------------

    def sign(self, payload: SemanticPayload) -> tuple[env.EnvelopeClaims, env.Envelope]:
        seq = self._sequence
        self._sequence += 1
        claims = env.EnvelopeClaims(
            sender=self.identity.agent_id,
            recipient=self.server_id,
            transaction_id=env.new_transaction_id(),
            sequence=seq,
            timestamp=self.clock(),
            payload=payload,
        )
        return claims, env.sign_envelope(claims, self.identity)

    # -- response handling ---------------------------------------------------------

    def _parse_response(self, frame: Frame,
                        intent_id: str) -> tuple[env.EnvelopeClaims, env.Envelope]:
        body = frame.body
        if body.startswith(b"status:"):
            # bare status line: the node could not correlate the request
            raise ServerRejected(int(body[7:]), "request could not be decoded")
        try:
            received = env.compact_decode(body.decode("utf-8"))
            claims = env.verify_envelope(received, self.keystore)
        except (LacpError, UnicodeDecodeError) as exc:
            raise ResponseVerificationFailed(str(exc)) from exc
        if claims.sender != self.server_id:
            raise ResponseVerificationFailed(
                f"response signed by {claims.sender!r}, expected {self.server_id!r}")
        payload = claims.payload
        if payload.type is not MessageType.OBSERVE:
            raise ResponseVerificationFailed(f"expected OBSERVE, got {payload.type.value}")
        if payload.intent_id != intent_id:
            raise ResponseVerificationFailed(
                f"response intent {payload.intent_id!r} does not match {intent_id!r}")
        return claims, received

    @staticmethod
    def _status_code(claims: env.EnvelopeClaims) -> int:
        code = claims.payload.get("status_code")
        if isinstance(code, int):
            return code
        # responses from nodes that omit the extension: infer from status
        return 200 if claims.payload.get("status") == "ok" else 400

    # -- operations -----------------------------------------------------------------

    def send_act(self, tool_call: str, params: Mapping[str, Any],
                 policy: RetryPolicy | None = None,
                 deadline: float | None = None,
                 intent_id: str | None = None) -> env.EnvelopeClaims:
        """Send one signed ACT and return the verified OBSERVE claims.

        Timeouts retransmit the identical envelope with exponential
        backoff; definitive rejections are raised immediately.
        """
        claims, _ = self._send_act_full(tool_call, params, policy, deadline, intent_id)
        return claims

    def _send_act_full(self, tool_call: str, params: Mapping[str, Any],
                       policy: RetryPolicy | None = None,
                       deadline: float | None = None,
                       intent_id: str | None = None
                       ) -> tuple[env.EnvelopeClaims, env.Envelope]:
        policy = policy or RetryPolicy()
        intent_id = intent_id or env.new_transaction_id()
        payload = act(intent_id=intent_id, tool_call=tool_call, params=params,
                      deadline=deadline)
        _, signed = self.sign(payload)
        frame = Frame(frame_class=CLASS_REQUEST,
                      body=env.compact_encode(signed).encode("utf-8"))

        timed_out_before = False
        for attempt in range(1, policy.max_attempts + 1):
            backoff = policy.backoff_before(attempt)
            if backoff:
                self.sleep(backoff)
            try:
                self.transport.send(frame)
                response = self.transport.receive(timeout=policy.per_attempt_timeout)
            except (TransportTimeout, TransportClosed):
                timed_out_before = True
                continue
            claims, received = self._parse_response(response, intent_id)
            code = self._status_code(claims)
            if code == 200:
                return claims, received
            if code == 409 and timed_out_before:
                raise AlreadyProcessed(
                    f"transaction applied by an earlier attempt; server said: "
                    f"{claims.payload.get('output')!r}")
            raise ServerRejected(code, str(claims.payload.get("output")))
        raise Unreachable(f"no response after {policy.max_attempts} attempts")

    def run_scripted_agent(self, script: list[PlanStep | ActStep],
                           policy: RetryPolicy | None = None) -> list[TranscriptEntry]:
        """Execute a scripted reason-act loop.

        PLAN steps are signed and recorded in the transcript; the node
        only executes ACT, so plans document intent locally. Each ACT's
        verified OBSERVE becomes the observation for the next step. The
        script aborts on the first failure.
        """
        transcript: list[TranscriptEntry] = []
        for step in script:
            if isinstance(step, PlanStep):
                payload = plan(intent_id=env.new_transaction_id(), role=step.role,
                               natural_language=step.text, graph_ops=step.graph_ops)
                claims, signed = self.sign(payload)
                transcript.append(TranscriptEntry("plan", payload, claims, signed))
            elif isinstance(step, ActStep):
                claims, received = self._send_act_full(step.tool_call, step.params,
                                                       policy=policy,
                                                       deadline=step.deadline)
                transcript.append(TranscriptEntry("observe", claims.payload, claims,
                                                  received))
            else:
                raise TypeError(f"unsupported script step: {step!r}")
        return transcript
