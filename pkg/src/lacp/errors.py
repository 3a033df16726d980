"""Exception taxonomy shared across the protocol stack.

Node-facing failures are mapped to numeric status codes by the node
pipeline; everything here is a plain exception so library users can
catch at whatever granularity they need.
"""

from __future__ import annotations


class LacpError(Exception):
    """Base class for every error raised by this package."""


# --- semantic layer ---------------------------------------------------------

class UnknownType(LacpError):
    """Message type is not one of the core grammar types."""

    def __init__(self, type_name: object):
        super().__init__(f"unknown message type: {type_name!r}")
        self.type_name = type_name


class MissingField(LacpError):
    def __init__(self, name: str):
        super().__init__(f"missing mandatory field: {name}")
        self.name = name


class MalformedField(LacpError):
    def __init__(self, name: str, reason: str):
        super().__init__(f"malformed field {name}: {reason}")
        self.name = name
        self.reason = reason


class ParseError(LacpError):
    """Input bytes are not a well-formed serialized payload."""


# --- envelope layer ---------------------------------------------------------

class EntropyUnavailable(LacpError):
    """Key generation could not obtain randomness from the OS."""


class NoPrivateKey(LacpError):
    """Signing was requested with an identity that has no private key."""


class UnknownKey(LacpError):
    """The envelope's key id does not resolve in the local keystore."""

    def __init__(self, kid: str):
        super().__init__(f"unknown key id: {kid!r}")
        self.kid = kid


class SignatureMismatch(LacpError):
    """Signature does not verify over the received bytes (tampering)."""


class MalformedEnvelope(LacpError):
    """Envelope text or its claims cannot be decoded."""


# --- transport layer --------------------------------------------------------

class BadMagic(LacpError):
    """Stream does not start with the frame magic; fatal for the connection."""


class UnsupportedVersion(LacpError):
    def __init__(self, version: int):
        super().__init__(f"unsupported frame version: {version}")
        self.version = version


class BodyTooLarge(LacpError):
    def __init__(self, length: int, limit: int):
        super().__init__(f"frame body of {length} bytes exceeds the {limit} byte cap")
        self.length = length
        self.limit = limit


class TransportTimeout(LacpError):
    """No frame arrived within the receive deadline."""


class TransportClosed(LacpError):
    """Peer closed the connection or the transport was shut down."""


# --- transactions -----------------------------------------------------------

class InvalidTransition(LacpError):
    def __init__(self, state: object, event: object):
        super().__init__(f"event {event!r} is not legal in state {state!r}")
        self.state = state
        self.event = event


# --- node -------------------------------------------------------------------

class DuplicateTool(LacpError):
    def __init__(self, name: str):
        super().__init__(f"tool already registered: {name!r}")
        self.name = name


class ReservedName(LacpError):
    def __init__(self, name: str):
        super().__init__(f"tool name is reserved: {name!r}")
        self.name = name


# --- client -----------------------------------------------------------------

class Unreachable(LacpError):
    """All send attempts exhausted without any response."""


class ServerRejected(LacpError):
    def __init__(self, status_code: int, detail: str = ""):
        super().__init__(f"server rejected request with status {status_code}"
                         + (f": {detail}" if detail else ""))
        self.status_code = status_code
        self.detail = detail


class AlreadyProcessed(LacpError):
    """A retransmitted request hit the replay guard: the original attempt
    was applied but its response was lost. Callers should re-query state
    rather than treat the operation as failed."""


class ResponseVerificationFailed(LacpError):
    """The response envelope failed signature or correlation checks."""


# --- harness ----------------------------------------------------------------

class HarnessTransportFailure(LacpError):
    """Attack or benchmark target could not be reached."""


class ScenarioTooLarge(LacpError):
    """Benchmark scenario payload exceeds what the transport can frame."""
