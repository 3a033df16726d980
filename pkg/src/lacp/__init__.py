"""Layered agent communication protocol.

Three layers with strict separation: a semantic grammar (PLAN/ACT/OBSERVE),
a signed transactional envelope with replay protection and two-phase
commit, and a binary frame transport. Ships a reference tool-server node,
a retrying client, and the benchmark/attack/fault-injection harness.
"""

from .client import ActStep, Client, PlanStep, RetryPolicy
from .envelope import (
    AgentIdentity,
    Envelope,
    EnvelopeClaims,
    Keystore,
    compact_decode,
    compact_encode,
    keygen,
    sign_envelope,
    verify_envelope,
)
from .framing import Frame, FrameDecoder, decode_frames, encode_frame
from .node import Node, NodeResponse, ToolRegistry, builtin_calculator
from .semantic import (
    MessageType,
    SemanticPayload,
    act,
    decode_payload,
    encode_payload,
    observe,
    plan,
    validate_payload,
)
from .transaction import (
    Coordinator,
    Participant,
    ReplayGuard,
    ReplayOutcome,
    TxnControlMessage,
)

__version__ = "0.1.0"

__all__ = [
    "ActStep", "AgentIdentity", "Client", "Coordinator", "Envelope",
    "EnvelopeClaims", "Frame", "FrameDecoder", "Keystore", "MessageType",
    "Node", "NodeResponse", "Participant", "PlanStep", "ReplayGuard",
    "ReplayOutcome", "RetryPolicy", "SemanticPayload", "ToolRegistry",
    "TxnControlMessage", "act", "builtin_calculator", "compact_decode",
    "compact_encode", "decode_frames", "decode_payload", "encode_frame",
    "encode_payload", "keygen", "observe", "plan", "sign_envelope",
    "validate_payload", "verify_envelope",
]
