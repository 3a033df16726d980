"""Transactional layer: signed envelopes in a JWS-style compact encoding.

An envelope wraps a semantic payload with addressing claims and an ECDSA
P-256 (ES256) signature:

    base64url(header) "." base64url(claims_bytes) "." base64url(signature)

The signature covers the ASCII bytes of the first two segments. Verification
always operates on the received claims bytes verbatim, never on a
re-serialization: only the signer needs deterministic encoding, which keeps
cross-implementation verification free of canonical-JSON pitfalls.

Claims carried around the payload: sender, recipient, transaction_id
(128-bit, for idempotency), per-(sender,recipient) sequence number and an
epoch-seconds timestamp.
"""

from __future__ import annotations

import base64
import binascii
import json
import math
import re
import uuid
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Any, Iterable, Mapping

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives import hashes, serialization
from cryptography.hazmat.primitives.asymmetric import ec
from cryptography.hazmat.primitives.asymmetric.utils import (
    decode_dss_signature,
    encode_dss_signature,
)

from .errors import (
    EntropyUnavailable,
    MalformedEnvelope,
    NoPrivateKey,
    SignatureMismatch,
    UnknownKey,
)
from .semantic import SemanticPayload, canonical_bytes, validate_payload

ALGORITHM = "ES256"
CURVE = ec.SECP256R1()
SIGNATURE_BYTES = 64  # raw r||s, 32 bytes each

_CLAIM_KEYS = ("sender", "recipient", "transaction_id", "sequence", "timestamp", "payload")

# lowercase canonical UUID or bare 128-bit hex
_TXN_ID_RE = re.compile(
    r"^(?:[0-9a-f]{8}-[0-9a-f]{4}-[0-9a-f]{4}-[0-9a-f]{4}-[0-9a-f]{12}|[0-9a-f]{32})$"
)


def b64url_encode(data: bytes) -> str:
    return base64.urlsafe_b64encode(data).rstrip(b"=").decode("ascii")


def b64url_decode(text: str) -> bytes:
    if not re.fullmatch(r"[A-Za-z0-9_-]*", text):
        raise MalformedEnvelope("segment contains characters outside the base64url alphabet")
    pad = "=" * (-len(text) % 4)
    try:
        return base64.urlsafe_b64decode(text + pad)
    except (binascii.Error, ValueError) as exc:
        raise MalformedEnvelope(f"bad base64url segment: {exc}") from exc


def new_transaction_id() -> str:
    return str(uuid.uuid4())


@dataclass
class AgentIdentity:
    """A named P-256 keypair; the private half is present only locally."""

    agent_id: str
    public_key: ec.EllipticCurvePublicKey
    private_key: ec.EllipticCurvePrivateKey | None = None

    @property
    def can_sign(self) -> bool:
        return self.private_key is not None

    def public_point_hex(self) -> str:
        """Uncompressed SEC1 point as lowercase hex (the keystore format)."""
        return self.public_key.public_bytes(
            serialization.Encoding.X962,
            serialization.PublicFormat.UncompressedPoint,
        ).hex()

    def private_scalar_hex(self) -> str:
        if self.private_key is None:
            raise NoPrivateKey(f"identity {self.agent_id!r} has no private key")
        return format(self.private_key.private_numbers().private_value, "064x")


def keygen(agent_id: str) -> AgentIdentity:
    """Generate a fresh P-256 identity."""
    try:
        private = ec.generate_private_key(CURVE)
    except Exception as exc:  # pragma: no cover - OS entropy failure
        raise EntropyUnavailable(str(exc)) from exc
    return AgentIdentity(agent_id=agent_id, public_key=private.public_key(),
                         private_key=private)


def _public_key_from_hex(text: str) -> ec.EllipticCurvePublicKey:
    try:
        raw = bytes.fromhex(text)
    except ValueError as exc:
        raise MalformedEnvelope(f"public key is not hex: {exc}") from exc
    # uncompressed SEC1 point (0x04 || X || Y) or DER SubjectPublicKeyInfo
    if len(raw) == 65 and raw[0] == 0x04:
        return ec.EllipticCurvePublicKey.from_encoded_point(CURVE, raw)
    key = serialization.load_der_public_key(raw)
    if not isinstance(key, ec.EllipticCurvePublicKey):
        raise MalformedEnvelope("public key is not an EC key")
    return key


def _private_key_from_hex(text: str) -> ec.EllipticCurvePrivateKey:
    raw = bytes.fromhex(text)
    if len(raw) != 32:
        raise MalformedEnvelope(f"private key must be a 32-byte scalar, got {len(raw)} bytes")
    return ec.derive_private_key(int.from_bytes(raw, "big"), CURVE)


class Keystore:
    """agent_id -> identity map; read-mostly, loaded once at startup."""

    def __init__(self, identities: Iterable[AgentIdentity] = ()):
        self._by_id: dict[str, AgentIdentity] = {}
        for identity in identities:
            self.add(identity)

    def add(self, identity: AgentIdentity) -> None:
        if identity.agent_id in self._by_id:
            raise ValueError(f"duplicate agent_id in keystore: {identity.agent_id!r}")
        self._by_id[identity.agent_id] = identity

    def get(self, agent_id: str) -> AgentIdentity | None:
        return self._by_id.get(agent_id)

    def __contains__(self, agent_id: str) -> bool:
        return agent_id in self._by_id

    def __iter__(self):
        return iter(self._by_id.values())

    def __len__(self) -> int:
        return len(self._by_id)

    def to_dict(self, include_private: bool = True) -> dict[str, dict[str, str]]:
        out: dict[str, dict[str, str]] = {}
        for agent_id, identity in sorted(self._by_id.items()):
            entry = {"public_key": identity.public_point_hex()}
            if include_private and identity.can_sign:
                entry["private_key"] = identity.private_scalar_hex()
            out[agent_id] = entry
        return out

    def save(self, path: str, include_private: bool = True) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(include_private), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path: str) -> "Keystore":
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
        if not isinstance(raw, dict):
            raise ValueError(f"keystore {path} must be a JSON object")
        store = cls()
        for agent_id, entry in raw.items():
            public = _public_key_from_hex(entry["public_key"])
            private = None
            if entry.get("private_key"):
                private = _private_key_from_hex(entry["private_key"])
            store.add(AgentIdentity(agent_id=agent_id, public_key=public,
                                    private_key=private))
        return store


@dataclass(frozen=True)
class EnvelopeClaims:
    sender: str
    recipient: str
    transaction_id: str
    sequence: int
    timestamp: float
    payload: SemanticPayload
    extras: Mapping[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {
            "sender": self.sender,
            "recipient": self.recipient,
            "transaction_id": self.transaction_id,
            "sequence": self.sequence,
            "timestamp": self.timestamp,
            "payload": self.payload.to_dict(),
            **self.extras,
        }


def encode_claims(claims: EnvelopeClaims) -> bytes:
    """Deterministic claims encoding used at signing time."""
    return canonical_bytes(claims.to_dict())


def decode_claims(data: bytes) -> EnvelopeClaims:
    try:
        raw = json.loads(data.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise MalformedEnvelope(f"claims are not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise MalformedEnvelope("claims must be a JSON object")
    for key in _CLAIM_KEYS:
        if key not in raw:
            raise MalformedEnvelope(f"claims missing {key!r}")

    sender, recipient = raw["sender"], raw["recipient"]
    if not isinstance(sender, str) or not sender:
        raise MalformedEnvelope("sender must be a non-empty string")
    if not isinstance(recipient, str) or not recipient:
        raise MalformedEnvelope("recipient must be a non-empty string")

    txn_id = raw["transaction_id"]
    if not isinstance(txn_id, str) or not _TXN_ID_RE.fullmatch(txn_id):
        raise MalformedEnvelope(f"transaction_id {txn_id!r} is not a lowercase UUID or 128-bit hex")

    sequence = raw["sequence"]
    if isinstance(sequence, bool) or not isinstance(sequence, int) or sequence < 0:
        raise MalformedEnvelope("sequence must be a non-negative integer")

    timestamp = raw["timestamp"]
    if isinstance(timestamp, bool) or not isinstance(timestamp, (int, float)) \
            or not math.isfinite(timestamp) or timestamp <= 0:
        raise MalformedEnvelope("timestamp must be a finite positive number")

    try:
        payload = validate_payload(raw["payload"])
    except Exception as exc:
        raise MalformedEnvelope(f"payload invalid: {exc}") from exc

    extras = {k: v for k, v in raw.items() if k not in _CLAIM_KEYS}
    return EnvelopeClaims(sender=sender, recipient=recipient, transaction_id=txn_id,
                          sequence=sequence, timestamp=timestamp, payload=payload,
                          extras=extras)


@dataclass(frozen=True)
class Envelope:
    """Signed wrapper. ``header_bytes`` and ``claims_bytes`` are kept exactly
    as produced at signing time (or as received); the signature is raw r||s.
    """

    header_bytes: bytes
    claims_bytes: bytes
    signature: bytes

    @property
    def header(self) -> dict[str, Any]:
        return _parse_header(self.header_bytes)

    @property
    def kid(self) -> str:
        return self.header["kid"]

    def signing_input(self) -> bytes:
        return (b64url_encode(self.header_bytes) + "." +
                b64url_encode(self.claims_bytes)).encode("ascii")


@lru_cache(maxsize=1024)
def _parse_header_cached(header_bytes: bytes) -> tuple[str, str]:
    try:
        raw = json.loads(header_bytes.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise MalformedEnvelope(f"header is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise MalformedEnvelope("header must be a JSON object")
    alg, kid = raw.get("alg"), raw.get("kid")
    if alg != ALGORITHM:
        raise MalformedEnvelope(f"unsupported alg: {alg!r}")
    if not isinstance(kid, str) or not kid:
        raise MalformedEnvelope("header kid must be a non-empty string")
    return alg, kid


def _parse_header(header_bytes: bytes) -> dict[str, str]:
    alg, kid = _parse_header_cached(bytes(header_bytes))
    return {"alg": alg, "kid": kid}


def _raw_signature(der: bytes) -> bytes:
    r, s = decode_dss_signature(der)
    return r.to_bytes(32, "big") + s.to_bytes(32, "big")


def _der_signature(raw: bytes) -> bytes:
    if len(raw) != SIGNATURE_BYTES:
        raise MalformedEnvelope(f"signature must be {SIGNATURE_BYTES} bytes, got {len(raw)}")
    r = int.from_bytes(raw[:32], "big")
    s = int.from_bytes(raw[32:], "big")
    return encode_dss_signature(r, s)


def sign_envelope(claims: EnvelopeClaims, identity: AgentIdentity) -> Envelope:
    """Sign deterministic claims bytes; the result verifies over those bytes."""
    if identity.private_key is None:
        raise NoPrivateKey(f"identity {identity.agent_id!r} has no private key")
    header_bytes = canonical_bytes({"alg": ALGORITHM, "kid": identity.agent_id})
    claims_bytes = encode_claims(claims)
    envelope = Envelope(header_bytes=header_bytes, claims_bytes=claims_bytes, signature=b"")
    der = identity.private_key.sign(envelope.signing_input(), ec.ECDSA(hashes.SHA256()))
    return Envelope(header_bytes=header_bytes, claims_bytes=claims_bytes,
                    signature=_raw_signature(der))


def verify_envelope(envelope: Envelope, keystore: Keystore) -> EnvelopeClaims:
    """Resolve the signer, check the signature over the received bytes, then
    decode the claims. The signer id must match the sender claim."""
    kid = envelope.kid  # raises MalformedEnvelope on a bad header
    identity = keystore.get(kid)
    if identity is None:
        raise UnknownKey(kid)
    try:
        identity.public_key.verify(_der_signature(envelope.signature),
                                   envelope.signing_input(),
                                   ec.ECDSA(hashes.SHA256()))
    except InvalidSignature as exc:
        raise SignatureMismatch("signature does not verify over received bytes") from exc
    claims = decode_claims(envelope.claims_bytes)
    if claims.sender != kid:
        raise MalformedEnvelope(f"sender claim {claims.sender!r} does not match key id {kid!r}")
    return claims


def compact_encode(envelope: Envelope) -> str:
    return ".".join((
        b64url_encode(envelope.header_bytes),
        b64url_encode(envelope.claims_bytes),
        b64url_encode(envelope.signature),
    ))


def compact_decode(text: str) -> Envelope:
    """Inverse of compact_encode; never re-serializes the claims."""
    parts = text.split(".")
    if len(parts) != 3:
        raise MalformedEnvelope(f"expected 3 dot-separated segments, got {len(parts)}")
    header_bytes = b64url_decode(parts[0])
    claims_bytes = b64url_decode(parts[1])
    signature = b64url_decode(parts[2])
    if len(signature) != SIGNATURE_BYTES:
        raise MalformedEnvelope(f"signature must be {SIGNATURE_BYTES} bytes, got {len(signature)}")
    _parse_header(header_bytes)
    return Envelope(header_bytes=header_bytes, claims_bytes=claims_bytes, signature=signature)
