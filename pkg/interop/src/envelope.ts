/**
 * Compact signed envelopes, wire-compatible with the reference node:
 *
 *   base64url(header) "." base64url(claims) "." base64url(signature)
 *
 * ES256 over the ASCII bytes of the first two segments, signature as raw
 * r||s (64 bytes). Verification never re-serializes the claims.
 */

import { randomUUID, sign as cryptoSign, verify as cryptoVerify } from "node:crypto";

import { canonicalBytes } from "./canonical.js";
import type { Identity, Keystore } from "./keystore.js";

export const ALGORITHM = "ES256";

export class MalformedEnvelope extends Error {}
export class SignatureMismatch extends Error {}
export class UnknownKey extends Error {}

export interface Claims {
  sender: string;
  recipient: string;
  transaction_id: string;
  sequence: number;
  timestamp: number;
  payload: Record<string, unknown>;
}

export interface Envelope {
  headerBytes: Buffer;
  claimsBytes: Buffer;
  signature: Buffer;
}

const b64url = (data: Buffer): string => data.toString("base64url");

function b64urlDecode(text: string): Buffer {
  if (!/^[A-Za-z0-9_-]*$/.test(text)) {
    throw new MalformedEnvelope("segment contains non-base64url characters");
  }
  return Buffer.from(text, "base64url");
}

export function newTransactionId(): string {
  return randomUUID();
}

function signingInput(headerBytes: Buffer, claimsBytes: Buffer): Buffer {
  return Buffer.from(b64url(headerBytes) + "." + b64url(claimsBytes), "ascii");
}

export function signEnvelope(claims: Claims, identity: Identity): Envelope {
  if (!identity.privateKey) {
    throw new Error(`identity ${identity.agentId} has no private key`);
  }
  const headerBytes = canonicalBytes({ alg: ALGORITHM, kid: identity.agentId });
  const claimsBytes = canonicalBytes(claims);
  const signature = cryptoSign("sha256", signingInput(headerBytes, claimsBytes), {
    key: identity.privateKey,
    dsaEncoding: "ieee-p1363",
  });
  return { headerBytes, claimsBytes, signature };
}

export function compactEncode(envelope: Envelope): string {
  return [envelope.headerBytes, envelope.claimsBytes, envelope.signature]
    .map(b64url).join(".");
}

export function compactDecode(text: string): Envelope {
  const parts = text.split(".");
  if (parts.length !== 3) {
    throw new MalformedEnvelope(`expected 3 segments, got ${parts.length}`);
  }
  const [headerBytes, claimsBytes, signature] = parts.map(b64urlDecode);
  if (signature.length !== 64) {
    throw new MalformedEnvelope(`signature must be 64 bytes, got ${signature.length}`);
  }
  parseHeader(headerBytes);
  return { headerBytes, claimsBytes, signature };
}

export function parseHeader(headerBytes: Buffer): { alg: string; kid: string } {
  let header: unknown;
  try {
    header = JSON.parse(headerBytes.toString("utf8"));
  } catch (err) {
    throw new MalformedEnvelope(`header is not JSON: ${err}`);
  }
  const record = header as { alg?: unknown; kid?: unknown };
  if (record.alg !== ALGORITHM) {
    throw new MalformedEnvelope(`unsupported alg ${JSON.stringify(record.alg)}`);
  }
  if (typeof record.kid !== "string" || !record.kid) {
    throw new MalformedEnvelope("header kid must be a non-empty string");
  }
  return { alg: record.alg, kid: record.kid };
}

export function verifyEnvelope(envelope: Envelope, keystore: Keystore): Claims {
  const { kid } = parseHeader(envelope.headerBytes);
  const identity = keystore.get(kid);
  if (!identity) throw new UnknownKey(`unknown key id ${JSON.stringify(kid)}`);
  const ok = cryptoVerify(
    "sha256",
    signingInput(envelope.headerBytes, envelope.claimsBytes),
    { key: identity.publicKey, dsaEncoding: "ieee-p1363" },
    envelope.signature,
  );
  if (!ok) throw new SignatureMismatch("signature does not verify over received bytes");
  let claims: Claims;
  try {
    claims = JSON.parse(envelope.claimsBytes.toString("utf8")) as Claims;
  } catch (err) {
    throw new MalformedEnvelope(`claims are not JSON: ${err}`);
  }
  if (claims.sender !== kid) {
    throw new MalformedEnvelope(`sender ${claims.sender} does not match key id ${kid}`);
  }
  return claims;
}
