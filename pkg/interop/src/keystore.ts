/**
 * Reads the same keystore file format as the reference node: a JSON map of
 * agent_id -> { public_key: hex (uncompressed SEC1 point or DER SPKI),
 * private_key?: hex (32-byte scalar) }.
 */

import { readFileSync } from "node:fs";
import { createPrivateKey, createPublicKey, type KeyObject } from "node:crypto";

export interface Identity {
  agentId: string;
  publicKey: KeyObject;
  privateKey?: KeyObject;
}

function publicJwkFromPointHex(hex: string): { x: string; y: string } {
  const raw = Buffer.from(hex, "hex");
  if (raw.length !== 65 || raw[0] !== 0x04) {
    throw new Error(`expected a 65-byte uncompressed P-256 point, got ${raw.length} bytes`);
  }
  return {
    x: raw.subarray(1, 33).toString("base64url"),
    y: raw.subarray(33, 65).toString("base64url"),
  };
}

export function publicKeyFromHex(hex: string): KeyObject {
  const raw = Buffer.from(hex, "hex");
  if (raw.length === 65 && raw[0] === 0x04) {
    const { x, y } = publicJwkFromPointHex(hex);
    return createPublicKey({ key: { kty: "EC", crv: "P-256", x, y }, format: "jwk" });
  }
  return createPublicKey({ key: raw, format: "der", type: "spki" });
}

export function privateKeyFromHex(scalarHex: string, publicPointHex: string): KeyObject {
  const scalar = Buffer.from(scalarHex, "hex");
  if (scalar.length !== 32) {
    throw new Error(`expected a 32-byte private scalar, got ${scalar.length} bytes`);
  }
  const { x, y } = publicJwkFromPointHex(publicPointHex);
  return createPrivateKey({
    key: { kty: "EC", crv: "P-256", x, y, d: scalar.toString("base64url") },
    format: "jwk",
  });
}

export class Keystore {
  private byId = new Map<string, Identity>();

  static load(path: string): Keystore {
    const raw = JSON.parse(readFileSync(path, "utf8")) as
      Record<string, { public_key: string; private_key?: string }>;
    const store = new Keystore();
    for (const [agentId, entry] of Object.entries(raw)) {
      const identity: Identity = { agentId, publicKey: publicKeyFromHex(entry.public_key) };
      if (entry.private_key) {
        identity.privateKey = privateKeyFromHex(entry.private_key, entry.public_key);
      }
      store.byId.set(agentId, identity);
    }
    return store;
  }

  get(agentId: string): Identity | undefined {
    return this.byId.get(agentId);
  }

  require(agentId: string): Identity {
    const identity = this.byId.get(agentId);
    if (!identity) throw new Error(`agent ${JSON.stringify(agentId)} not in keystore`);
    return identity;
  }
}
