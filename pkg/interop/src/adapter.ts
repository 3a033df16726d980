/**
 * The protocol bridge: a tool step that does no local work and instead
 * sends a signed ACT to a remote tool-server node, verifying the signed
 * OBSERVE that comes back. Error taxonomy and retry semantics mirror the
 * reference client: timeouts retransmit the identical envelope, and a 409
 * after a timeout means the first copy was applied (AlreadyProcessed).
 */

import {
  compactDecode,
  compactEncode,
  newTransactionId,
  signEnvelope,
  verifyEnvelope,
  type Claims,
} from "./envelope.js";
import { CLASS_REQUEST, type Frame } from "./framing.js";
import { Keystore } from "./keystore.js";
import { FrameConnection, TransportTimeout, Unreachable } from "./transport.js";

export { Unreachable } from "./transport.js";

export class ServerRejected extends Error {
  constructor(public statusCode: number, detail: string) {
    super(`server rejected request with status ${statusCode}: ${detail}`);
  }
}

export class AlreadyProcessed extends Error {}

export class ResponseVerificationFailed extends Error {}

export interface AdapterConfig {
  host: string;
  port: number;
  keystorePath: string;
  agentId: string;
  serverId: string;
  maxAttempts?: number;
  attemptTimeoutMs?: number;
  baseBackoffMs?: number;
}

export interface Observation {
  text: string;
  statusCode: number;
  claims: Claims;
}

const sleep = (ms: number) => new Promise((resolve) => setTimeout(resolve, ms));

function renderOutput(output: unknown): string {
  return typeof output === "string" ? output : JSON.stringify(output);
}

export function buildActEnvelope(cfg: AdapterConfig, keystore: Keystore,
                                 toolCall: string,
                                 params: Record<string, unknown>,
                                 sequence: number): string {
  const identity = keystore.require(cfg.agentId);
  const claims: Claims = {
    sender: cfg.agentId,
    recipient: cfg.serverId,
    transaction_id: newTransactionId(),
    sequence,
    timestamp: Math.floor(Date.now() / 1000),
    payload: {
      type: "ACT",
      intent_id: newTransactionId(),
      tool_call: toolCall,
      params,
    },
  };
  return compactEncode(signEnvelope(claims, identity));
}

export function checkResponse(body: Buffer, keystore: Keystore,
                              serverId: string, intentId?: string): Observation {
  const text = body.toString("utf8");
  if (text.startsWith("status:")) {
    throw new ServerRejected(Number(text.slice(7)), "request could not be decoded");
  }
  let claims: Claims;
  try {
    claims = verifyEnvelope(compactDecode(text), keystore);
  } catch (err) {
    throw new ResponseVerificationFailed(String(err));
  }
  if (claims.sender !== serverId) {
    throw new ResponseVerificationFailed(
      `response signed by ${claims.sender}, expected ${serverId}`);
  }
  const payload = claims.payload;
  if (payload.type !== "OBSERVE") {
    throw new ResponseVerificationFailed(`expected OBSERVE, got ${payload.type}`);
  }
  if (intentId !== undefined && payload.intent_id !== intentId) {
    throw new ResponseVerificationFailed(
      `response intent ${payload.intent_id} does not match ${intentId}`);
  }
  const statusCode = typeof payload.status_code === "number"
    ? payload.status_code
    : payload.status === "ok" ? 200 : 400;
  return { text: renderOutput(payload.output), statusCode, claims };
}

/** Send one compact envelope as a request frame and return the checked
 * response; no retries. Used by the attack-parity tests too. */
export async function sendCompact(cfg: AdapterConfig, keystore: Keystore,
                                  compact: string,
                                  intentId?: string): Promise<Observation> {
  const connection = await FrameConnection.connect(cfg.host, cfg.port);
  try {
    connection.send({ frameClass: CLASS_REQUEST, body: Buffer.from(compact, "utf8") } as Frame);
    const response = await connection.receive(cfg.attemptTimeoutMs ?? 5000);
    return checkResponse(response.body, keystore, cfg.serverId, intentId);
  } finally {
    connection.close();
  }
}

export async function adapterSendAct(cfg: AdapterConfig, toolCall: string,
                                     params: Record<string, unknown>): Promise<string> {
  const keystore = Keystore.load(cfg.keystorePath);
  const maxAttempts = cfg.maxAttempts ?? 3;
  const attemptTimeout = cfg.attemptTimeoutMs ?? 2000;
  const baseBackoff = cfg.baseBackoffMs ?? 100;

  const compact = buildActEnvelope(cfg, keystore, toolCall, params, 0);
  const envelope = compactDecode(compact);
  const intentId = (JSON.parse(envelope.claimsBytes.toString("utf8")) as Claims)
    .payload.intent_id as string;
  const frameBody = Buffer.from(compact, "utf8");

  let connection: FrameConnection | null = null;
  let timedOutBefore = false;
  let lastError: Error = new Unreachable(`no response after ${maxAttempts} attempts`);
  try {
    for (let attempt = 1; attempt <= maxAttempts; attempt++) {
      if (attempt > 1) await sleep(baseBackoff * 2 ** (attempt - 2));
      try {
        connection ??= await FrameConnection.connect(cfg.host, cfg.port, attemptTimeout);
        connection.send({ frameClass: CLASS_REQUEST, body: frameBody });
        const response = await connection.receive(attemptTimeout);
        const observation = checkResponse(response.body, keystore, cfg.serverId, intentId);
        if (observation.statusCode === 200) return observation.text;
        if (observation.statusCode === 409 && timedOutBefore) {
          throw new AlreadyProcessed(
            `applied by an earlier attempt; server said: ${observation.text}`);
        }
        throw new ServerRejected(observation.statusCode, observation.text);
      } catch (err) {
        if (err instanceof TransportTimeout || err instanceof Unreachable) {
          timedOutBefore = timedOutBefore || err instanceof TransportTimeout;
          lastError = new Unreachable(String(err));
          if (err instanceof Unreachable) {
            connection?.close();
            connection = null;
          }
          continue;
        }
        throw err;
      }
    }
  } finally {
    connection?.close();
  }
  throw lastError;
}
