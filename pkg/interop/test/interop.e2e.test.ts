/**
 * Live cross-ecosystem checks against the reference node, which is spawned
 * through its public CLI and spoken to only over its external surfaces:
 * the keystore file, the binary frame transport, and compact envelopes.
 */

import assert from "node:assert/strict";
import { spawn, type ChildProcess } from "node:child_process";
import { fileURLToPath } from "node:url";
import { dirname, join } from "node:path";
import { after, before, test } from "node:test";

import { adapterAgentDemo } from "../src/agent.js";
import {
  adapterSendAct,
  buildActEnvelope,
  sendCompact,
  ServerRejected,
  Unreachable,
  type AdapterConfig,
} from "../src/adapter.js";
import { Keystore } from "../src/keystore.js";

const here = dirname(fileURLToPath(import.meta.url));
const REPO_ROOT = join(here, "..", "..", "..");
const KEYSTORE = join(REPO_ROOT, "tests", "data", "fixture_keystore.json");

let server: ChildProcess;
let cfg: AdapterConfig;

function startNode(): Promise<number> {
  return new Promise((resolve, reject) => {
    server = spawn("python3", ["-m", "lacp.cli", "serve",
      "--listen", "127.0.0.1:0",
      "--keystore", KEYSTORE,
      "--identity", "bob"], { cwd: REPO_ROOT });
    const timer = setTimeout(() => reject(new Error("node did not start")), 15000);
    let buffered = "";
    server.stdout!.on("data", (chunk: Buffer) => {
      buffered += chunk.toString();
      const match = buffered.match(/serving on [\d.]+:(\d+)/);
      if (match) {
        clearTimeout(timer);
        resolve(Number(match[1]));
      }
    });
    server.stderr!.on("data", (chunk: Buffer) => {
      process.stderr.write(chunk);
    });
    server.on("exit", (code) => {
      clearTimeout(timer);
      reject(new Error(`node exited early with ${code}`));
    });
  });
}

before(async () => {
  const port = await startNode();
  cfg = {
    host: "127.0.0.1",
    port,
    keystorePath: KEYSTORE,
    agentId: "alice",
    serverId: "bob",
    attemptTimeoutMs: 5000,
  };
});

after(() => {
  server.kill();
});

test("adapter calculator call returns 105 with a verified response", async () => {
  const observation = await adapterSendAct(cfg, "calculator", { expression: "15*7" });
  assert.equal(observation, "105");
});

test("adapter-signed envelope is accepted by the reference node", async () => {
  // a 200 means the node's own verifier accepted our signature; the
  // response in turn verified here under the node's key
  const keystore = Keystore.load(KEYSTORE);
  const compact = buildActEnvelope(cfg, keystore, "calculator",
    { expression: "2+3*4" }, 7);
  const observation = await sendCompact(cfg, keystore, compact);
  assert.equal(observation.statusCode, 200);
  assert.equal(observation.text, "14");
});

test("error-code parity: tampering is rejected with 403", async () => {
  const keystore = Keystore.load(KEYSTORE);
  const compact = buildActEnvelope(cfg, keystore, "transfer", { amount: 100 }, 8);
  const first = await sendCompact(cfg, keystore, compact);
  assert.equal(first.statusCode, 200);

  const [header, claims, signature] = compact.split(".");
  const tamperedClaims = Buffer.from(
    Buffer.from(claims, "base64url").toString("utf8")
      .replace('"amount":100', '"amount":10000'),
    "utf8").toString("base64url");
  const tampered = [header, tamperedClaims, signature].join(".");
  const second = await sendCompact(cfg, keystore, tampered);
  assert.equal(second.statusCode, 403);
});

test("error-code parity: replay is rejected with 409", async () => {
  const keystore = Keystore.load(KEYSTORE);
  const compact = buildActEnvelope(cfg, keystore, "transfer", { amount: 100 }, 9);
  const first = await sendCompact(cfg, keystore, compact);
  const second = await sendCompact(cfg, keystore, compact);
  assert.equal(first.statusCode, 200);
  assert.equal(second.statusCode, 409);
});

test("scripted agent demo completes the reason-act loop", async () => {
  const result = await adapterAgentDemo(cfg, [
    { kind: "think", text: "the user wants the product of 15 and 7" },
    { kind: "act", tool: "calculator", params: { expression: "15*7" } },
    { kind: "think", text: "report the observed result" },
  ]);
  assert.equal(result.error, null);
  assert.ok(result.finalAnswer?.includes("105"), String(result.finalAnswer));
  assert.deepEqual(result.transcript.map((e) => e.kind),
    ["think", "act", "observe", "think"]);
});

test("script with no tool steps performs zero acts", async () => {
  const result = await adapterAgentDemo(cfg, [{ kind: "think", text: "idle" }]);
  assert.equal(result.error, null);
  assert.equal(result.finalAnswer, null);
  assert.deepEqual(result.transcript, [{ kind: "think", text: "idle" }]);
});

test("unknown tool surfaces the node's 404", async () => {
  await assert.rejects(
    adapterSendAct(cfg, "no-such-tool", {}),
    (err: Error) => err instanceof ServerRejected && err.statusCode === 404);
});

test("unreachable node surfaces Unreachable in the transcript", async () => {
  const downCfg = { ...cfg, port: 1, maxAttempts: 1, attemptTimeoutMs: 300 };
  const result = await adapterAgentDemo(downCfg, [
    { kind: "act", tool: "calculator", params: { expression: "1+1" } },
  ]);
  assert.ok(result.error instanceof Unreachable, String(result.error));
  assert.equal(result.transcript.at(-1)?.kind, "error");
});
