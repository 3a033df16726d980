import assert from "node:assert/strict";
import { readFileSync } from "node:fs";
import { fileURLToPath } from "node:url";
import { dirname, join } from "node:path";
import { test } from "node:test";

import { CLASS_REQUEST, FrameDecoder, FramingError, encodeFrame } from "../src/framing.js";

const here = dirname(fileURLToPath(import.meta.url));
const DATA_DIR = join(here, "..", "..", "..", "tests", "data");

test("frame layout matches the declared wire format", () => {
  const data = encodeFrame({ frameClass: 0x01, body: Buffer.from("hello") });
  assert.equal(data.length, 15);
  assert.equal(data.subarray(0, 10).toString("hex"), "4c414350010100000005");
});

test("decoder handles one-byte chunks", () => {
  const data = encodeFrame({ frameClass: 0x02, body: Buffer.from("abc") });
  const decoder = new FrameDecoder();
  const frames = [];
  for (const byte of data) {
    frames.push(...decoder.feed(Buffer.from([byte])));
  }
  assert.equal(frames.length, 1);
  assert.equal(frames[0].body.toString(), "abc");
});

test("bad magic is fatal", () => {
  assert.throws(() => new FrameDecoder().feed(Buffer.from("HTTP/1.1")), FramingError);
});

test("the golden frame from the reference implementation decodes and re-encodes", () => {
  const golden = Buffer.from(
    readFileSync(join(DATA_DIR, "golden_frame.hex"), "utf8").trim(), "hex");
  const frames = new FrameDecoder().feed(golden);
  assert.equal(frames.length, 1);
  assert.equal(frames[0].frameClass, CLASS_REQUEST);
  assert.deepEqual(encodeFrame(frames[0]), golden);
});
