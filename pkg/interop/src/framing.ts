/**
 * Binary frame codec for ordered byte streams, bit-compatible with the
 * reference node: "LACP" magic, version 0x01, class byte, 4-byte
 * big-endian body length, body.
 */

export const MAGIC = Buffer.from("LACP", "ascii");
export const VERSION = 0x01;
export const HEADER_SIZE = 10;
export const MAX_BODY = 1 << 24;

export const CLASS_REQUEST = 0x01;
export const CLASS_RESPONSE = 0x02;
export const CLASS_TXN_CONTROL = 0x03;

export class FramingError extends Error {}

export interface Frame {
  frameClass: number;
  body: Buffer;
}

export function encodeFrame(frame: Frame): Buffer {
  if (frame.body.length > MAX_BODY) {
    throw new FramingError(`body of ${frame.body.length} bytes exceeds the cap`);
  }
  const header = Buffer.alloc(HEADER_SIZE);
  MAGIC.copy(header, 0);
  header.writeUInt8(VERSION, 4);
  header.writeUInt8(frame.frameClass, 5);
  header.writeUInt32BE(frame.body.length, 6);
  return Buffer.concat([header, frame.body]);
}

export class FrameDecoder {
  private buffer: Buffer = Buffer.alloc(0);

  feed(chunk: Buffer): Frame[] {
    this.buffer = this.buffer.length ? Buffer.concat([this.buffer, chunk]) : chunk;
    const frames: Frame[] = [];
    for (;;) {
      if (this.buffer.length >= 4) {
        if (!this.buffer.subarray(0, 4).equals(MAGIC)) {
          throw new FramingError("bad magic");
        }
      } else if (this.buffer.length > 0 &&
                 !MAGIC.subarray(0, this.buffer.length).equals(this.buffer)) {
        throw new FramingError("bad magic");
      }
      if (this.buffer.length >= 5 && this.buffer[4] !== VERSION) {
        throw new FramingError(`unsupported version ${this.buffer[4]}`);
      }
      if (this.buffer.length < HEADER_SIZE) return frames;
      const length = this.buffer.readUInt32BE(6);
      if (length > MAX_BODY) throw new FramingError(`oversized body: ${length}`);
      if (this.buffer.length < HEADER_SIZE + length) return frames;
      frames.push({
        frameClass: this.buffer[5],
        body: Buffer.from(this.buffer.subarray(HEADER_SIZE, HEADER_SIZE + length)),
      });
      this.buffer = Buffer.from(this.buffer.subarray(HEADER_SIZE + length));
    }
  }
}
