/** One framed TCP connection to a node, promise-based request/response. */

import { Socket, connect } from "node:net";

import { FrameDecoder, encodeFrame, type Frame } from "./framing.js";

export class Unreachable extends Error {}
export class TransportTimeout extends Error {}

export class FrameConnection {
  private decoder = new FrameDecoder();
  private inbox: Frame[] = [];
  private waiters: Array<(frame: Frame) => void> = [];
  private failure: Error | null = null;

  private constructor(private socket: Socket) {
    socket.on("data", (chunk) => {
      let frames: Frame[];
      try {
        frames = this.decoder.feed(chunk);
      } catch (err) {
        this.fail(err as Error);
        return;
      }
      for (const frame of frames) {
        const waiter = this.waiters.shift();
        if (waiter) waiter(frame);
        else this.inbox.push(frame);
      }
    });
    socket.on("error", (err) => this.fail(new Unreachable(String(err))));
    socket.on("close", () => this.fail(new Unreachable("connection closed")));
  }

  private fail(err: Error): void {
    if (!this.failure) this.failure = err;
  }

  static connect(host: string, port: number, timeoutMs = 5000): Promise<FrameConnection> {
    return new Promise((resolve, reject) => {
      const socket = connect({ host, port, noDelay: true });
      const timer = setTimeout(() => {
        socket.destroy();
        reject(new Unreachable(`connect to ${host}:${port} timed out`));
      }, timeoutMs);
      socket.once("connect", () => {
        clearTimeout(timer);
        resolve(new FrameConnection(socket));
      });
      socket.once("error", (err) => {
        clearTimeout(timer);
        reject(new Unreachable(`cannot connect to ${host}:${port}: ${err}`));
      });
    });
  }

  send(frame: Frame): void {
    if (this.failure) throw this.failure;
    this.socket.write(encodeFrame(frame));
  }

  receive(timeoutMs: number): Promise<Frame> {
    const pending = this.inbox.shift();
    if (pending) return Promise.resolve(pending);
    if (this.failure) return Promise.reject(this.failure);
    return new Promise((resolve, reject) => {
      const timer = setTimeout(() => {
        const index = this.waiters.indexOf(waiter);
        if (index >= 0) this.waiters.splice(index, 1);
        reject(new TransportTimeout(`no frame within ${timeoutMs} ms`));
      }, timeoutMs);
      const waiter = (frame: Frame) => {
        clearTimeout(timer);
        resolve(frame);
      };
      this.waiters.push(waiter);
    });
  }

  close(): void {
    this.socket.destroy();
  }
}
