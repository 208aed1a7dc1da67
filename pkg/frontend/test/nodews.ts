// Minimal RFC6455 client over node:net exposing the browser-WebSocket shape
// the session needs. Test-only; the real UI uses the native WebSocket.

import * as crypto from "node:crypto";
import * as net from "node:net";

import { Transport } from "../src/session.js";

const GUID = "258EAFA5-E914-47DA-95CA-C5AB0DC85B11";

export class NodeWsTransport implements Transport {
  onopen: (() => void) | null = null;
  onmessage: ((ev: { data: string }) => void) | null = null;
  onclose: (() => void) | null = null;

  private sock: net.Socket;
  private buffer = Buffer.alloc(0);
  private upgraded = false;
  private fragments: Buffer[] = [];

  constructor(url: string) {
    const parsed = new URL(url);
    this.sock = net.connect(Number(parsed.port), parsed.hostname);
    const key = crypto.randomBytes(16).toString("base64");
    const accept = crypto.createHash("sha1").update(key + GUID).digest("base64");
    this.sock.on("connect", () => {
      this.sock.write(
        `GET ${parsed.pathname || "/ws"} HTTP/1.1\r\n` +
        `Host: ${parsed.host}\r\n` +
        "Upgrade: websocket\r\nConnection: Upgrade\r\n" +
        `Sec-WebSocket-Key: ${key}\r\n` +
        "Sec-WebSocket-Version: 13\r\n\r\n");
    });
    this.sock.on("data", (chunk) => {
      this.buffer = Buffer.concat([this.buffer, chunk]);
      if (!this.upgraded) {
        const end = this.buffer.indexOf("\r\n\r\n");
        if (end < 0) return;
        const head = this.buffer.subarray(0, end).toString("latin1");
        this.buffer = this.buffer.subarray(end + 4);
        if (!head.includes("101") || !head.includes(accept)) {
          this.sock.destroy();
          return;
        }
        this.upgraded = true;
        this.onopen?.();
      }
      this.drain();
    });
    this.sock.on("close", () => this.onclose?.());
    this.sock.on("error", () => this.onclose?.());
  }

  private drain(): void {
    for (;;) {
      if (this.buffer.length < 2) return;
      const fin = (this.buffer[0] & 0x80) !== 0;
      const opcode = this.buffer[0] & 0x0f;
      let len = this.buffer[1] & 0x7f;
      let offset = 2;
      if (len === 126) {
        if (this.buffer.length < 4) return;
        len = this.buffer.readUInt16BE(2);
        offset = 4;
      } else if (len === 127) {
        if (this.buffer.length < 10) return;
        len = Number(this.buffer.readBigUInt64BE(2));
        offset = 10;
      }
      if (this.buffer.length < offset + len) return;
      const payload = this.buffer.subarray(offset, offset + len);
      this.buffer = this.buffer.subarray(offset + len);
      if (opcode === 0x8) {
        this.sock.end();
        return;
      }
      if (opcode === 0x9) {
        this.sock.write(this.frame(payload, 0xa));
        continue;
      }
      if (opcode === 0x1 || opcode === 0x0) {
        this.fragments.push(Buffer.from(payload));
        if (fin) {
          const whole = Buffer.concat(this.fragments).toString("utf-8");
          this.fragments = [];
          this.onmessage?.({ data: whole });
        }
      }
    }
  }

  private frame(payload: Buffer, opcode: number): Buffer {
    const mask = crypto.randomBytes(4);
    const masked = Buffer.from(payload);
    for (let i = 0; i < masked.length; i++) masked[i] ^= mask[i % 4];
    let header: Buffer;
    if (payload.length < 126) {
      header = Buffer.from([0x80 | opcode, 0x80 | payload.length]);
    } else if (payload.length < 65536) {
      header = Buffer.alloc(4);
      header[0] = 0x80 | opcode;
      header[1] = 0x80 | 126;
      header.writeUInt16BE(payload.length, 2);
    } else {
      header = Buffer.alloc(10);
      header[0] = 0x80 | opcode;
      header[1] = 0x80 | 127;
      header.writeBigUInt64BE(BigInt(payload.length), 2);
    }
    return Buffer.concat([header, mask, masked]);
  }

  send(data: string): void {
    this.sock.write(this.frame(Buffer.from(data, "utf-8"), 0x1));
  }

  close(): void {
    this.sock.end();
  }
}
