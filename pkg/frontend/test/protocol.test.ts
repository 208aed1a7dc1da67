import { describe, expect, it } from "vitest";

import {
  controlMessage, decodeScan, helloMessage, metaMessage, DEFAULT_META,
  parseServerMessage, recordMessage,
} from "../src/protocol.js";

describe("wire messages", () => {
  it("hello carries the protocol version", () => {
    expect(JSON.parse(helloMessage())).toEqual({
      type: "hello", version: "microcarla/1",
    });
  });

  it("meta uses the documented field names", () => {
    const msg = JSON.parse(metaMessage(DEFAULT_META));
    expect(Object.keys(msg).sort()).toEqual([
      "cameras", "num_pedestrians", "num_vehicles", "player_spawn_index",
      "seed_pedestrians", "seed_vehicles", "type", "weather",
    ]);
  });

  it("control messages clamp out-of-range values client-side", () => {
    const msg = JSON.parse(controlMessage(
      { steer: 1.7, throttle: -0.2, brake: 2.0, hand_brake: false, reverse: false },
      "left"));
    expect(msg.steer).toBe(1);
    expect(msg.throttle).toBe(0);
    expect(msg.brake).toBe(1);
    expect(msg.command).toBe("left");
  });

  it("record toggles serialize with the perturb flag", () => {
    expect(JSON.parse(recordMessage(true))).toEqual({
      type: "record", enabled: true, perturb: false,
    });
  });

  it("parseServerMessage accepts known types and rejects others", () => {
    const frame = parseServerMessage(JSON.stringify({ type: "frame", tick: 3 }));
    expect(frame.type).toBe("frame");
    expect(() => parseServerMessage(JSON.stringify({ type: "warp" }))).toThrow();
  });

  it("decodes semantic scans as byte class ids", () => {
    const data = Buffer.from(Uint8Array.from([0, 11, 9])).toString("base64");
    const scan = { kind: "semantic" as const, fov: 1, max_range: 50,
                   ray_count: 3, data };
    expect(decodeScan(scan)).toEqual([0, 11, 9]);
  });

  it("decodes depth scans as little-endian float32 metres", () => {
    const floats = new Float32Array([1.5, 49.25]);
    const data = Buffer.from(floats.buffer).toString("base64");
    const scan = { kind: "depth" as const, fov: 1, max_range: 50,
                   ray_count: 2, data };
    expect(decodeScan(scan)).toEqual([1.5, 49.25]);
  });
});
