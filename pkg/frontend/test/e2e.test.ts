// Scripted end-to-end session against the real simulation server: connect
// over the websocket transport, stream paced frames, drive with scripted
// keys, toggle recording, then parse the server-side demo file.

import { spawn, ChildProcess } from "node:child_process";
import * as fs from "node:fs";
import * as net from "node:net";
import * as os from "node:os";
import * as path from "node:path";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { InputState } from "../src/input.js";
import { DriveSession } from "../src/session.js";
import { NodeWsTransport } from "./nodews.js";

const REPO_ROOT = path.resolve(__dirname, "..", "..");

function freePort(): Promise<number> {
  return new Promise((resolve, reject) => {
    const srv = net.createServer();
    srv.listen(0, "127.0.0.1", () => {
      const port = (srv.address() as net.AddressInfo).port;
      srv.close(() => resolve(port));
    });
    srv.on("error", reject);
  });
}

function waitForPort(port: number, timeoutMs = 20000): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  return new Promise((resolve, reject) => {
    const attempt = () => {
      const sock = net.connect(port, "127.0.0.1");
      sock.once("connect", () => { sock.end(); resolve(); });
      sock.once("error", () => {
        sock.destroy();
        if (Date.now() > deadline) reject(new Error("server never came up"));
        else setTimeout(attempt, 150);
      });
    };
    attempt();
  });
}

describe("driveview against the paced server", () => {
  let server: ChildProcess;
  let port: number;
  let demoDir: string;
  let stderr = "";

  beforeAll(async () => {
    port = await freePort();
    demoDir = fs.mkdtempSync(path.join(os.tmpdir(), "driveview-demos-"));
    server = spawn("python3", [
      "-m", "microcarla.cli", "serve", "--town", "b", "--port", String(port),
      "--ws", "--pace", "10hz", "--demo-dir", demoDir,
    ], { cwd: REPO_ROOT, stdio: ["ignore", "ignore", "pipe"] });
    server.stderr!.on("data", (d) => { stderr += d.toString(); });
    await waitForPort(port);
  }, 30000);

  afterAll(() => {
    server?.kill();
  });

  it("streams paced frames, one control per frame, and records annotated demos",
     async () => {
    const input = new InputState();
    let firstFrameAt = 0;
    let lastFrameAt = 0;
    let done: (v: unknown) => void;
    const finished = new Promise((resolve) => { done = resolve; });

    const session = new DriveSession(
      (url) => new NodeWsTransport(url),
      input,
      (view) => {
        if (view.phase === "error") throw new Error(view.statusText);
        if (!view.frame) return;
        const frames = session.stats.framesReceived;
        const now = Date.now();
        if (frames === 1) firstFrameAt = now;
        lastFrameAt = now;
        // scripted drive: accelerate, signal a left turn, record 5..55
        if (frames === 2) input.keyDown("ArrowUp");
        if (frames === 3) input.keyDown("Digit3");
        if (frames === 5) input.keyDown("F9");
        if (frames === 6) input.keyUp("F9");
        if (frames === 30) input.keyDown("Digit4");
        if (frames === 55) { input.keyDown("F9"); input.keyUp("F9"); }
        if (frames >= 60) done(null);
      },
    );
    session.connect(`ws://127.0.0.1:${port}/ws`);
    await finished;
    session.close();

    expect(session.stats.framesReceived).toBeGreaterThanOrEqual(60);
    // lockstep preserved through the UI: one control sent per frame handled
    expect(session.stats.controlsSent).toBe(session.stats.framesReceived);
    expect(session.stats.recordToggles).toBe(2);

    // pacing: ~10 Hz, so 59 inter-frame gaps take roughly 5.9 s
    const elapsed = (lastFrameAt - firstFrameAt) / 1000;
    expect(elapsed).toBeGreaterThan(4.5);
    expect(elapsed).toBeLessThan(12);

    // the server-side recorder wrote the annotated demo
    const files = fs.readdirSync(demoDir).filter((f) => f.endsWith(".jsonl"));
    expect(files.length).toBe(1);
    const lines = fs.readFileSync(path.join(demoDir, files[0]), "utf-8")
      .trim().split("\n").map((l) => JSON.parse(l));
    const header = lines[0];
    expect(header.type).toBe("header");
    expect(header.town).toBe("town_b");
    const samples = lines.slice(1);
    expect(samples.length).toBeGreaterThanOrEqual(45);
    const commands = new Set(samples.map((s) => s.command));
    expect(commands.has("left")).toBe(true);
    expect(commands.has("right")).toBe(true);
    // the stored action is the expert's (no perturbation was requested)
    for (const sample of samples) {
      expect(sample.applied).toEqual(sample.action);
    }
    expect(samples.some((s) => s.action.throttle === 1)).toBe(true);
  }, 30000);
});
