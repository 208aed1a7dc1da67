// Lockstep driving session over a websocket-like transport.
//
// The invariant the server enforces and this loop preserves: exactly one
// control message per received frame. A requested recording toggle is sent
// between the frame and its control; the frame's control goes out after the
// record_ack arrives, so the one-to-one pairing survives.

import { InputState } from "./input.js";
import {
  Command, Control, FrameMsg, MetaOptions, DEFAULT_META, TownPayload,
  controlMessage, helloMessage, metaMessage, parseServerMessage, recordMessage,
} from "./protocol.js";

export type Phase = "connecting" | "configuring" | "driving" | "closed" | "error";

// The subset of the browser WebSocket API the session needs; tests inject a
// node implementation of the same shape.
export interface Transport {
  send(data: string): void;
  close(): void;
  onopen: (() => void) | null;
  onmessage: ((ev: { data: string }) => void) | null;
  onclose: (() => void) | null;
}

export interface ViewState {
  phase: Phase;
  statusText: string;
  town: TownPayload | null;
  frame: FrameMsg | null;
  recording: boolean;
  recordingPath: string | null;
  command: Command;
  lastControl: Control | null;
  camera: { x: number; y: number; zoom: number; follow: boolean };
}

export interface SessionStats {
  framesReceived: number;
  controlsSent: number;
  recordToggles: number;
}

export class DriveSession {
  readonly view: ViewState = {
    phase: "connecting",
    statusText: "connecting",
    town: null,
    frame: null,
    recording: false,
    recordingPath: null,
    command: "follow-lane",
    lastControl: null,
    camera: { x: 0, y: 0, zoom: 1.5, follow: true },
  };
  readonly stats: SessionStats = {
    framesReceived: 0, controlsSent: 0, recordToggles: 0,
  };

  private transport: Transport | null = null;
  private pendingControlFrame: FrameMsg | null = null;
  private recordingWanted = false;
  private lastFrameAt: number | null = null;

  constructor(
    private makeTransport: (url: string) => Transport,
    public input: InputState,
    private onFrame: (view: ViewState) => void = () => undefined,
    private meta: MetaOptions = DEFAULT_META,
    private now: () => number = () => Date.now(),
  ) {}

  connect(url: string): void {
    const transport = this.makeTransport(url);
    this.transport = transport;
    transport.onopen = () => {
      this.view.statusText = "handshaking";
      transport.send(helloMessage());
    };
    transport.onmessage = (ev) => this.handleMessage(ev.data);
    transport.onclose = () => {
      if (this.view.phase !== "error") {
        this.view.phase = "closed";
        this.view.statusText = "disconnected - reload to reconnect";
      }
      this.onFrame(this.view);
    };
  }

  close(): void {
    this.transport?.close();
  }

  private fail(text: string): void {
    this.view.phase = "error";
    this.view.statusText = text;
    this.onFrame(this.view);
  }

  private handleMessage(data: string): void {
    let msg;
    try {
      msg = parseServerMessage(data);
    } catch (err) {
      this.fail(`protocol error: ${(err as Error).message}`);
      return;
    }
    switch (msg.type) {
      case "hello_ack": {
        if (msg.version !== "microcarla/1") {
          this.fail(`server speaks ${msg.version}, expected microcarla/1`);
          this.transport?.close();
          return;
        }
        this.view.town = msg.town;
        this.view.phase = "configuring";
        this.view.statusText = `town ${msg.town.id} loaded`;
        this.transport?.send(metaMessage(this.meta));
        break;
      }
      case "frame":
        this.onFrameReceived(msg);
        break;
      case "record_ack": {
        this.view.recording = msg.enabled;
        this.view.recordingPath = msg.path;
        this.stats.recordToggles += 1;
        // release the control owed for the frame that triggered the toggle
        if (this.pendingControlFrame) {
          const frame = this.pendingControlFrame;
          this.pendingControlFrame = null;
          this.sendControl(frame);
        }
        break;
      }
      case "error":
        this.fail(`server error (${msg.kind}): ${msg.message}`);
        break;
      case "bye":
        this.view.phase = "closed";
        break;
    }
  }

  private onFrameReceived(frame: FrameMsg): void {
    this.view.phase = "driving";
    this.view.frame = frame;
    this.view.statusText = this.view.recording ? "driving (recording)" : "driving";
    this.stats.framesReceived += 1;
    if (this.view.camera.follow) {
      this.view.camera.x = frame.measurements.position[0];
      this.view.camera.y = frame.measurements.position[1];
    }
    this.onFrame(this.view);
    if (this.input.recordRequested !== this.recordingWanted) {
      this.recordingWanted = this.input.recordRequested;
      this.pendingControlFrame = frame;
      this.transport?.send(recordMessage(this.recordingWanted));
      return; // control follows once the ack lands
    }
    this.sendControl(frame);
  }

  private sendControl(_frame: FrameMsg): void {
    const t = this.now();
    const dt = this.lastFrameAt === null
      ? 0.1 : Math.max(0.01, Math.min(0.5, (t - this.lastFrameAt) / 1000));
    this.lastFrameAt = t;
    const { control, command } = this.input.step(dt);
    this.view.command = command;
    this.view.lastControl = control;
    this.transport?.send(controlMessage(control, command));
    this.stats.controlsSent += 1;
  }
}
