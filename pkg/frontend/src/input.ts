// Keyboard-to-control mapping with analog ramps: held steering builds from
// 0 to full lock over 0.5 s, released steering decays back within 0.3 s,
// throttle/brake ramp like the steering. Command annotation keys and the
// toggles (reverse, recording) act on key-down edges.

import { clamp, Command, Control } from "./protocol.js";

export interface KeyMap {
  steerLeft: string;
  steerRight: string;
  throttle: string;
  brake: string;
  handBrake: string;
  reverseToggle: string;
  commandFollow: string;
  commandStraight: string;
  commandLeft: string;
  commandRight: string;
  recordToggle: string;
}

export const DEFAULT_KEYMAP: KeyMap = {
  steerLeft: "ArrowLeft",
  steerRight: "ArrowRight",
  throttle: "ArrowUp",
  brake: "ArrowDown",
  handBrake: "Space",
  reverseToggle: "KeyR",
  commandFollow: "Digit1",
  commandStraight: "Digit2",
  commandLeft: "Digit3",
  commandRight: "Digit4",
  recordToggle: "F9",
};

const RAMP_UP_S = 0.5; // held key: 0 -> 1
const STEER_DECAY_S = 0.3; // released steering: back to 0

export class InputState {
  private down = new Set<string>();
  private steer = 0;
  private throttle = 0;
  private brake = 0;
  private reverse = false;
  command: Command = "follow-lane";
  recordRequested = false; // consumed by the session when sent

  constructor(private keymap: KeyMap = DEFAULT_KEYMAP) {}

  keyDown(code: string): void {
    if (this.down.has(code)) return; // ignore auto-repeat
    this.down.add(code);
    const km = this.keymap;
    if (code === km.reverseToggle) this.reverse = !this.reverse;
    else if (code === km.recordToggle) this.recordRequested = !this.recordRequested;
    else if (code === km.commandFollow) this.command = "follow-lane";
    else if (code === km.commandStraight) this.command = "straight";
    else if (code === km.commandLeft) this.command = "left";
    else if (code === km.commandRight) this.command = "right";
  }

  keyUp(code: string): void {
    this.down.delete(code);
  }

  // One sample per received frame; dt is the wall time since the last one.
  step(dt: number): { control: Control; command: Command } {
    const km = this.keymap;
    const rampStep = dt / RAMP_UP_S;
    const left = this.down.has(km.steerLeft);
    const right = this.down.has(km.steerRight);
    if (left !== right) {
      // screen-left is a positive (counter-clockwise) steer in world frame
      const target = left ? 1 : -1;
      this.steer = clamp(this.steer + target * rampStep, -1, 1);
    } else {
      const decay = dt / STEER_DECAY_S;
      if (Math.abs(this.steer) <= decay) this.steer = 0;
      else this.steer -= Math.sign(this.steer) * decay;
    }
    this.throttle = this.down.has(km.throttle)
      ? clamp(this.throttle + rampStep, 0, 1) : 0;
    this.brake = this.down.has(km.brake)
      ? clamp(this.brake + rampStep, 0, 1) : 0;
    return {
      control: {
        steer: this.steer,
        throttle: this.throttle,
        brake: this.brake,
        hand_brake: this.down.has(km.handBrake),
        reverse: this.reverse,
      },
      command: this.command,
    };
  }
}
