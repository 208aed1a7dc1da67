import { describe, expect, it } from "vitest";

import { DEFAULT_KEYMAP, InputState } from "../src/input.js";

const DT = 0.1;

describe("keyboard input mapping", () => {
  it("idle input produces zero control and the default command", () => {
    const input = new InputState();
    const { control, command } = input.step(DT);
    expect(control).toEqual({
      steer: 0, throttle: 0, brake: 0, hand_brake: false, reverse: false,
    });
    expect(command).toBe("follow-lane");
  });

  it("throttle ramps to 1.0 after half a second held", () => {
    const input = new InputState();
    input.keyDown("ArrowUp");
    let control = input.step(DT).control;
    expect(control.throttle).toBeCloseTo(0.2, 9);
    for (let i = 0; i < 4; i++) control = input.step(DT).control;
    expect(control.throttle).toBe(1.0);
    input.keyUp("ArrowUp");
    expect(input.step(DT).control.throttle).toBe(0);
  });

  it("held steering ramps and released steering decays within 0.3 s", () => {
    const input = new InputState();
    input.keyDown("ArrowLeft");
    for (let i = 0; i < 5; i++) input.step(DT);
    expect(input.step(DT).control.steer).toBe(1.0);
    input.keyUp("ArrowLeft");
    const s1 = input.step(DT).control.steer;
    expect(s1).toBeLessThan(1.0);
    input.step(DT);
    expect(input.step(DT).control.steer).toBe(0);
  });

  it("opposing steering keys cancel into decay", () => {
    const input = new InputState();
    input.keyDown("ArrowLeft");
    for (let i = 0; i < 3; i++) input.step(DT);
    input.keyDown("ArrowRight");
    for (let i = 0; i < 3; i++) input.step(DT);
    expect(input.step(DT).control.steer).toBe(0);
  });

  it("command annotation keys persist until changed", () => {
    const input = new InputState();
    input.keyDown("Digit3");
    input.keyUp("Digit3");
    expect(input.step(DT).command).toBe("left");
    expect(input.step(DT).command).toBe("left");
    input.keyDown("Digit2");
    expect(input.step(DT).command).toBe("straight");
    input.keyDown("Digit1");
    expect(input.step(DT).command).toBe("follow-lane");
  });

  it("reverse and recording toggle on key-down edges, ignoring repeats", () => {
    const input = new InputState();
    input.keyDown("KeyR");
    input.keyDown("KeyR"); // auto-repeat: no double toggle
    expect(input.step(DT).control.reverse).toBe(true);
    input.keyUp("KeyR");
    input.keyDown("KeyR");
    expect(input.step(DT).control.reverse).toBe(false);
    expect(input.recordRequested).toBe(false);
    input.keyDown("F9");
    expect(input.recordRequested).toBe(true);
    input.keyUp("F9");
    input.keyDown("F9");
    expect(input.recordRequested).toBe(false);
  });

  it("hand brake is held, not toggled", () => {
    const input = new InputState();
    input.keyDown("Space");
    expect(input.step(DT).control.hand_brake).toBe(true);
    input.keyUp("Space");
    expect(input.step(DT).control.hand_brake).toBe(false);
  });

  it("keymap is remappable", () => {
    const input = new InputState({ ...DEFAULT_KEYMAP, throttle: "KeyW" });
    input.keyDown("KeyW");
    expect(input.step(DT).control.throttle).toBeGreaterThan(0);
    input.keyDown("ArrowUp");
    input.keyUp("KeyW");
    expect(input.step(DT).control.throttle).toBe(0);
  });
});
