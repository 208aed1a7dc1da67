// Browser bootstrap: canvas, keyboard, and the websocket session.

import { DEFAULT_KEYMAP, InputState } from "./input.js";
import { Ctx2D, render } from "./render.js";
import { DriveSession, Transport } from "./session.js";

function wsUrl(): string {
  const params = new URLSearchParams(window.location.search);
  const override = params.get("server");
  if (override) return override;
  return `ws://${window.location.host}/ws`;
}

function start(): void {
  const canvas = document.getElementById("view") as HTMLCanvasElement;
  const ctx = canvas.getContext("2d") as unknown as Ctx2D;
  const input = new InputState(DEFAULT_KEYMAP);

  const session = new DriveSession(
    // the native WebSocket matches Transport at runtime; the DOM typings
    // declare wider event-handler signatures, hence the cast
    (url) => new WebSocket(url) as unknown as Transport,
    input,
    () => render(ctx, session.view, canvas.width, canvas.height),
  );

  const resize = () => {
    canvas.width = window.innerWidth;
    canvas.height = window.innerHeight;
    render(ctx, session.view, canvas.width, canvas.height);
  };
  window.addEventListener("resize", resize);
  resize();

  window.addEventListener("keydown", (ev) => {
    if (ev.code === "F9") ev.preventDefault();
    input.keyDown(ev.code);
  });
  window.addEventListener("keyup", (ev) => input.keyUp(ev.code));
  window.addEventListener("wheel", (ev) => {
    const cam = session.view.camera;
    cam.zoom = Math.min(20, Math.max(0.3, cam.zoom * (ev.deltaY < 0 ? 1.15 : 0.87)));
  });

  session.connect(wsUrl());
}

window.addEventListener("DOMContentLoaded", start);
