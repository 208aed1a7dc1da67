// Top-down canvas renderer. Takes a plain 2D-context interface so tests can
// record draw calls without a DOM.

import { decodeScan, FrameMsg, TownPayload } from "./protocol.js";
import { ViewState } from "./session.js";

export interface Ctx2D {
  fillStyle: string;
  strokeStyle: string;
  lineWidth: number;
  font: string;
  globalAlpha: number;
  setTransform(a: number, b: number, c: number, d: number, e: number, f: number): void;
  beginPath(): void;
  moveTo(x: number, y: number): void;
  lineTo(x: number, y: number): void;
  closePath(): void;
  fill(): void;
  stroke(): void;
  arc(x: number, y: number, r: number, a0: number, a1: number): void;
  fillRect(x: number, y: number, w: number, h: number): void;
  fillText(text: string, x: number, y: number): void;
  save(): void;
  restore(): void;
  translate(x: number, y: number): void;
  rotate(r: number): void;
  scale(x: number, y: number): void;
}

const COLORS: Record<string, string> = {
  background: "#1b1f24",
  road: "#3c4450",
  intersection: "#434c59",
  sidewalk: "#6e7b8a",
  marking: "#9aa7b8",
  building: "#2e3640",
  vegetation: "#2f4f3a",
  wall: "#4a4440",
  pole: "#8d8d8d",
  "traffic sign": "#b8a24a",
  other: "#555555",
  player: "#e4c14d",
  vehicle: "#c75c5c",
  pedestrian: "#67c06a",
  ray: "#e4c14d",
  hudWarn: "#ff5f5f",
  hud: "#e8e8e8",
};

function polygon(ctx: Ctx2D, points: [number, number][]): void {
  ctx.beginPath();
  ctx.moveTo(points[0][0], points[0][1]);
  for (let i = 1; i < points.length; i++) ctx.lineTo(points[i][0], points[i][1]);
  ctx.closePath();
}

export function drawTown(ctx: Ctx2D, town: TownPayload): void {
  for (const poly of town.sidewalks) {
    ctx.fillStyle = COLORS.sidewalk;
    polygon(ctx, poly);
    ctx.fill();
  }
  for (const road of town.roads) {
    ctx.strokeStyle = COLORS.road;
    ctx.lineWidth = road.half_width * 2;
    ctx.beginPath();
    ctx.moveTo(road.centerline[0][0], road.centerline[0][1]);
    for (let i = 1; i < road.centerline.length; i++) {
      ctx.lineTo(road.centerline[i][0], road.centerline[i][1]);
    }
    ctx.stroke();
    // centre divider
    ctx.strokeStyle = COLORS.marking;
    ctx.lineWidth = 0.15;
    ctx.beginPath();
    ctx.moveTo(road.centerline[0][0], road.centerline[0][1]);
    for (let i = 1; i < road.centerline.length; i++) {
      ctx.lineTo(road.centerline[i][0], road.centerline[i][1]);
    }
    ctx.stroke();
  }
  for (const box of town.intersections) {
    ctx.fillStyle = COLORS.intersection;
    polygon(ctx, box);
    ctx.fill();
  }
  for (const obstacle of town.obstacles) {
    ctx.fillStyle = COLORS[obstacle.class] ?? COLORS.other;
    polygon(ctx, obstacle.polygon);
    ctx.fill();
  }
}

function drawBox(ctx: Ctx2D, x: number, y: number, heading: number,
                 halfLength: number, halfWidth: number, color: string): void {
  ctx.save();
  ctx.translate(x, y);
  ctx.rotate(heading);
  ctx.fillStyle = color;
  ctx.fillRect(-halfLength, -halfWidth, halfLength * 2, halfWidth * 2);
  ctx.restore();
}

export function drawActors(ctx: Ctx2D, frame: FrameMsg): void {
  for (const agent of frame.measurements.agents) {
    if (agent.kind === "vehicle") {
      drawBox(ctx, agent.x, agent.y, agent.heading, agent.half_length,
              agent.half_width, COLORS.vehicle);
    } else {
      ctx.fillStyle = COLORS.pedestrian;
      ctx.beginPath();
      ctx.arc(agent.x, agent.y, 0.3, 0, Math.PI * 2);
      ctx.fill();
    }
  }
  for (const light of frame.measurements.lights) {
    ctx.fillStyle = light.state === "red" ? "#e04545"
      : light.state === "yellow" ? "#e0c345" : "#4fd160";
    ctx.beginPath();
    ctx.arc(light.x, light.y, 0.6, 0, Math.PI * 2);
    ctx.fill();
  }
  const m = frame.measurements;
  const heading = Math.atan2(m.orientation[1], m.orientation[0]);
  drawBox(ctx, m.position[0], m.position[1], heading, 2.0, 0.9, COLORS.player);
}

export function drawScans(ctx: Ctx2D, frame: FrameMsg): void {
  const m = frame.measurements;
  const heading = Math.atan2(m.orientation[1], m.orientation[0]);
  for (const key of Object.keys(frame.scans)) {
    const scan = frame.scans[key];
    if (scan.kind !== "depth") continue;
    const ranges = decodeScan(scan);
    ctx.strokeStyle = COLORS.ray;
    ctx.globalAlpha = 0.25;
    ctx.lineWidth = 0.05;
    for (let i = 0; i < ranges.length; i += 3) {
      const a = ranges.length === 1 ? heading
        : heading - scan.fov / 2 + (scan.fov * i) / (ranges.length - 1);
      ctx.beginPath();
      ctx.moveTo(m.position[0], m.position[1]);
      ctx.lineTo(m.position[0] + Math.cos(a) * ranges[i],
                 m.position[1] + Math.sin(a) * ranges[i]);
      ctx.stroke();
    }
    ctx.globalAlpha = 1.0;
  }
}

export function hudLines(view: ViewState): { text: string; warn: boolean }[] {
  const lines: { text: string; warn: boolean }[] = [];
  lines.push({ text: `status: ${view.statusText}`, warn: view.phase === "error" });
  const frame = view.frame;
  if (!frame) return lines;
  const m = frame.measurements;
  lines.push({ text: `speed ${m.speed_kmh.toFixed(1)} km/h   t ${m.sim_time.toFixed(1)} s`, warn: false });
  lines.push({
    text: `opposite ${m.opposite_lane.toFixed(2)}  sidewalk ${m.sidewalk.toFixed(2)}`,
    warn: m.opposite_lane > 0.3 || m.sidewalk > 0.3,
  });
  lines.push({
    text: `damage car ${m.collision_car.toFixed(0)} ped ${m.collision_pedestrian.toFixed(0)} static ${m.collision_static.toFixed(0)}`,
    warn: false,
  });
  lines.push({ text: `command: ${view.command}`, warn: false });
  if (view.lastControl?.reverse) lines.push({ text: "REVERSE", warn: true });
  if (view.recording) lines.push({ text: "REC", warn: true });
  return lines;
}

export function render(ctx: Ctx2D, view: ViewState,
                       width: number, height: number): void {
  ctx.setTransform(1, 0, 0, 1, 0, 0);
  ctx.fillStyle = COLORS.background;
  ctx.fillRect(0, 0, width, height);
  if (view.town) {
    const cam = view.camera;
    ctx.save();
    // world-to-screen: metres scaled by zoom, y up
    ctx.translate(width / 2, height / 2);
    ctx.scale(cam.zoom, -cam.zoom);
    ctx.translate(-cam.x, -cam.y);
    drawTown(ctx, view.town);
    if (view.frame) {
      drawScans(ctx, view.frame);
      drawActors(ctx, view.frame);
    }
    ctx.restore();
  }
  ctx.setTransform(1, 0, 0, 1, 0, 0);
  ctx.font = "14px monospace";
  let y = 20;
  for (const line of hudLines(view)) {
    ctx.fillStyle = line.warn ? COLORS.hudWarn : COLORS.hud;
    ctx.fillText(line.text, 12, y);
    y += 18;
  }
}
