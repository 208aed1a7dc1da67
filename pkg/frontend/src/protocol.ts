// Wire protocol mirror: JSON message types and helpers matching
// docs/protocol.md. Over the websocket transport every message is one text
// frame carrying the JSON body (no length prefix).

export const PROTOCOL_VERSION = "microcarla/1";

export type Command = "follow-lane" | "straight" | "left" | "right";

export interface Control {
  steer: number;
  throttle: number;
  brake: number;
  hand_brake: boolean;
  reverse: boolean;
}

export interface AgentInfo {
  kind: "vehicle" | "pedestrian";
  x: number;
  y: number;
  heading: number;
  half_length: number;
  half_width: number;
}

export interface LightInfo { x: number; y: number; state: string }
export interface SignInfo { x: number; y: number; limit: number }

export interface Measurements {
  position: [number, number];
  orientation: [number, number];
  speed_kmh: number;
  acceleration: [number, number];
  collision_car: number;
  collision_pedestrian: number;
  collision_static: number;
  opposite_lane: number;
  sidewalk: number;
  sim_time: number;
  agents: AgentInfo[];
  lights: LightInfo[];
  speed_signs: SignInfo[];
}

export interface WireScan {
  kind: "semantic" | "depth" | "rgb-proxy";
  fov: number;
  max_range: number;
  ray_count: number;
  data: string; // base64-packed values, see docs/protocol.md
}

export interface FrameMsg {
  type: "frame";
  tick: number;
  measurements: Measurements;
  scans: Record<string, WireScan>;
}

export interface TownRoad { centerline: [number, number][]; half_width: number }

export interface TownPayload {
  id: string;
  declared_km: number;
  bounds: [number, number, number, number];
  roads: TownRoad[];
  intersections: [number, number][][];
  sidewalks: [number, number][][];
  obstacles: { polygon: [number, number][]; class: string }[];
  lights: [number, number][];
  spawn_count: number;
}

export interface HelloAckMsg { type: "hello_ack"; version: string; town: TownPayload }
export interface RecordAckMsg { type: "record_ack"; enabled: boolean; path: string | null }
export interface ErrorMsg { type: "error"; kind: string; message: string }

export type ServerMsg = HelloAckMsg | FrameMsg | RecordAckMsg | ErrorMsg | { type: "bye" };

export interface MetaOptions {
  numVehicles: number;
  numPedestrians: number;
  weather: string;
  seedVehicles: number;
  seedPedestrians: number;
  playerSpawnIndex: number;
}

export const DEFAULT_META: MetaOptions = {
  numVehicles: 6,
  numPedestrians: 10,
  weather: "Clear Midday",
  seedVehicles: 1,
  seedPedestrians: 2,
  playerSpawnIndex: 0,
};

export function helloMessage(): string {
  return JSON.stringify({ type: "hello", version: PROTOCOL_VERSION });
}

export function metaMessage(opts: MetaOptions): string {
  return JSON.stringify({
    type: "meta",
    num_vehicles: opts.numVehicles,
    num_pedestrians: opts.numPedestrians,
    weather: opts.weather,
    seed_vehicles: opts.seedVehicles,
    seed_pedestrians: opts.seedPedestrians,
    cameras: [],
    player_spawn_index: opts.playerSpawnIndex,
  });
}

export const clamp = (v: number, lo: number, hi: number): number =>
  Math.min(hi, Math.max(lo, v));

export function controlMessage(control: Control, command: Command): string {
  return JSON.stringify({
    type: "control",
    steer: clamp(control.steer, -1, 1),
    throttle: clamp(control.throttle, 0, 1),
    brake: clamp(control.brake, 0, 1),
    hand_brake: control.hand_brake,
    reverse: control.reverse,
    command,
  });
}

export function recordMessage(enabled: boolean, perturb = false): string {
  return JSON.stringify({ type: "record", enabled, perturb });
}

export function parseServerMessage(data: string): ServerMsg {
  const msg = JSON.parse(data) as { type?: string };
  switch (msg.type) {
    case "hello_ack":
    case "frame":
    case "record_ack":
    case "error":
    case "bye":
      return msg as ServerMsg;
    default:
      throw new Error(`unexpected server message type: ${msg.type}`);
  }
}

// Unpack a scan payload into per-ray numbers (class ids or metres).
export function decodeScan(scan: WireScan): number[] {
  const raw = typeof atob === "function"
    ? Uint8Array.from(atob(scan.data), (c) => c.charCodeAt(0))
    : new Uint8Array(Buffer.from(scan.data, "base64"));
  if (scan.kind === "depth") {
    const view = new DataView(raw.buffer, raw.byteOffset, raw.byteLength);
    const out: number[] = [];
    for (let i = 0; i < scan.ray_count; i++) out.push(view.getFloat32(i * 4, true));
    return out;
  }
  return Array.from(raw);
}
