"""Wire protocol.

Length-prefixed (4-byte big-endian) UTF-8 JSON messages with a ``type`` tag;
scan payloads ride as base64 of packed little-endian arrays (one byte per
semantic class id, four-byte float per depth). The same JSON payloads run
over raw TCP framing and over websocket text frames. docs/protocol.md is
the byte-exact reference.

The lockstep rule: a session produces exactly one frame per accepted meta or
control message and never speaks unsolicited.
"""

from __future__ import annotations

import base64
import json
import math
import struct
from dataclasses import dataclass, field

from . import learning
from .dynamics import (Control, MetaCommand, MetaError, WorldState, apply_meta,
                       clamp_control, step)
from .learning import DemoSample, DemoWriter, PerturbationConfig, PerturbationStream
from .planner import DRIVING_COMMANDS
from .sensors import CameraConfig, DepthScan, Measurements, render
from .town import TownMap
from .weather import WEATHER_NAMES

PROTOCOL_VERSION = "microcarla/1"
MAX_FRAME_BYTES = 16 * 1024 * 1024
DEFAULT_PORT = 2000
DEFAULT_TIMEOUT = 10.0

ERR_TRUNCATED = "truncated"
ERR_OVERSIZE = "oversize"
ERR_SCHEMA = "schema"
ERR_PROTOCOL = "protocol-violation"
ERR_META = "meta-rejected"


class ProtocolError(Exception):
    """Base protocol failure; ``kind`` names the error class on the wire."""

    def __init__(self, kind: str, message: str):
        super().__init__(message)
        self.kind = kind


class CodecError(ProtocolError):
    """Raised by decode(); kind is one of truncated / oversize / schema."""


class SessionError(ProtocolError):
    """A message violated the session state machine."""


# -- message types -----------------------------------------------------------

@dataclass(frozen=True)
class Hello:
    version: str = PROTOCOL_VERSION


@dataclass(frozen=True)
class HelloAck:
    version: str
    town: dict  # static town payload for rendering clients


@dataclass(frozen=True)
class MetaMsg:
    meta: MetaCommand


@dataclass(frozen=True)
class ControlMsg:
    control: Control
    command: str | None = None  # demo annotation, one of the four commands
    clamped: bool = False  # decode-side flag; never serialized


@dataclass(frozen=True)
class WireScan:
    kind: str
    fov: float
    max_range: float
    values: tuple

    @classmethod
    def from_scan(cls, scan, cfg: CameraConfig) -> "WireScan":
        if isinstance(scan, DepthScan):
            # quantize to float32 now so the wire round-trips exactly
            quantized = struct.unpack(f"<{len(scan.ranges)}f",
                                      struct.pack(f"<{len(scan.ranges)}f",
                                                  *scan.ranges))
            return cls("depth", cfg.fov, cfg.max_range, tuple(quantized))
        kind = "semantic" if cfg.kind != "rgb-proxy" else "rgb-proxy"
        return cls(kind, cfg.fov, cfg.max_range, tuple(scan.classes))


@dataclass(frozen=True)
class FrameMsg:
    tick: int
    measurements: Measurements
    scans: tuple[WireScan, ...] = ()


@dataclass(frozen=True)
class RecordMsg:
    enabled: bool
    perturb: bool = False


@dataclass(frozen=True)
class RecordAck:
    enabled: bool
    path: str | None = None


@dataclass(frozen=True)
class ErrorMsg:
    kind: str
    message: str


@dataclass(frozen=True)
class ByeMsg:
    pass


@dataclass(frozen=True)
class ActMsg:
    """Benchmark -> external agent: one frame plus the guidance command;
    the agent answers with a control message."""
    frame: FrameMsg
    command: str


Message = (Hello, HelloAck, MetaMsg, ControlMsg, FrameMsg, RecordMsg,
           RecordAck, ErrorMsg, ByeMsg, ActMsg)


# -- wire forms --------------------------------------------------------------

def _camera_to_dict(c: CameraConfig) -> dict:
    return c.to_dict()


def _camera_from_dict(d: dict, where: str) -> CameraConfig:
    _require_keys(d, {"kind", "x", "y", "yaw", "fov", "ray_count", "max_range"},
                  where)
    cfg = CameraConfig(kind=_expect_str(d, "kind", where),
                       x=_expect_num(d, "x", where),
                       y=_expect_num(d, "y", where),
                       yaw=_expect_num(d, "yaw", where),
                       fov=_expect_num(d, "fov", where),
                       ray_count=_expect_int(d, "ray_count", where),
                       max_range=_expect_num(d, "max_range", where))
    try:
        cfg.validate()
    except ValueError as exc:
        raise CodecError(ERR_SCHEMA, f"{where}: {exc}") from exc
    return cfg


def _control_to_dict(c: Control) -> dict:
    return {"steer": c.steer, "throttle": c.throttle, "brake": c.brake,
            "hand_brake": c.hand_brake, "reverse": c.reverse}


def _scan_to_dict(s: WireScan) -> dict:
    if s.kind == "depth":
        data = struct.pack(f"<{len(s.values)}f", *s.values)
    else:
        data = bytes(int(v) for v in s.values)
    return {"kind": s.kind, "fov": s.fov, "max_range": s.max_range,
            "ray_count": len(s.values),
            "data": base64.b64encode(data).decode("ascii")}


def _scan_from_dict(d: dict, where: str) -> WireScan:
    _require_keys(d, {"kind", "fov", "max_range", "ray_count", "data"}, where)
    kind = _expect_str(d, "kind", where)
    if kind not in ("semantic", "depth", "rgb-proxy"):
        raise CodecError(ERR_SCHEMA, f"{where}: unknown scan kind {kind!r}")
    n = _expect_int(d, "ray_count", where)
    try:
        raw = base64.b64decode(d["data"], validate=True)
    except Exception as exc:
        raise CodecError(ERR_SCHEMA, f"{where}: bad base64 scan data") from exc
    if kind == "depth":
        if len(raw) != 4 * n:
            raise CodecError(ERR_SCHEMA, f"{where}: depth payload length mismatch")
        values = struct.unpack(f"<{n}f", raw)
    else:
        if len(raw) != n:
            raise CodecError(ERR_SCHEMA, f"{where}: class payload length mismatch")
        values = tuple(raw)
    return WireScan(kind=kind, fov=_expect_num(d, "fov", where),
                    max_range=_expect_num(d, "max_range", where),
                    values=tuple(values))


def to_wire(msg) -> dict:
    if isinstance(msg, Hello):
        return {"type": "hello", "version": msg.version}
    if isinstance(msg, HelloAck):
        return {"type": "hello_ack", "version": msg.version, "town": msg.town}
    if isinstance(msg, MetaMsg):
        m = msg.meta
        return {"type": "meta", "num_vehicles": m.num_vehicles,
                "num_pedestrians": m.num_pedestrians, "weather": m.weather,
                "seed_vehicles": m.seed_vehicles,
                "seed_pedestrians": m.seed_pedestrians,
                "cameras": [_camera_to_dict(c) for c in m.cameras],
                "player_spawn_index": m.player_spawn_index}
    if isinstance(msg, ControlMsg):
        d = {"type": "control", **_control_to_dict(msg.control)}
        if msg.command is not None:
            d["command"] = msg.command
        return d
    if isinstance(msg, FrameMsg):
        return {"type": "frame", "tick": msg.tick,
                "measurements": msg.measurements.to_dict(),
                "scans": {str(i): _scan_to_dict(s)
                          for i, s in enumerate(msg.scans)}}
    if isinstance(msg, RecordMsg):
        return {"type": "record", "enabled": msg.enabled, "perturb": msg.perturb}
    if isinstance(msg, RecordAck):
        return {"type": "record_ack", "enabled": msg.enabled, "path": msg.path}
    if isinstance(msg, ErrorMsg):
        return {"type": "error", "kind": msg.kind, "message": msg.message}
    if isinstance(msg, ByeMsg):
        return {"type": "bye"}
    if isinstance(msg, ActMsg):
        return {"type": "act", "command": msg.command,
                "frame": to_wire(msg.frame)}
    raise TypeError(f"not a protocol message: {type(msg).__name__}")


def _require_keys(d: dict, allowed: set[str], where: str,
                  optional: set[str] = frozenset()) -> None:
    if not isinstance(d, dict):
        raise CodecError(ERR_SCHEMA, f"{where}: expected an object")
    keys = set(d)
    missing = allowed - keys
    if missing:
        raise CodecError(ERR_SCHEMA, f"{where}: missing fields {sorted(missing)}")
    unknown = keys - allowed - optional
    if unknown:
        raise CodecError(ERR_SCHEMA, f"{where}: unknown fields {sorted(unknown)}")


def _expect_num(d: dict, key: str, where: str) -> float:
    v = d.get(key)
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise CodecError(ERR_SCHEMA, f"{where}: field {key!r} must be a number")
    v = float(v)
    if not math.isfinite(v):
        raise CodecError(ERR_SCHEMA, f"{where}: field {key!r} must be finite")
    return v


def _expect_int(d: dict, key: str, where: str) -> int:
    v = d.get(key)
    if isinstance(v, bool) or not isinstance(v, int):
        raise CodecError(ERR_SCHEMA, f"{where}: field {key!r} must be an integer")
    return v


def _expect_str(d: dict, key: str, where: str) -> str:
    v = d.get(key)
    if not isinstance(v, str):
        raise CodecError(ERR_SCHEMA, f"{where}: field {key!r} must be a string")
    return v


def _expect_bool(d: dict, key: str, where: str) -> bool:
    v = d.get(key)
    if not isinstance(v, bool):
        raise CodecError(ERR_SCHEMA, f"{where}: field {key!r} must be a boolean")
    return v


def _measurements_from_dict(d: dict, where: str) -> Measurements:
    _require_keys(d, {"position", "orientation", "speed_kmh", "acceleration",
                      "collision_car", "collision_pedestrian",
                      "collision_static", "opposite_lane", "sidewalk",
                      "sim_time", "agents", "lights", "speed_signs"}, where)
    try:
        return Measurements.from_dict(d)
    except (KeyError, TypeError, IndexError) as exc:
        raise CodecError(ERR_SCHEMA, f"{where}: malformed measurements") from exc


def from_wire(d: dict):
    if not isinstance(d, dict):
        raise CodecError(ERR_SCHEMA, "message must be a JSON object")
    mtype = d.get("type")
    if not isinstance(mtype, str):
        raise CodecError(ERR_SCHEMA, "message needs a string 'type' tag")
    if mtype == "hello":
        _require_keys(d, {"type", "version"}, "hello")
        return Hello(version=_expect_str(d, "version", "hello"))
    if mtype == "hello_ack":
        _require_keys(d, {"type", "version", "town"}, "hello_ack")
        if not isinstance(d["town"], dict):
            raise CodecError(ERR_SCHEMA, "hello_ack: town must be an object")
        return HelloAck(version=_expect_str(d, "version", "hello_ack"),
                        town=d["town"])
    if mtype == "meta":
        _require_keys(d, {"type", "num_vehicles", "num_pedestrians", "weather",
                          "seed_vehicles", "seed_pedestrians", "cameras",
                          "player_spawn_index"}, "meta")
        weather = _expect_str(d, "weather", "meta")
        if weather not in WEATHER_NAMES:
            raise CodecError(ERR_SCHEMA, f"meta: unknown weather {weather!r}")
        if not isinstance(d["cameras"], list):
            raise CodecError(ERR_SCHEMA, "meta: cameras must be a list")
        cams = tuple(_camera_from_dict(c, f"meta.cameras[{i}]")
                     for i, c in enumerate(d["cameras"]))
        return MetaMsg(meta=MetaCommand(
            num_vehicles=_expect_int(d, "num_vehicles", "meta"),
            num_pedestrians=_expect_int(d, "num_pedestrians", "meta"),
            weather=weather,
            seed_vehicles=_expect_int(d, "seed_vehicles", "meta"),
            seed_pedestrians=_expect_int(d, "seed_pedestrians", "meta"),
            cameras=cams,
            player_spawn_index=_expect_int(d, "player_spawn_index", "meta")))
    if mtype == "control":
        _require_keys(d, {"type", "steer", "throttle", "brake", "hand_brake",
                          "reverse"}, "control", optional={"command"})
        command = None
        if "command" in d:
            command = _expect_str(d, "command", "control")
            if command not in DRIVING_COMMANDS:
                raise CodecError(ERR_SCHEMA,
                                 f"control: unknown command {command!r}")
        control, clamped = clamp_control(
            _expect_num(d, "steer", "control"),
            _expect_num(d, "throttle", "control"),
            _expect_num(d, "brake", "control"),
            _expect_bool(d, "hand_brake", "control"),
            _expect_bool(d, "reverse", "control"))
        return ControlMsg(control=control, command=command, clamped=clamped)
    if mtype == "frame":
        _require_keys(d, {"type", "tick", "measurements", "scans"}, "frame")
        scans_d = d["scans"]
        if not isinstance(scans_d, dict):
            raise CodecError(ERR_SCHEMA, "frame: scans must be an object")
        try:
            indices = sorted(int(k) for k in scans_d)
        except ValueError:
            raise CodecError(ERR_SCHEMA, "frame: scan keys must be integers") from None
        scans = tuple(_scan_from_dict(scans_d[str(i)], f"frame.scans[{i}]")
                      for i in indices)
        return FrameMsg(tick=_expect_int(d, "tick", "frame"),
                        measurements=_measurements_from_dict(
                            d["measurements"], "frame.measurements"),
                        scans=scans)
    if mtype == "record":
        _require_keys(d, {"type", "enabled"}, "record", optional={"perturb"})
        perturb = _expect_bool(d, "perturb", "record") if "perturb" in d else False
        return RecordMsg(enabled=_expect_bool(d, "enabled", "record"),
                         perturb=perturb)
    if mtype == "record_ack":
        _require_keys(d, {"type", "enabled", "path"}, "record_ack")
        path = d["path"]
        if path is not None and not isinstance(path, str):
            raise CodecError(ERR_SCHEMA, "record_ack: path must be null or string")
        return RecordAck(enabled=_expect_bool(d, "enabled", "record_ack"),
                         path=path)
    if mtype == "error":
        _require_keys(d, {"type", "kind", "message"}, "error")
        return ErrorMsg(kind=_expect_str(d, "kind", "error"),
                        message=_expect_str(d, "message", "error"))
    if mtype == "bye":
        _require_keys(d, {"type"}, "bye")
        return ByeMsg()
    if mtype == "act":
        _require_keys(d, {"type", "command", "frame"}, "act")
        command = _expect_str(d, "command", "act")
        if command not in DRIVING_COMMANDS:
            raise CodecError(ERR_SCHEMA, f"act: unknown command {command!r}")
        frame = from_wire(d["frame"])
        if not isinstance(frame, FrameMsg):
            raise CodecError(ERR_SCHEMA, "act: frame field must be a frame message")
        return ActMsg(frame=frame, command=command)
    raise CodecError(ERR_SCHEMA, f"unknown message type {mtype!r}")


# -- framing -----------------------------------------------------------------

def encode(msg) -> bytes:
    """Message -> one length-prefixed wire frame."""
    body = json.dumps(to_wire(msg), separators=(",", ":"),
                      sort_keys=True).encode("utf-8")
    if len(body) > MAX_FRAME_BYTES:
        raise ProtocolError(ERR_OVERSIZE,
                            f"frame body of {len(body)} bytes exceeds the cap")
    return struct.pack(">I", len(body)) + body


def decode(frame: bytes):
    """One wire frame -> message; raises CodecError, never crashes."""
    if len(frame) < 4:
        raise CodecError(ERR_TRUNCATED, "frame shorter than the length prefix")
    (n,) = struct.unpack(">I", frame[:4])
    if n > MAX_FRAME_BYTES:
        raise CodecError(ERR_OVERSIZE, f"declared length {n} exceeds the cap")
    if len(frame) != 4 + n:
        raise CodecError(ERR_TRUNCATED,
                         f"frame has {len(frame) - 4} body bytes, declared {n}")
    try:
        data = json.loads(frame[4:].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CodecError(ERR_SCHEMA, f"frame body is not valid JSON: {exc}") from exc
    return from_wire(data)


def decode_body(body: bytes):
    """Decode a frame body without the length prefix (websocket path)."""
    if len(body) > MAX_FRAME_BYTES:
        raise CodecError(ERR_OVERSIZE, "payload exceeds the frame cap")
    try:
        data = json.loads(body.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CodecError(ERR_SCHEMA, f"payload is not valid JSON: {exc}") from exc
    return from_wire(data)


def town_summary(town: TownMap) -> dict:
    """Static town payload shipped in hello_ack (everything a top-down
    renderer needs; the nav grid stays server-side)."""
    return {
        "id": town.id,
        "declared_km": town.declared_km,
        "bounds": list(town.bounds),
        "roads": [{"centerline": [[p[0], p[1]] for p in r.centerline],
                   "half_width": r.half_width} for r in town.roads],
        "intersections": [[[p[0], p[1]] for p in i.box]
                          for i in town.intersections],
        "sidewalks": [[[p[0], p[1]] for p in poly] for poly in town.sidewalks],
        "obstacles": [{"polygon": [[p[0], p[1]] for p in o.polygon],
                       "class": o.semantic_class} for o in town.obstacles],
        "lights": [[l.position[0], l.position[1]] for l in town.lights],
        "spawn_count": len(town.spawn_player),
    }


# -- lockstep session ---------------------------------------------------------

PHASE_AWAITING = "awaiting-handshake"
PHASE_CONFIGURED = "configured"
PHASE_STEPPING = "stepping"
PHASE_CLOSED = "closed"


class Session:
    """One client's lockstep session: exactly one frame out per meta or
    control in. Transport-independent; the server and the in-process client
    both drive this object."""

    def __init__(self, town: TownMap, demo_dir: str | None = None,
                 demo_seed: int = 0):
        self.town = town
        self.phase = PHASE_AWAITING
        self.world: WorldState | None = None
        self.demo_dir = demo_dir
        self.demo_seed = demo_seed
        self._writer: DemoWriter | None = None
        self._perturb: PerturbationStream | None = None
        self._demo_count = 0

    # recording ----------------------------------------------------------

    def _start_recording(self, perturb: bool) -> str:
        import os
        from pathlib import Path
        base = Path(self.demo_dir or ".")
        base.mkdir(parents=True, exist_ok=True)
        meta = self.world.meta
        path = base / f"demo_{self.town.id}_{self._demo_count:03d}.jsonl"
        self._demo_count += 1
        cfg = PerturbationConfig() if perturb else None
        self._writer = DemoWriter(
            path, town_id=self.town.id, weather=meta.weather,
            seed_vehicles=meta.seed_vehicles,
            seed_pedestrians=meta.seed_pedestrians,
            player_spawn_index=meta.player_spawn_index,
            num_vehicles=meta.num_vehicles,
            num_pedestrians=meta.num_pedestrians, cameras=meta.cameras,
            perturbation=cfg)
        if perturb:
            import random
            self._perturb = PerturbationStream(cfg, random.Random(self.demo_seed))
        else:
            self._perturb = None
        return str(path)

    def _stop_recording(self) -> None:
        if self._writer is not None:
            self._writer.close()
            self._writer = None
        self._perturb = None

    # frame assembly -------------------------------------------------------

    def build_frame(self) -> FrameMsg:
        from .sensors import assemble_measurements
        world = self.world
        measurements = assemble_measurements(world, self.town)
        scans = []
        for cfg in world.meta.cameras:
            scan = render(world, self.town, cfg)
            scans.append(WireScan.from_scan(scan, cfg))
        return FrameMsg(tick=world.tick, measurements=measurements,
                        scans=tuple(scans))

    # message handling -------------------------------------------------------

    def handle(self, msg):
        """Process one message; returns the reply message."""
        if self.phase == PHASE_CLOSED:
            raise SessionError(ERR_PROTOCOL, "session is closed")
        if isinstance(msg, Hello):
            if self.phase != PHASE_AWAITING:
                raise SessionError(ERR_PROTOCOL, "duplicate handshake")
            if msg.version != PROTOCOL_VERSION:
                raise SessionError(
                    ERR_PROTOCOL,
                    f"version mismatch: server speaks {PROTOCOL_VERSION}, "
                    f"client sent {msg.version}")
            self.phase = PHASE_CONFIGURED
            return HelloAck(version=PROTOCOL_VERSION,
                            town=town_summary(self.town))
        if isinstance(msg, MetaMsg):
            if self.phase not in (PHASE_CONFIGURED, PHASE_STEPPING):
                raise SessionError(ERR_PROTOCOL,
                                   "meta-command before handshake")
            self._stop_recording()
            try:
                self.world = apply_meta(self.town, msg.meta)
            except MetaError as exc:
                raise SessionError(ERR_META, str(exc)) from exc
            self.phase = PHASE_STEPPING
            return self.build_frame()
        if isinstance(msg, ControlMsg):
            if self.phase != PHASE_STEPPING:
                raise SessionError(ERR_PROTOCOL,
                                   "control before the first meta-command")
            applied = msg.control
            if self._perturb is not None:
                applied_steer = self._perturb.apply(self.world.tick,
                                                    msg.control.steer)
                applied = Control(steer=applied_steer,
                                  throttle=msg.control.throttle,
                                  brake=msg.control.brake,
                                  hand_brake=msg.control.hand_brake,
                                  reverse=msg.control.reverse)
            if self._writer is not None:
                frame = self.build_frame()
                command = msg.command or "follow-lane"
                self._writer.write(
                    DemoSample(tick=self.world.tick, frame_id=self.world.tick,
                               command=command, action=msg.control,
                               applied=applied,
                               speed_kmh=self.world.player.speed * 3.6),
                    to_wire(frame))
            step(self.world, self.town, applied)
            return self.build_frame()
        if isinstance(msg, RecordMsg):
            if self.phase != PHASE_STEPPING:
                raise SessionError(ERR_PROTOCOL,
                                   "recording requires a configured world")
            if msg.enabled and self._writer is None:
                path = self._start_recording(msg.perturb)
                return RecordAck(enabled=True, path=path)
            if not msg.enabled:
                path = str(self._writer.path) if self._writer else None
                self._stop_recording()
                return RecordAck(enabled=False, path=path)
            return RecordAck(enabled=True, path=str(self._writer.path))
        if isinstance(msg, ByeMsg):
            self.close()
            return ByeMsg()
        raise SessionError(ERR_PROTOCOL,
                           f"unexpected message {type(msg).__name__}")

    def close(self) -> None:
        self._stop_recording()
        self.phase = PHASE_CLOSED


class InProcessClient:
    """Session driven directly with message objects; mirrors SimClient."""

    def __init__(self, town: TownMap, demo_dir: str | None = None,
                 demo_seed: int = 0):
        self.session = Session(town, demo_dir=demo_dir, demo_seed=demo_seed)
        ack = self.session.handle(Hello())
        self.town_payload = ack.town

    def reset(self, meta: MetaCommand) -> FrameMsg:
        return self.session.handle(MetaMsg(meta=meta))

    def step(self, control: Control, command: str | None = None) -> FrameMsg:
        return self.session.handle(ControlMsg(control=control, command=command))

    def set_recording(self, enabled: bool, perturb: bool = False) -> RecordAck:
        return self.session.handle(RecordMsg(enabled=enabled, perturb=perturb))

    def close(self) -> None:
        self.session.close()
