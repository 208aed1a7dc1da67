"""Pseudo-sensors and the per-tick measurement record.

Cameras are planar raycast scans: a semantic scan returns one class id per
ray from the twelve-class palette, a depth scan returns the range to the
nearest vertical entity or max_range. The rgb-proxy kind is the semantic
scan with weather-dependent per-ray class noise, for consumers that want an
imperfect channel.
"""

from __future__ import annotations

import math
import random
import struct
import zlib
from dataclasses import dataclass

import numpy as np

from . import geometry as geo
from .dynamics import CAR_LENGTH, CAR_WIDTH, DT, PED_RADIUS, WorldState
from .geometry import Point
from .town import (KIND_INTERSECTION, KIND_OPPOSITE_LANE, KIND_OWN_LANE,
                   KIND_SIDEWALK, SEMANTIC_CLASSES, TownMap)
from .weather import get_preset

SCAN_SEMANTIC = "semantic"
SCAN_DEPTH = "depth"
SCAN_RGB_PROXY = "rgb-proxy"
SCAN_KINDS = (SCAN_SEMANTIC, SCAN_DEPTH, SCAN_RGB_PROXY)

CLASS_INDEX = {name: i for i, name in enumerate(SEMANTIC_CLASSES)}
_CLASS_ROAD = CLASS_INDEX["road"]
_CLASS_MARKING = CLASS_INDEX["lane-marking"]
_CLASS_SIDEWALK = CLASS_INDEX["sidewalk"]
_CLASS_VEHICLE = CLASS_INDEX["vehicle"]
_CLASS_PEDESTRIAN = CLASS_INDEX["pedestrian"]
_CLASS_OTHER = CLASS_INDEX["other"]

# nearer wins; at exact ties pedestrians beat vehicles beat static classes
_TIE_RANK = {_CLASS_PEDESTRIAN: 0, _CLASS_VEHICLE: 1}
_MIN_RANGE = 1e-3


@dataclass(frozen=True)
class CameraConfig:
    kind: str = SCAN_SEMANTIC
    x: float = 0.0  # mount offset forward of the player centre, metres
    y: float = 0.0  # mount offset to the left, metres
    yaw: float = 0.0  # mount rotation relative to the player heading
    fov: float = math.radians(100.0)
    ray_count: int = 180
    max_range: float = 50.0

    def validate(self) -> None:
        if self.kind not in SCAN_KINDS:
            raise ValueError(f"unknown camera kind {self.kind!r}")
        if not 0.0 < self.fov <= geo.TWO_PI:
            raise ValueError("camera fov must be in (0, 2*pi]")
        if self.ray_count < 1:
            raise ValueError("camera ray_count must be >= 1")
        if self.max_range <= 0.0:
            raise ValueError("camera max_range must be positive")

    def to_dict(self) -> dict:
        return {"kind": self.kind, "x": self.x, "y": self.y, "yaw": self.yaw,
                "fov": self.fov, "ray_count": self.ray_count,
                "max_range": self.max_range}

    @classmethod
    def from_dict(cls, d: dict) -> "CameraConfig":
        cfg = cls(kind=d["kind"], x=d["x"], y=d["y"], yaw=d["yaw"],
                  fov=d["fov"], ray_count=d["ray_count"],
                  max_range=d["max_range"])
        cfg.validate()
        return cfg


DEFAULT_CAMERAS: tuple[CameraConfig, ...] = (
    CameraConfig(kind=SCAN_SEMANTIC),
    CameraConfig(kind=SCAN_DEPTH),
)


@dataclass(frozen=True)
class SemanticScan:
    classes: tuple[int, ...]


@dataclass(frozen=True)
class DepthScan:
    ranges: tuple[float, ...]


@dataclass(frozen=True)
class AgentInfo:
    kind: str  # "vehicle" | "pedestrian"
    x: float
    y: float
    heading: float
    half_length: float
    half_width: float


@dataclass(frozen=True)
class LightInfo:
    x: float
    y: float
    state: str


@dataclass(frozen=True)
class SignInfo:
    x: float
    y: float
    limit: float


@dataclass(frozen=True)
class Measurements:
    """Exact world snapshot delivered to the client every tick."""
    position: Point
    orientation: Point  # unit vector
    speed_kmh: float
    acceleration: Point  # m/s^2, finite difference over the last tick
    collision_car: float
    collision_pedestrian: float
    collision_static: float
    opposite_lane: float
    sidewalk: float
    sim_time: float
    agents: tuple[AgentInfo, ...]
    lights: tuple[LightInfo, ...]
    speed_signs: tuple[SignInfo, ...]

    def to_dict(self) -> dict:
        return {
            "position": [self.position[0], self.position[1]],
            "orientation": [self.orientation[0], self.orientation[1]],
            "speed_kmh": self.speed_kmh,
            "acceleration": [self.acceleration[0], self.acceleration[1]],
            "collision_car": self.collision_car,
            "collision_pedestrian": self.collision_pedestrian,
            "collision_static": self.collision_static,
            "opposite_lane": self.opposite_lane,
            "sidewalk": self.sidewalk,
            "sim_time": self.sim_time,
            "agents": [{
                "kind": a.kind, "x": a.x, "y": a.y, "heading": a.heading,
                "half_length": a.half_length, "half_width": a.half_width,
            } for a in self.agents],
            "lights": [{"x": l.x, "y": l.y, "state": l.state} for l in self.lights],
            "speed_signs": [{"x": s.x, "y": s.y, "limit": s.limit}
                            for s in self.speed_signs],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Measurements":
        return cls(
            position=(d["position"][0], d["position"][1]),
            orientation=(d["orientation"][0], d["orientation"][1]),
            speed_kmh=d["speed_kmh"],
            acceleration=(d["acceleration"][0], d["acceleration"][1]),
            collision_car=d["collision_car"],
            collision_pedestrian=d["collision_pedestrian"],
            collision_static=d["collision_static"],
            opposite_lane=d["opposite_lane"],
            sidewalk=d["sidewalk"],
            sim_time=d["sim_time"],
            agents=tuple(AgentInfo(a["kind"], a["x"], a["y"], a["heading"],
                                   a["half_length"], a["half_width"])
                         for a in d["agents"]),
            lights=tuple(LightInfo(l["x"], l["y"], l["state"]) for l in d["lights"]),
            speed_signs=tuple(SignInfo(s["x"], s["y"], s["limit"])
                              for s in d["speed_signs"]),
        )


def assemble_measurements(world: WorldState, town: TownMap) -> Measurements:
    player = world.player
    accel = world.acceleration
    agents = [AgentInfo("vehicle", n.x, n.y, n.heading,
                        CAR_LENGTH / 2.0, CAR_WIDTH / 2.0) for n in world.npcs]
    agents += [AgentInfo("pedestrian", p.x, p.y, p.heading, PED_RADIUS, PED_RADIUS)
               for p in world.pedestrians if p.alive]
    sim_time = world.sim_time
    return Measurements(
        position=(player.x, player.y),
        orientation=geo.heading_vec(player.heading),
        speed_kmh=player.speed * 3.6,
        acceleration=accel,
        collision_car=world.damage["car"],
        collision_pedestrian=world.damage["pedestrian"],
        collision_static=world.damage["static"],
        opposite_lane=world.opposite_frac,
        sidewalk=world.sidewalk_frac,
        sim_time=sim_time,
        agents=tuple(agents),
        lights=tuple(LightInfo(l.position[0], l.position[1], l.state_at(sim_time))
                     for l in town.lights),
        speed_signs=tuple(SignInfo(s.position[0], s.position[1], s.limit)
                          for s in town.speed_signs),
    )


def _noise_rng(world: WorldState, cfg: CameraConfig) -> random.Random:
    """Deterministic per-(tick, camera) noise stream derived from the meta
    seeds, so replays and repeated sessions stay bit-identical."""
    sig = struct.pack("<6dqi", cfg.x, cfg.y, cfg.yaw, cfg.fov, cfg.max_range,
                      0.0, world.tick, cfg.ray_count)
    mix = zlib.crc32(sig) ^ (world.meta.seed_vehicles * 0x9E3779B1) \
        ^ (world.meta.seed_pedestrians * 0x85EBCA77)
    return random.Random(mix & 0xFFFFFFFFFFFFFFFF)


def _static_segments(town: TownMap) -> tuple[np.ndarray, np.ndarray]:
    """Cached (segments, class ids) arrays for every obstacle edge."""
    cached = getattr(town, "_sensor_static_cache", None)
    if cached is not None:
        return cached
    segs: list[tuple[float, float, float, float]] = []
    classes: list[int] = []
    for obs in town.obstacles:
        cls = CLASS_INDEX[obs.semantic_class]
        poly = obs.polygon
        for i in range(len(poly)):
            a = poly[i]
            b = poly[(i + 1) % len(poly)]
            segs.append((a[0], a[1], b[0], b[1]))
            classes.append(cls)
    arr = (np.asarray(segs, dtype=np.float64).reshape(-1, 4),
           np.asarray(classes, dtype=np.int64))
    town._sensor_static_cache = arr
    return arr


def _marking_segments(town: TownMap) -> np.ndarray:
    cached = getattr(town, "_sensor_marking_cache", None)
    if cached is not None:
        return cached
    segs = [(a[0], a[1], b[0], b[1]) for a, b in town.boundary_segments]
    arr = np.asarray(segs, dtype=np.float64).reshape(-1, 4)
    town._sensor_marking_cache = arr
    return arr


def _ray_segment_batch(origin: Point, dirs: np.ndarray, segs: np.ndarray) -> np.ndarray:
    """Hit distances, shape (rays, segments); inf where a ray misses."""
    if segs.shape[0] == 0:
        return np.full((dirs.shape[0], 0), np.inf)
    ax, ay = segs[:, 0], segs[:, 1]
    vx, vy = segs[:, 2] - ax, segs[:, 3] - ay
    wx, wy = ax - origin[0], ay - origin[1]
    dx = dirs[:, 0:1]
    dy = dirs[:, 1:2]
    denom = dx * vy[None, :] - dy * vx[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (wx[None, :] * vy[None, :] - wy[None, :] * vx[None, :]) / denom
        u = (wx[None, :] * dy - wy[None, :] * dx) / denom
    hit = (denom != 0.0) & (t >= 0.0) & (u >= 0.0) & (u <= 1.0)
    return np.where(hit, t, np.inf)


def render(world: WorldState, town: TownMap, cfg: CameraConfig):
    """Cast the configured scan from the player-mounted camera pose."""
    cfg.validate()
    player = world.player
    ch, sh = math.cos(player.heading), math.sin(player.heading)
    origin = (player.x + cfg.x * ch - cfg.y * sh,
              player.y + cfg.x * sh + cfg.y * ch)
    base = player.heading + cfg.yaw
    n = cfg.ray_count
    if n == 1:
        angles = np.array([base])
    else:
        angles = base - cfg.fov / 2.0 + cfg.fov * np.arange(n) / (n - 1)
    dirs = np.stack([np.cos(angles), np.sin(angles)], axis=1)

    # vertical entities: tagged obstacle edges, traffic bodies, pedestrians
    static_segs, static_cls = _static_segments(town)
    seg_list = [static_segs]
    cls_list = [static_cls]
    rank_list = [np.full(static_cls.shape, 2)]
    npc_segs = []
    for npc in world.npcs:
        poly = npc.footprint().polygon
        for i in range(4):
            a, b = poly[i], poly[(i + 1) % 4]
            npc_segs.append((a[0], a[1], b[0], b[1]))
    if npc_segs:
        arr = np.asarray(npc_segs)
        seg_list.append(arr)
        cls_list.append(np.full(arr.shape[0], _CLASS_VEHICLE))
        rank_list.append(np.full(arr.shape[0], 1))
    segs = np.concatenate(seg_list, axis=0)
    cls = np.concatenate(cls_list)
    rank = np.concatenate(rank_list)

    if segs.shape[0] == 0:
        t_vert = np.full(n, np.inf)
        cls_vert = np.full(n, _CLASS_OTHER)
    else:
        t_seg = _ray_segment_batch(origin, dirs, segs)
        # order hits by (distance, tie rank) per ray
        order = np.lexsort((np.broadcast_to(rank, t_seg.shape), t_seg),
                           axis=1)[:, 0]
        t_vert = t_seg[np.arange(n), order]
        cls_vert = cls[order]

    # pedestrians as circles, overriding equal-or-nearer segment hits
    for ped in world.pedestrians:
        if not ped.alive:
            continue
        if geo.dist(ped.position, origin) > cfg.max_range + PED_RADIUS:
            continue
        for i in range(n):
            t = geo.ray_circle_hit(origin, (float(dirs[i, 0]), float(dirs[i, 1])),
                                   ped.position, PED_RADIUS)
            if t is not None and t <= t_vert[i]:
                t_vert[i] = t
                cls_vert[i] = _CLASS_PEDESTRIAN

    in_range = t_vert <= cfg.max_range
    preset = get_preset(world.weather)

    if cfg.kind == SCAN_DEPTH:
        ranges = np.where(in_range, t_vert, cfg.max_range)
        if preset.sensor_noise > 0.0:
            rng = _noise_rng(world, cfg)
            noisy = [r + rng.gauss(0.0, preset.sensor_noise) for r in ranges]
            ranges = np.clip(noisy, _MIN_RANGE, cfg.max_range)
        ranges = np.maximum(ranges, _MIN_RANGE)
        return DepthScan(ranges=tuple(float(r) for r in ranges))

    t_mark = _ray_segment_batch(origin, dirs, _marking_segments(town)).min(
        axis=1, initial=np.inf)
    classes = []
    for i in range(n):
        if t_mark[i] <= cfg.max_range and t_mark[i] < t_vert[i]:
            classes.append(_CLASS_MARKING)
        elif in_range[i]:
            classes.append(int(cls_vert[i]))
        else:
            end = (origin[0] + dirs[i, 0] * cfg.max_range,
                   origin[1] + dirs[i, 1] * cfg.max_range)
            kind = town.classify(end, 0.0).kind
            if kind in (KIND_OWN_LANE, KIND_OPPOSITE_LANE, KIND_INTERSECTION):
                classes.append(_CLASS_ROAD)
            elif kind == KIND_SIDEWALK:
                classes.append(_CLASS_SIDEWALK)
            else:
                classes.append(_CLASS_OTHER)
    if cfg.kind == SCAN_RGB_PROXY and preset.sensor_noise > 0.0:
        rng = _noise_rng(world, cfg)
        classes = [rng.randrange(len(SEMANTIC_CLASSES))
                   if rng.random() < preset.sensor_noise else c
                   for c in classes]
    return SemanticScan(classes=tuple(classes))
