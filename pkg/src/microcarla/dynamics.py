"""Simulation kernel.

Lockstep world stepping at a fixed 10 Hz: kinematic bicycle integration for
the player, lane-following traffic with turn choices drawn from a seeded
stream, cost-grid pedestrian wandering, traffic-light cycling, contact
handling with per-type damage accumulators, and the footprint-overlap
fractions recomputed every tick.

One WorldState is owned by exactly one stepping loop; stepping mutates the
world in place and returns it. Identical (meta, control stream) pairs
produce bit-identical state sequences.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

from . import geometry as geo
from .geometry import Point
from .town import (KIND_INTERSECTION, KIND_OPPOSITE_LANE, KIND_OWN_LANE,
                   KIND_SIDEWALK, Pose, TownMap)
from .weather import WEATHER_NAMES, get_preset

if TYPE_CHECKING:
    from .sensors import CameraConfig

DT = 0.1  # s, fixed lockstep tick
WHEELBASE = 2.7  # m
MAX_STEER = math.radians(35.0)  # wheel angle at |steer| = 1
ACCEL_PER_THROTTLE = 4.0  # m/s^2
DECEL_PER_BRAKE = 8.0  # m/s^2
ROLLING_DECEL = 0.5  # m/s^2 when coasting
SPEED_CAP = 50.0  # m/s
CAR_LENGTH = 4.0
CAR_WIDTH = 1.8

PED_RADIUS = 0.3
PED_SPEED_RANGE = (0.5, 2.0)  # m/s
PED_RESPAWN_DELAY = 5.0  # s
PED_VEHICLE_AVOID = 3.0  # m
PED_LOITER_TICKS = 60  # retarget after 6 s without net displacement
PED_LOITER_RADIUS = 2.0
PED_ROAD_CLEARANCE = 8.0  # keep off road cells with a vehicle this close
PED_PROPS = ("none", "umbrella", "shopping bags", "smartphone",
             "guitar case", "suitcase")

NPC_ACCEL = 3.0  # m/s^2
NPC_DECEL = 6.0
NPC_COMFORT_KMH = (25.0, 45.0)  # comfort cruise drawn per vehicle
NPC_TURN_SPEED = 4.0  # m/s through intersections
NPC_GAP_STOP = 8.0  # m, stop behind a leader closer than this
NPC_GAP_FOLLOW = 15.0
NPC_LIGHT_STOP_DIST = 15.0
NPC_CREEP_AFTER_TICKS = 80  # stuck in a box this long: creep out
NPC_CREEP_SPEED = 2.0  # m/s
NPC_CREEP_GAP = 4.0  # creep mode only yields to bodies this close ahead

MASS_FACTOR = {"car": 1000.0, "pedestrian": 80.0, "static": 1000.0}
DAMAGE_KINDS = ("car", "pedestrian", "static")


@dataclass(frozen=True)
class Control:
    """Driver command; all fields already range-valid inside the kernel."""
    steer: float = 0.0  # [-1, 1]
    throttle: float = 0.0  # [0, 1]
    brake: float = 0.0  # [0, 1]
    hand_brake: bool = False
    reverse: bool = False


def clamp_control(steer: float, throttle: float, brake: float,
                  hand_brake: bool = False, reverse: bool = False) -> tuple[Control, bool]:
    """Clamp raw values into the legal ranges; the protocol boundary uses
    this and reports whether anything was out of range."""
    c_steer = min(1.0, max(-1.0, float(steer)))
    c_throttle = min(1.0, max(0.0, float(throttle)))
    c_brake = min(1.0, max(0.0, float(brake)))
    clamped = (c_steer != steer or c_throttle != throttle or c_brake != brake)
    return Control(c_steer, c_throttle, c_brake, bool(hand_brake), bool(reverse)), clamped


@dataclass(frozen=True)
class OrientedRect:
    center: Point
    heading: float
    length: float
    width: float

    @property
    def polygon(self) -> list[Point]:
        return geo.oriented_rect(self.center, self.heading, self.length, self.width)

    @property
    def area(self) -> float:
        return self.length * self.width


@dataclass
class VehicleState:
    x: float
    y: float
    heading: float
    speed: float = 0.0  # signed m/s, negative while reversing
    last_control: Control = field(default_factory=Control)

    @property
    def position(self) -> Point:
        return (self.x, self.y)

    @property
    def pose(self) -> Pose:
        return Pose(self.x, self.y, self.heading)

    @property
    def velocity(self) -> Point:
        return (self.speed * math.cos(self.heading),
                self.speed * math.sin(self.heading))

    def footprint(self) -> OrientedRect:
        return OrientedRect((self.x, self.y), self.heading, CAR_LENGTH, CAR_WIDTH)


@dataclass
class NpcBrain:
    """Lane follower: tracks a polyline (a lane centerline or an
    intersection connector) by arc length."""
    edge_key: tuple[int, int]
    in_connector: bool
    points: list[Point]
    cumlen: list[float]
    s: float
    comfort: float  # m/s
    pending_choice: tuple[int, int] | None = None  # turn drawn, entry deferred
    wait_ticks: int = 0  # consecutive ticks stationary inside a connector


@dataclass
class PedestrianState:
    x: float
    y: float
    speed: float
    target_cell: tuple[int, int]
    prop: str = "none"
    alive: bool = True
    respawn_timer: float = 0.0
    heading: float = 0.0
    prev_cell: tuple[int, int] | None = None
    # loiter detection: net displacement from an anchor, not cell changes,
    # so greedy two-cell oscillation still counts as stuck
    anchor: Point | None = None
    anchor_ticks: int = 0

    @property
    def position(self) -> Point:
        return (self.x, self.y)


@dataclass(frozen=True)
class MetaCommand:
    """Session reset request; validated against the town before use."""
    num_vehicles: int = 0
    num_pedestrians: int = 0
    weather: str = "Clear Midday"
    seed_vehicles: int = 0
    seed_pedestrians: int = 0
    cameras: tuple["CameraConfig", ...] = ()
    player_spawn_index: int = 0


class MetaError(ValueError):
    """The meta-command cannot be applied to the loaded town."""


@dataclass
class WorldState:
    meta: MetaCommand
    tick: int
    player: VehicleState
    npcs: list[VehicleState]
    npc_brains: list[NpcBrain]
    pedestrians: list[PedestrianState]
    rng_vehicles: random.Random
    rng_pedestrians: random.Random
    damage: dict[str, float]
    opposite_frac: float = 0.0
    sidewalk_frac: float = 0.0
    contacts: set = field(default_factory=set)
    prev_velocity: Point = (0.0, 0.0)
    acceleration: Point = (0.0, 0.0)  # finite difference over the last tick

    @property
    def sim_time(self) -> float:
        return self.tick * DT

    @property
    def weather(self) -> str:
        return self.meta.weather

    def light_states(self, town: TownMap) -> list[str]:
        return [light.state_at(self.sim_time) for light in town.lights]


# -- world construction ------------------------------------------------------

def apply_meta(town: TownMap, meta: MetaCommand) -> WorldState:
    """Fresh world at tick 0 per the reset request."""
    if meta.weather not in WEATHER_NAMES:
        raise MetaError(f"unknown weather preset {meta.weather!r}")
    if not 0 <= meta.player_spawn_index < len(town.spawn_player):
        raise MetaError(
            f"player spawn index {meta.player_spawn_index} out of range "
            f"(town has {len(town.spawn_player)} player spawn points)")
    if meta.num_vehicles < 0 or meta.num_vehicles > len(town.spawn_vehicles):
        raise MetaError(
            f"vehicle count {meta.num_vehicles} exceeds the "
            f"{len(town.spawn_vehicles)} vehicle spawn points")
    if meta.num_pedestrians < 0 or meta.num_pedestrians > len(town.spawn_pedestrians):
        raise MetaError(
            f"pedestrian count {meta.num_pedestrians} exceeds the "
            f"{len(town.spawn_pedestrians)} pedestrian spawn points")

    rng_v = random.Random(meta.seed_vehicles)
    rng_p = random.Random(meta.seed_pedestrians)

    spawn = town.spawn_player[meta.player_spawn_index]
    player = VehicleState(spawn.x, spawn.y, spawn.heading)

    npcs: list[VehicleState] = []
    brains: list[NpcBrain] = []
    for idx in rng_v.sample(range(len(town.spawn_vehicles)), meta.num_vehicles):
        pose = town.spawn_vehicles[idx]
        proj = town.project_to_edge(pose.point, pose.heading)
        if proj is None:
            raise MetaError(f"vehicle spawn point {idx} is not on a lane")
        edge, s, _ = proj
        npcs.append(VehicleState(pose.x, pose.y, pose.heading))
        brains.append(NpcBrain(
            edge_key=edge.key, in_connector=False,
            points=list(edge.lane_points), cumlen=list(edge.lane_cumlen), s=s,
            comfort=rng_v.uniform(*NPC_COMFORT_KMH) / 3.6))

    pedestrians: list[PedestrianState] = []
    for idx in rng_p.sample(range(len(town.spawn_pedestrians)), meta.num_pedestrians):
        pose = town.spawn_pedestrians[idx]
        ped = PedestrianState(
            x=pose.x, y=pose.y, speed=rng_p.uniform(*PED_SPEED_RANGE),
            target_cell=_random_walkable_cell(town, rng_p),
            prop=rng_p.choice(PED_PROPS))
        pedestrians.append(ped)

    return WorldState(meta=meta, tick=0, player=player, npcs=npcs,
                      npc_brains=brains, pedestrians=pedestrians,
                      rng_vehicles=rng_v, rng_pedestrians=rng_p,
                      damage={k: 0.0 for k in DAMAGE_KINDS})


def _random_walkable_cell(town: TownMap, rng: random.Random) -> tuple[int, int]:
    grid = town.nav_grid
    for _ in range(200):
        cell = (rng.randrange(grid.width), rng.randrange(grid.height))
        if grid.cost(cell) <= 3.0:
            return cell
    return (grid.width // 2, grid.height // 2)


# -- stepping ---------------------------------------------------------------

def step(world: WorldState, town: TownMap, control: Control) -> WorldState:
    """Advance exactly one tick. Mutates and returns ``world``."""
    friction = get_preset(world.weather).friction
    _integrate_player(world.player, control, friction)
    bodies = [(world.player.position, world.player.speed, False)] + \
        [(n.position, n.speed, b.in_connector)
         for n, b in zip(world.npcs, world.npc_brains)]
    for i, (npc, brain) in enumerate(zip(world.npcs, world.npc_brains)):
        _step_npc(world, town, npc, brain, bodies, i + 1)
    for ped in world.pedestrians:
        _step_pedestrian(world, town, ped)
    collide(world, town)
    rect = world.player.footprint()
    world.opposite_frac = overlap_fraction(rect, town, KIND_OPPOSITE_LANE)
    world.sidewalk_frac = overlap_fraction(rect, town, KIND_SIDEWALK)
    world.tick += 1
    vel = world.player.velocity
    world.acceleration = ((vel[0] - world.prev_velocity[0]) / DT,
                          (vel[1] - world.prev_velocity[1]) / DT)
    world.prev_velocity = vel
    world.player.last_control = control
    return world


def _integrate_player(player: VehicleState, control: Control, friction: float) -> None:
    v = player.speed
    brake = 1.0 if control.hand_brake else control.brake
    if control.throttle > 0.0:
        direction = -1.0 if control.reverse else 1.0
        v += direction * ACCEL_PER_THROTTLE * control.throttle * friction * DT
    if brake > 0.0:
        v = math.copysign(max(0.0, abs(v) - DECEL_PER_BRAKE * brake * friction * DT), v)
    if control.throttle == 0.0 and brake == 0.0:
        v = math.copysign(max(0.0, abs(v) - ROLLING_DECEL * DT), v)
    v = min(SPEED_CAP, max(-SPEED_CAP, v))
    player.x += v * math.cos(player.heading) * DT
    player.y += v * math.sin(player.heading) * DT
    player.heading = geo.wrap_angle(
        player.heading + v / WHEELBASE * math.tan(control.steer * MAX_STEER) * DT)
    player.speed = v


def _npc_target_speed(world: WorldState, town: TownMap, npc: VehicleState,
                      brain: NpcBrain, bodies, self_index: int) -> float:
    road = town.road(brain.edge_key[0])
    target = min(road.speed_limit / 3.6, brain.comfort)
    if brain.in_connector:
        target = min(target, NPC_TURN_SPEED)
    hx, hy = math.cos(npc.heading), math.sin(npc.heading)
    px, py = npc.x, npc.y
    # after waiting this long inside a box, push through at walking pace,
    # yielding only to bodies directly at the nose (breaks wait cycles)
    creep = brain.in_connector and brain.wait_ticks >= NPC_CREEP_AFTER_TICKS
    # keep distance to the nearest body ahead in the corridor
    for i, (pos, speed, other_connector) in enumerate(bodies):
        if i == self_index:
            continue
        rx, ry = pos[0] - px, pos[1] - py
        if abs(rx) > NPC_GAP_FOLLOW or abs(ry) > NPC_GAP_FOLLOW:
            continue
        ahead = hx * rx + hy * ry
        lateral = abs(hx * ry - hy * rx)
        if creep:
            if 0.0 < ahead < NPC_CREEP_GAP and lateral < 1.8:
                return 0.0
            continue
        if 0.5 < ahead < NPC_GAP_FOLLOW and lateral < 3.0:
            # two crossing vehicles stalled inside one box: the lower index
            # has right of way, so symmetric standoffs cannot lock up
            if brain.in_connector and other_connector and lateral > 2.0 and \
                    abs(speed) < 0.3 and self_index < i:
                continue
            if ahead < NPC_GAP_STOP:
                return 0.0
            target = min(target, max(0.0, speed))
    if creep:
        target = min(target, NPC_CREEP_SPEED)
    ped_gap, ped_lat = (3.0, 1.8) if creep else (8.0, 2.5)
    for ped in world.pedestrians:
        if not ped.alive:
            continue
        rx, ry = ped.x - px, ped.y - py
        if abs(rx) > 8.0 or abs(ry) > 8.0:
            continue
        ahead = hx * rx + hy * ry
        if 0.0 < ahead < ped_gap and abs(hx * ry - hy * rx) < ped_lat:
            return 0.0
    if not brain.in_connector:
        light = town.approach_light(*brain.edge_key)
        if light is not None and light.state_at(world.sim_time) == "red":
            dist_to_end = brain.cumlen[-1] - brain.s
            if dist_to_end < NPC_LIGHT_STOP_DIST:
                return 0.0
    return target


def _step_npc(world: WorldState, town: TownMap, npc: VehicleState,
              brain: NpcBrain, bodies, self_index: int) -> None:
    target = _npc_target_speed(world, town, npc, brain, bodies, self_index)
    v = npc.speed
    if v < target:
        v = min(target, v + NPC_ACCEL * DT)
    else:
        v = max(target, v - NPC_DECEL * DT)
    if brain.in_connector and abs(v) < 0.05:
        brain.wait_ticks += 1
    else:
        brain.wait_ticks = 0
    s = brain.s + v * DT
    end = brain.cumlen[-1]
    while s >= end:
        if brain.in_connector:
            edge = town.edge(*brain.edge_key)
            brain.in_connector = False
            brain.points = list(edge.lane_points)
            brain.cumlen = list(edge.lane_cumlen)
            s -= end
            end = brain.cumlen[-1]
            continue
        edge = town.edge(*brain.edge_key)
        light = town.approach_light(*brain.edge_key)
        if light is not None and light.state_at(world.sim_time) == "red":
            s = end - 0.01  # hold at the stop line; do not enter on red
            v = 0.0
            break
        if brain.pending_choice is None:
            options = [e for e in town.edges_from(edge.node_to)
                       if e.key != (edge.road_id, -edge.direction)]
            if not options:
                options = town.edges_from(edge.node_to)
            options.sort(key=lambda e: e.key)
            brain.pending_choice = world.rng_vehicles.choice(options).key
        nxt = town.edge(*brain.pending_choice)
        if _exit_blocked(world, nxt, npc):
            s = end - 0.01  # do not block the box while the exit is jammed
            v = 0.0
            break
        brain.pending_choice = None
        connector = town.turn_connector(edge, nxt)
        brain.edge_key = nxt.key
        brain.in_connector = True
        brain.points = connector
        brain.cumlen = geo.polyline_lengths(connector)
        s -= end
        end = brain.cumlen[-1]
    brain.s = s
    npc.speed = v
    pos = geo.point_along_polyline(brain.points, brain.cumlen, s)
    tangent = geo.tangent_along_polyline(brain.points, brain.cumlen, s)
    npc.x, npc.y = pos
    npc.heading = math.atan2(tangent[1], tangent[0])


def _exit_blocked(world: WorldState, nxt_edge, self_npc: VehicleState) -> bool:
    """A stalled vehicle sitting on the first metres of the chosen exit
    lane; queued vehicles beside the box (including the asker itself at its
    stop line) do not count."""
    entry = nxt_edge.lane_points[0]
    dx, dy = geo.tangent_along_polyline(list(nxt_edge.lane_points),
                                        list(nxt_edge.lane_cumlen), 0.0)

    def stalled_on_exit(veh: VehicleState) -> bool:
        if veh is self_npc or abs(veh.speed) >= 0.5:
            return False
        rx, ry = veh.x - entry[0], veh.y - entry[1]
        along = dx * rx + dy * ry
        lateral = abs(dx * ry - dy * rx)
        return -2.0 < along < 9.0 and lateral < 2.0

    if stalled_on_exit(world.player):
        return True
    for other, ob in zip(world.npcs, world.npc_brains):
        if ob.in_connector:
            continue
        if stalled_on_exit(other):
            return True
    return False


_NEIGHBOR_STEPS = ((1, 0), (-1, 0), (0, 1), (0, -1),
                   (1, 1), (1, -1), (-1, 1), (-1, -1))


def _is_road_cell(town: TownMap, cell: tuple[int, int]) -> bool:
    kind = town.classify(town.nav_grid.center_of(cell), 0.0).kind
    return kind in (KIND_OWN_LANE, KIND_OPPOSITE_LANE, KIND_INTERSECTION)


def _vehicle_within(world: WorldState, p: Point, radius: float) -> bool:
    if abs(world.player.x - p[0]) < radius and \
            abs(world.player.y - p[1]) < radius and \
            geo.dist(world.player.position, p) < radius:
        return True
    for veh in world.npcs:
        if abs(veh.x - p[0]) < radius and abs(veh.y - p[1]) < radius and \
                geo.dist(veh.position, p) < radius:
            return True
    return False


def _step_pedestrian(world: WorldState, town: TownMap, ped: PedestrianState) -> None:
    grid = town.nav_grid
    if not ped.alive:
        ped.respawn_timer -= DT
        if ped.respawn_timer <= 1e-9:
            rng = world.rng_pedestrians
            idx = rng.randrange(len(town.spawn_pedestrians))
            pose = town.spawn_pedestrians[idx]
            ped.x, ped.y = pose.x, pose.y
            ped.alive = True
            ped.respawn_timer = 0.0
            ped.speed = rng.uniform(*PED_SPEED_RANGE)
            ped.target_cell = _random_walkable_cell(town, rng)
            ped.prop = rng.choice(PED_PROPS)
            ped.prev_cell = None
            ped.stuck = 0
        return
    # freeze near moving vehicles rather than stepping under them; a parked
    # vehicle only blocks at arm's length, so traffic jams cannot deadlock
    # against waiting pedestrians
    def blocked_by(veh: VehicleState) -> bool:
        if abs(veh.x - ped.x) >= PED_VEHICLE_AVOID or \
                abs(veh.y - ped.y) >= PED_VEHICLE_AVOID:
            return False
        d = geo.dist(veh.position, ped.position)
        if d >= PED_VEHICLE_AVOID:
            return False
        return abs(veh.speed) > 0.2 or d < 1.5

    if blocked_by(world.player):
        return
    for veh in world.npcs:
        if blocked_by(veh):
            return
    cell = grid.cell_of(ped.position)
    if cell is None:
        ped.target_cell = _random_walkable_cell(town, world.rng_pedestrians)
        return
    if cell == ped.target_cell:
        ped.target_cell = _random_walkable_cell(town, world.rng_pedestrians)
        ped.prev_cell = None
        ped.anchor = None
        return
    tx, ty = grid.center_of(ped.target_cell)
    candidates: list[tuple[float, tuple[int, int]]] = []
    for dx, dy in _NEIGHBOR_STEPS:
        ncell = (cell[0] + dx, cell[1] + dy)
        if not (0 <= ncell[0] < grid.width and 0 <= ncell[1] < grid.height):
            continue
        if ncell == ped.prev_cell:
            continue
        cx, cy = grid.center_of(ncell)
        score = grid.cost(ncell) * grid.cell_size + math.hypot(tx - cx, ty - cy)
        candidates.append((score, ncell))
    candidates.sort()
    best = None
    for score, ncell in candidates:
        # never step onto road surface while a vehicle is anywhere near:
        # wait at the curb instead of wandering through hazard corridors
        if _is_road_cell(town, ncell) and \
                _vehicle_within(world, grid.center_of(ncell), PED_ROAD_CLEARANCE):
            continue
        best = (score, ncell)
        break
    if best is None:
        return
    nx, ny = grid.center_of(best[1])
    direction = geo.unit((nx - ped.x, ny - ped.y))
    step_len = ped.speed * DT
    ped.x += direction[0] * step_len
    ped.y += direction[1] * step_len
    ped.heading = math.atan2(direction[1], direction[0])
    new_cell = grid.cell_of(ped.position)
    if new_cell != cell:
        ped.prev_cell = cell
    if ped.anchor is None or geo.dist(ped.position, ped.anchor) > PED_LOITER_RADIUS:
        ped.anchor = ped.position
        ped.anchor_ticks = 0
    else:
        ped.anchor_ticks += 1
        if ped.anchor_ticks > PED_LOITER_TICKS:
            ped.target_cell = _random_walkable_cell(town, world.rng_pedestrians)
            ped.prev_cell = None
            ped.anchor = None
            ped.anchor_ticks = 0


def collide(world: WorldState, town: TownMap) -> None:
    """Resolve player contacts: add damage once per new contact, delete hit
    pedestrians, stop the car against rigid bodies."""
    player = world.player
    rect = player.footprint().polygon
    bounds = geo.polygon_bounds(rect)
    pvel = player.velocity
    current: set = set()

    for i, npc in enumerate(world.npcs):
        if geo.dist(npc.position, player.position) > CAR_LENGTH + 1.0:
            continue
        if geo.convex_overlap(rect, npc.footprint().polygon):
            key = ("car", i)
            current.add(key)
            if key not in world.contacts:
                rel = geo.norm(geo.sub(pvel, npc.velocity))
                world.damage["car"] += MASS_FACTOR["car"] * rel
                player.speed = 0.0
                npc.speed = 0.0

    for j, ped in enumerate(world.pedestrians):
        if not ped.alive:
            continue
        if geo.dist(ped.position, player.position) > CAR_LENGTH:
            continue
        if geo.circle_convex_overlap(ped.position, PED_RADIUS, rect):
            key = ("pedestrian", j)
            current.add(key)
            if key not in world.contacts:
                pv = (ped.speed * math.cos(ped.heading),
                      ped.speed * math.sin(ped.heading))
                rel = geo.norm(geo.sub(pvel, pv))
                world.damage["pedestrian"] += MASS_FACTOR["pedestrian"] * rel
                ped.alive = False
                ped.respawn_timer = PED_RESPAWN_DELAY

    for kind, idx in town.regions_near(bounds):
        if kind != "obst":
            continue
        poly = list(town.obstacles[idx].polygon)
        if geo.convex_overlap(rect, poly):
            key = ("static", idx)
            current.add(key)
            if key not in world.contacts:
                world.damage["static"] += MASS_FACTOR["static"] * abs(player.speed)
                player.speed = 0.0

    world.contacts = current


def overlap_fraction(footprint: OrientedRect, town: TownMap, kind: str) -> float:
    """Fraction of the footprint area lying on regions of the given kind,
    by exact polygon clipping against the (validated disjoint) region set."""
    if kind not in (KIND_OPPOSITE_LANE, KIND_SIDEWALK):
        raise ValueError(f"overlap kind must be opposite-lane or sidewalk, got {kind}")
    rect = footprint.polygon
    bounds = geo.polygon_bounds(rect)
    hv = geo.heading_vec(footprint.heading)
    area = 0.0
    for region_kind, idx in town.regions_near(bounds):
        if kind == KIND_OPPOSITE_LANE and region_kind == "lane":
            region = town.lane_regions[idx]
            if geo.dot(hv, region.travel_dir) < 0.0:
                area += geo.clip_area(list(region.quad), rect)
        elif kind == KIND_SIDEWALK and region_kind == "side":
            area += geo.clip_area(list(town.sidewalks[idx]), rect)
    frac = area / footprint.area
    return min(1.0, max(0.0, frac))
