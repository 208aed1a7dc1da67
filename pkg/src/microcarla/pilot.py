"""Modular driving agent.

Three stages: a privileged perception summary assembled from map queries and
the ground-truth agent list, a five-state local planner that emits waypoints
(road-following, left-turn, right-turn, intersection-forward, hazard-stop),
and a PID controller with a curvature feedforward that tracks the waypoints
at a 20 km/h cruise (14 km/h through turns).

Perception is deliberately privileged: the summary interface is where a
learned perception stack could be plugged in later.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

from . import geometry as geo
from .dynamics import CAR_LENGTH, MAX_STEER, WHEELBASE, Control
from .geometry import Point
from .planner import COMMAND_LEFT, COMMAND_RIGHT, COMMAND_STRAIGHT, turn_label
from .sensors import Measurements
from .town import KIND_INTERSECTION, DirectedEdge, Pose, TownMap

STATE_ROAD = "road-following"
STATE_LEFT = "left-turn"
STATE_RIGHT = "right-turn"
STATE_FORWARD = "intersection-forward"
STATE_HAZARD = "hazard-stop"
PLANNER_STATES = (STATE_ROAD, STATE_LEFT, STATE_RIGHT, STATE_FORWARD, STATE_HAZARD)

_TURN_STATES = {COMMAND_LEFT: STATE_LEFT, COMMAND_RIGHT: STATE_RIGHT,
                COMMAND_STRAIGHT: STATE_FORWARD}
_STATE_LABELS = {STATE_LEFT: COMMAND_LEFT, STATE_RIGHT: COMMAND_RIGHT,
                 STATE_FORWARD: COMMAND_STRAIGHT}


@dataclass(frozen=True)
class PilotConfig:
    steer_kp: float = 0.8
    steer_ki: float = 0.0
    steer_kd: float = 0.2
    speed_kp: float = 0.25
    speed_ki: float = 0.05
    speed_kd: float = 0.0
    windup_cap: float = 10.0
    cruise_kmh: float = 20.0
    turn_kmh: float = 14.0
    hazard_radius: float = 15.0  # corridor lookahead for dynamic obstacles
    corridor_half_width: float = 2.0
    approach_distance: float = 25.0  # switch into a turn state this far out
    clear_ticks: int = 10  # hazard-stop hysteresis
    deadband: float = 0.02
    cross_track_gain: float = 0.4  # rad of steering error per metre offset
    lookaheads: tuple[float, ...] = (2.0, 4.0, 6.0, 8.0, 10.0)

    @classmethod
    def from_json(cls, path: str | Path) -> "PilotConfig":
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        if "lookaheads" in data:
            data["lookaheads"] = tuple(float(v) for v in data["lookaheads"])
        return cls(**data)

    def to_json(self, path: str | Path) -> None:
        d = self.__dict__.copy()
        d["lookaheads"] = list(self.lookaheads)
        Path(path).write_text(json.dumps(d, indent=2, sort_keys=True),
                              encoding="utf-8")


@dataclass(frozen=True)
class Hazard:
    position: Point
    kind: str  # vehicle | pedestrian | static
    distance: float


@dataclass(frozen=True)
class PerceptionSummary:
    lane_offset: float  # m, positive when left of the lane centre
    heading_error: float  # rad, positive when pointing left of the lane
    intersection_distance: float  # m along the lane to the next box
    hazards: tuple[Hazard, ...]  # sorted by distance
    off_map: bool = False  # degenerate summary; forces hazard-stop


@dataclass(frozen=True)
class Waypoint:
    position: Point
    speed_kmh: float
    emergency: bool = False


def perceive(measurements: Measurements, scans, town: TownMap,
             config: PilotConfig | None = None,
             path: tuple[list[Point], list[float]] | None = None) -> PerceptionSummary:
    """Privileged perception: ego-lane geometry from the map, hazards from
    the ground-truth agent list filtered to the corridor ahead.

    The corridor follows the ego lane (or the supplied local ``path``, e.g.
    the curve through an intersection) extruded ``hazard_radius`` metres
    ahead, so off-road furniture next to a bend is not a hazard.
    """
    cfg = config or PilotConfig()
    pos = measurements.position
    heading = math.atan2(measurements.orientation[1], measurements.orientation[0])
    proj = town.project_to_edge(pos, heading)
    if proj is None and path is None:
        return PerceptionSummary(lane_offset=0.0, heading_error=0.0,
                                 intersection_distance=math.inf, hazards=(),
                                 off_map=True)

    if proj is not None:
        edge, s_edge, _ = proj
        pts = list(edge.lane_points)
        cum = list(edge.lane_cumlen)
        on_line = geo.point_along_polyline(pts, cum, s_edge)
        tangent = geo.tangent_along_polyline(pts, cum, s_edge)
        offset = geo.cross(tangent, geo.sub(pos, on_line))  # + when left of centre
        heading_err = geo.signed_angle(tangent, geo.heading_vec(heading))
        inter_dist = edge.length - s_edge
    else:
        offset = 0.0
        heading_err = 0.0
        inter_dist = math.inf

    if path is not None and len(path[0]) >= 2:
        ppts, pcum = path
        s_here, _ = geo.project_to_polyline(pos, ppts, pcum)
        corridor = geo.polyline_slice(ppts, pcum, s_here,
                                      s_here + cfg.hazard_radius)
    else:
        corridor = geo.polyline_slice(pts, cum, s_edge,
                                      s_edge + cfg.hazard_radius)
    if len(corridor) < 2:
        return PerceptionSummary(lane_offset=offset, heading_error=heading_err,
                                 intersection_distance=inter_dist, hazards=())
    ccum = geo.polyline_lengths(corridor)

    hazards: list[Hazard] = []
    for agent in measurements.agents:
        apos = (agent.x, agent.y)
        if geo.dist(apos, pos) > cfg.hazard_radius + CAR_LENGTH:
            continue
        s_a, d_a = geo.project_to_polyline(apos, corridor, ccum)
        if 0.5 < s_a and d_a < cfg.corridor_half_width + agent.half_width:
            kind = "vehicle" if agent.kind == "vehicle" else "pedestrian"
            hazards.append(Hazard(apos, kind, s_a))
    # static obstacles: test each corridor segment extruded to lane width
    cb = geo.polygon_bounds(corridor)
    margin = cfg.corridor_half_width
    cb = (cb[0] - margin, cb[1] - margin, cb[2] + margin, cb[3] + margin)
    for region_kind, idx in town.regions_near(cb):
        if region_kind != "obst":
            continue
        poly = list(town.obstacles[idx].polygon)
        for i in range(len(corridor) - 1):
            quad = geo.offset_band([corridor[i], corridor[i + 1]],
                                   -margin, margin)[0]
            if geo.convex_overlap(quad, poly):
                cx = sum(p[0] for p in poly) / len(poly)
                cy = sum(p[1] for p in poly) / len(poly)
                s_o, _ = geo.project_to_polyline((cx, cy), corridor, ccum)
                hazards.append(Hazard((cx, cy), "static", max(s_o, 0.1)))
                break
    hazards.sort(key=lambda h: (h.distance, h.kind))
    return PerceptionSummary(lane_offset=offset, heading_error=heading_err,
                             intersection_distance=inter_dist,
                             hazards=tuple(hazards))


def transition(state: str, summary: PerceptionSummary, command: str,
               clear_ticks: int, config: PilotConfig | None = None) -> str:
    """One step of the local-planner state machine.

    ``clear_ticks`` is the number of consecutive hazard-free ticks observed
    so far; the caller tracks it (see Pilot).
    """
    cfg = config or PilotConfig()
    if summary.off_map or summary.hazards:
        return STATE_HAZARD
    if state == STATE_HAZARD:
        if clear_ticks >= cfg.clear_ticks:
            return STATE_ROAD
        return STATE_HAZARD
    if state in _STATE_LABELS:
        return state  # turn states exit via Pilot when past the box
    if command in _TURN_STATES and \
            summary.intersection_distance <= cfg.approach_distance:
        return _TURN_STATES[command]
    return STATE_ROAD


class PidState:
    """One scalar PID loop with an integral cap."""

    def __init__(self, kp: float, ki: float, kd: float, cap: float):
        self.kp, self.ki, self.kd, self.cap = kp, ki, kd, cap
        self.integral = 0.0
        self.prev: float | None = None

    def reset(self) -> None:
        self.integral = 0.0
        self.prev = None

    def step(self, error: float, dt: float) -> float:
        self.integral = min(self.cap, max(-self.cap, self.integral + error * dt))
        deriv = 0.0 if self.prev is None else (error - self.prev) / dt
        self.prev = error
        return self.kp * error + self.ki * self.integral + self.kd * deriv


def _path_curvature(a: Point, b: Point, c: Point) -> float:
    """Signed curvature of the circumcircle through three points (positive
    for a left-hand bend)."""
    area2 = geo.cross(geo.sub(b, a), geo.sub(c, a))
    ab = geo.dist(a, b)
    bc = geo.dist(b, c)
    ca = geo.dist(c, a)
    denom = ab * bc * ca
    if denom < 1e-9:
        return 0.0
    return 2.0 * area2 / denom


def pid_step(steer_pid: PidState, speed_pid: PidState, pose: Pose,
             speed_kmh: float, waypoints: list[Waypoint], dt: float,
             wheelbase: float, max_steer: float,
             config: PilotConfig | None = None) -> Control:
    """Track the waypoint list: steering from a curvature feedforward plus
    PID on cross-track and heading error toward the first waypoint;
    throttle/brake from PID on the speed error."""
    cfg = config or PilotConfig()
    first = waypoints[0]
    if first.emergency:
        steer_pid.reset()
        speed_pid.reset()
        return Control(steer=0.0, throttle=0.0, brake=1.0)

    carrot = first.position
    to_carrot = geo.sub(carrot, pose.point)
    heading_err = geo.signed_angle(geo.heading_vec(pose.heading), to_carrot)
    if len(waypoints) >= 2:
        path_dir = geo.unit(geo.sub(waypoints[1].position, carrot))
    else:
        path_dir = geo.unit(to_carrot)
    cross_track = geo.cross(path_dir, geo.sub(pose.point, carrot))
    error = heading_err - cfg.cross_track_gain * cross_track

    feedforward = 0.0
    if len(waypoints) >= 3:
        kappa = _path_curvature(waypoints[0].position, waypoints[1].position,
                                waypoints[2].position)
        feedforward = math.atan(wheelbase * kappa) / max_steer
    steer = feedforward + steer_pid.step(error, dt)
    steer = min(1.0, max(-1.0, steer))

    u = speed_pid.step(first.speed_kmh - speed_kmh, dt)
    if u >= cfg.deadband:
        return Control(steer=steer, throttle=min(1.0, u), brake=0.0)
    if u <= -cfg.deadband:
        return Control(steer=steer, throttle=0.0, brake=min(1.0, -u))
    return Control(steer=steer, throttle=0.0, brake=0.0)


class Pilot:
    """Stateful closed-loop agent; one instance per episode."""

    def __init__(self, town: TownMap, config: PilotConfig | None = None):
        self.town = town
        self.config = config or PilotConfig()
        self.reset()

    def reset(self) -> None:
        cfg = self.config
        self.state = STATE_ROAD
        self.clear_ticks = 0
        self.steer_pid = PidState(cfg.steer_kp, cfg.steer_ki, cfg.steer_kd,
                                  cfg.windup_cap)
        self.speed_pid = PidState(cfg.speed_kp, cfg.speed_ki, cfg.speed_kd,
                                  cfg.windup_cap)
        self._path_pts: list[Point] = []
        self._path_cum: list[float] = []
        self._path_out_edge: tuple[int, int] | None = None
        self._entered_box = False

    # -- local path maintenance -----------------------------------------

    def _build_path(self, pose: Pose, label: str | None) -> None:
        """Lane centerline ahead of the pose, optionally continued through
        the next intersection along the ``label`` branch."""
        proj = self.town.project_to_edge(pose.point, pose.heading)
        if proj is None:
            return
        edge, s, _ = proj
        pts = list(edge.lane_points)
        cum = list(edge.lane_cumlen)
        path = [geo.point_along_polyline(pts, cum, s)]
        for i, c in enumerate(cum):
            if c > s:
                path.append(pts[i])
        out_key = None
        if label is not None:
            out = self._pick_exit(edge, label)
            if out is not None:
                path.extend(self.town.turn_connector(edge, out)[1:])
                path.extend(list(out.lane_points)[1:])
                out_key = out.key
        self._path_pts = path
        self._path_cum = geo.polyline_lengths(path)
        self._path_out_edge = out_key

    def _pick_exit(self, edge: DirectedEdge, label: str) -> DirectedEdge | None:
        t_in = geo.tangent_along_polyline(list(edge.lane_points),
                                          list(edge.lane_cumlen), edge.length)
        best = None
        best_angle = math.inf
        for out in self.town.edges_from(edge.node_to):
            if out.key == (edge.road_id, -edge.direction):
                continue
            t_out = geo.tangent_along_polyline(list(out.lane_points),
                                               list(out.lane_cumlen), 0.0)
            if turn_label(t_in, t_out) == label:
                return out
            angle = abs(geo.signed_angle(t_in, t_out))
            if angle < best_angle:
                best_angle = angle
                best = out
        return best  # no exact match: take the gentlest exit

    def waypoints(self, pose: Pose) -> list[Waypoint]:
        cfg = self.config
        if self.state == STATE_HAZARD:
            return [Waypoint(pose.point, 0.0, emergency=True)]
        if not self._path_pts or len(self._path_pts) < 2:
            self._build_path(pose, _STATE_LABELS.get(self.state))
            if not self._path_pts:
                return [Waypoint(pose.point, 0.0, emergency=True)]
        s, d = geo.project_to_polyline(pose.point, self._path_pts, self._path_cum)
        if d > 2.0 * CAR_LENGTH or s > self._path_cum[-1] - cfg.lookaheads[-1]:
            self._build_path(pose, _STATE_LABELS.get(self.state))
            s, _ = geo.project_to_polyline(pose.point, self._path_pts,
                                           self._path_cum)
        speed = cfg.turn_kmh if self.state in (STATE_LEFT, STATE_RIGHT) \
            else cfg.cruise_kmh
        lookaheads = cfg.lookaheads
        if self.state == STATE_RIGHT:
            # the right-hand arc is short and tight: a trimmed horizon keeps
            # every waypoint on it
            lookaheads = lookaheads[:max(3, len(lookaheads) - 1)]
        return [Waypoint(geo.point_along_polyline(self._path_pts, self._path_cum,
                                                  s + la), speed)
                for la in lookaheads]

    # -- per-tick agent interface ----------------------------------------

    def act(self, measurements: Measurements, command: str,
            dt: float = 0.1) -> Control:
        pose = Pose(measurements.position[0], measurements.position[1],
                    math.atan2(measurements.orientation[1],
                               measurements.orientation[0]))
        if len(self._path_pts) < 2:
            self._build_path(pose, _STATE_LABELS.get(self.state))
        path = (self._path_pts, self._path_cum) if len(self._path_pts) >= 2 else None
        summary = perceive(measurements, None, self.town, self.config, path=path)
        if summary.hazards or summary.off_map:
            self.clear_ticks = 0
        else:
            self.clear_ticks += 1

        prev_state = self.state
        state = transition(self.state, summary, command, self.clear_ticks,
                           self.config)
        # turn states end once the car has crossed the box onto the exit edge
        if state in _STATE_LABELS:
            in_box = self.town.classify(pose.point, pose.heading).kind \
                == KIND_INTERSECTION
            if in_box:
                self._entered_box = True
            elif self._entered_box:
                state = STATE_ROAD
                self._entered_box = False
        if state != prev_state:
            self.steer_pid.reset()
            self.speed_pid.reset()
            if state in _STATE_LABELS:
                self._build_path(pose, _STATE_LABELS[state])
                self._entered_box = False
            elif state == STATE_ROAD:
                self._build_path(pose, None)
        self.state = state

        wps = self.waypoints(pose)
        return pid_step(self.steer_pid, self.speed_pid, pose,
                        measurements.speed_kmh, wps, dt,
                        WHEELBASE, MAX_STEER, self.config)
