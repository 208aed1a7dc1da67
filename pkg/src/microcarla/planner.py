"""Topological route planning over the road graph.

Routes are found with A* over directed road edges (so immediate U-turns are
excluded) and carry one turn label per traversed intersection. Agents are
guided by a four-command stream derived from the route: follow-lane away from
intersections, straight/left/right when one is coming up, and a goal-reached
terminator used by the episode harness.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass

from . import geometry as geo
from .geometry import Point
from .town import DirectedEdge, Pose, TownMap

COMMAND_FOLLOW = "follow-lane"
COMMAND_STRAIGHT = "straight"
COMMAND_LEFT = "left"
COMMAND_RIGHT = "right"
COMMAND_GOAL = "goal-reached"

DRIVING_COMMANDS = (COMMAND_FOLLOW, COMMAND_STRAIGHT, COMMAND_LEFT, COMMAND_RIGHT)

TURN_ANGLE_THRESHOLD = math.radians(30.0)
COMMAND_LOOKAHEAD = 25.0  # metres before an intersection the turn command fires
CORRIDOR_RADIUS = 20.0  # metres; beyond this the pose counts as off-route
GOAL_RADIUS = 2.0


class PlanError(Exception):
    pass


class UnreachableGoalError(PlanError):
    pass


class OffRouteError(PlanError):
    pass


def astar(start, is_goal, expand, heuristic):
    """Generic A* over hashable states.

    ``expand(state)`` yields (next_state, edge_cost); ``heuristic`` must be
    admissible. Returns (path list of states, total cost) or raises
    UnreachableGoalError. Ties are broken by insertion order, so the result
    is deterministic.
    """
    counter = 0
    frontier: list[tuple[float, int, object]] = [(heuristic(start), counter, start)]
    best_g = {start: 0.0}
    parent: dict[object, object] = {start: None}
    closed: set = set()
    while frontier:
        _, _, state = heapq.heappop(frontier)
        if state in closed:
            continue
        if is_goal(state):
            path = [state]
            while parent[path[-1]] is not None:
                path.append(parent[path[-1]])
            path.reverse()
            return path, best_g[state]
        closed.add(state)
        g = best_g[state]
        for nxt, cost in expand(state):
            ng = g + cost
            if nxt in closed or ng >= best_g.get(nxt, math.inf) - 1e-12:
                continue
            best_g[nxt] = ng
            parent[nxt] = state
            counter += 1
            heapq.heappush(frontier, (ng + heuristic(nxt), counter, nxt))
    raise UnreachableGoalError("no path between the requested states")


def turn_label(incoming: Point, outgoing: Point) -> str:
    """Classify an intersection transition by the signed angle between the
    incoming and outgoing travel directions."""
    angle = geo.signed_angle(incoming, outgoing)
    if abs(angle) < TURN_ANGLE_THRESHOLD:
        return COMMAND_STRAIGHT
    return COMMAND_LEFT if angle > 0.0 else COMMAND_RIGHT


@dataclass(frozen=True)
class TurnEvent:
    node: int
    label: str
    s_enter: float  # route arc length at which the intersection is entered
    s_exit: float  # route arc length at which the outgoing lane begins


@dataclass
class RoutePlan:
    """A drivable route: node sequence, turn labels, and its lane-projected
    geometry with a cumulative arc-length table."""
    nodes: list[int]
    turns: list[TurnEvent]
    points: list[Point]
    cumlen: list[float]
    goal: Point

    @property
    def total_length_m(self) -> float:
        return self.cumlen[-1] if self.cumlen else 0.0

    @property
    def total_length_km(self) -> float:
        return self.total_length_m / 1000.0

    def turn_counts(self) -> dict[str, int]:
        counts = {COMMAND_STRAIGHT: 0, COMMAND_LEFT: 0, COMMAND_RIGHT: 0}
        for ev in self.turns:
            counts[ev.label] += 1
        return counts

    def project(self, p: Point) -> tuple[float, float]:
        """(arc length along the route, lateral distance) of a point."""
        if len(self.points) < 2:
            return 0.0, geo.dist(p, self.goal)
        return geo.project_to_polyline(p, self.points, self.cumlen)


_slice_polyline = geo.polyline_slice


def _reverse_key(edge: DirectedEdge) -> tuple[int, int]:
    return (edge.road_id, -edge.direction)


def plan(town: TownMap, start: Pose, goal: Pose) -> RoutePlan:
    """Minimum-length drivable route between two on-road poses."""
    if geo.dist(start.point, goal.point) < 1e-9:
        return RoutePlan(nodes=[], turns=[], points=[start.point],
                         cumlen=[0.0], goal=goal.point)
    sp = town.project_to_edge(start.point, start.heading)
    if sp is None:
        raise PlanError("start pose is not on a drivable lane")
    gp = town.project_to_edge(goal.point, goal.heading)
    if gp is None:
        raise PlanError("goal pose is not on a drivable lane")
    edge_s, s_s, _ = sp
    edge_g, s_g, _ = gp

    if edge_s.key == edge_g.key and s_g >= s_s - 1e-9:
        pts = _slice_polyline(list(edge_s.lane_points), list(edge_s.lane_cumlen),
                              s_s, s_g)
        return RoutePlan(nodes=[], turns=[], points=pts,
                         cumlen=geo.polyline_lengths(pts), goal=goal.point)

    goal_node = edge_g.node_from
    goal_state = ("goal",)

    # search over directed edges with the full geometric cost: lane arcs
    # plus the connector arcs through each intersection
    def is_goal(key) -> bool:
        return key == goal_state

    def expand(key):
        if key == goal_state:
            return
        edge = town.edge(*key)
        for out in town.edges_from(edge.node_to):
            if out.key == _reverse_key(edge):
                continue
            yield out.key, town.connector_length(edge, out) + out.length
        if edge.node_to == goal_node and key != _reverse_key(edge_g):
            yield goal_state, town.connector_length(edge, edge_g) + s_g

    def heuristic(key) -> float:
        if key == goal_state:
            return 0.0
        edge = town.edge(*key)
        return geo.dist(edge.lane_points[-1], goal.point)

    path_keys, _ = astar(edge_s.key, is_goal, expand, heuristic)
    edges = [town.edge(*k) for k in path_keys[:-1]] + [edge_g]

    # assemble geometry: partial first edge, connectors + full middle edges,
    # partial final edge
    points: list[Point] = []
    turns: list[TurnEvent] = []
    nodes: list[int] = []

    def extend(pts: list[Point]) -> None:
        for p in pts:
            if points and geo.dist(points[-1], p) < 1e-9:
                continue
            points.append(p)

    first = edges[0]
    extend(_slice_polyline(list(first.lane_points), list(first.lane_cumlen),
                           s_s, first.length))
    for i in range(1, len(edges)):
        prev, cur = edges[i - 1], edges[i]
        nodes.append(prev.node_to)
        s_enter = geo.polyline_length(points)
        connector = town.turn_connector(prev, cur)
        extend(connector)
        s_exit = geo.polyline_length(points)
        t_in = geo.tangent_along_polyline(list(prev.lane_points),
                                          list(prev.lane_cumlen), prev.length)
        t_out = geo.tangent_along_polyline(list(cur.lane_points),
                                           list(cur.lane_cumlen), 0.0)
        turns.append(TurnEvent(node=prev.node_to,
                               label=turn_label(t_in, t_out),
                               s_enter=s_enter, s_exit=s_exit))
        end_s = s_g if i == len(edges) - 1 else cur.length
        extend(_slice_polyline(list(cur.lane_points), list(cur.lane_cumlen),
                               0.0, end_s))
    return RoutePlan(nodes=nodes, turns=turns, points=points,
                     cumlen=geo.polyline_lengths(points), goal=goal.point)


def _project_on_route(route: RoutePlan, p: Point) -> float:
    s, d = route.project(p)
    if d > CORRIDOR_RADIUS:
        raise OffRouteError(
            f"pose is {d:.1f} m from the planned corridor (limit {CORRIDOR_RADIUS} m)")
    return s


def current_command(route: RoutePlan, pose: Pose, town: TownMap) -> str:
    """The guidance command for a pose making progress along the route."""
    if geo.dist(pose.point, route.goal) <= GOAL_RADIUS:
        return COMMAND_GOAL
    s = _project_on_route(route, pose.point)
    for ev in route.turns:
        if s <= ev.s_exit and ev.s_enter - s <= COMMAND_LOOKAHEAD:
            return ev.label
    return COMMAND_FOLLOW


def remaining_distance(route: RoutePlan, pose: Pose) -> float:
    """Arc length from the pose's route projection to the goal, in km."""
    s = _project_on_route(route, pose.point)
    return max(0.0, route.total_length_m - s) / 1000.0


def next_turn(route: RoutePlan, s: float) -> TurnEvent | None:
    for ev in route.turns:
        if s <= ev.s_exit:
            return ev
    return None
