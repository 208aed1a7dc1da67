"""Static town model.

A town is a road graph with lane geometry, sidewalk polygons, intersection
boxes, spawn poses, traffic lights, speed-limit signs, tagged static
obstacles, and a pedestrian cost grid. Maps are immutable after loading and
safe to share across concurrently running worlds.

The on-disk format is a single UTF-8 JSON document; lengths are in metres,
angles in radians, speeds in km/h. See docs/town_schema.md.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import geometry as geo
from .geometry import Point, Polygon

SEMANTIC_CLASSES = [
    "road", "lane-marking", "traffic sign", "sidewalk", "fence", "pole",
    "wall", "building", "vegetation", "vehicle", "pedestrian", "other",
]

OBSTACLE_CLASSES = {
    "traffic sign", "fence", "pole", "wall", "building", "vegetation", "other",
}

# region kinds returned by classify(), in precedence order
KIND_INTERSECTION = "intersection-box"
KIND_OWN_LANE = "own-lane"
KIND_OPPOSITE_LANE = "opposite-lane"
KIND_SIDEWALK = "sidewalk"
KIND_OFF_MAP = "off-map"

_INDEX_CELL = 8.0  # spatial hash pitch, metres
_REGION_OVERLAP_TOL = 1e-6  # m^2, validated pairwise overlap between regions


class TownError(Exception):
    """Base class for town loading problems."""


class TownParseError(TownError):
    """The file is not valid JSON or does not match the schema."""


class TownValidationError(TownError):
    """The file parses but violates a map invariant."""


@dataclass(frozen=True)
class Pose:
    x: float
    y: float
    heading: float

    @property
    def point(self) -> Point:
        return (self.x, self.y)


@dataclass(frozen=True)
class RoadSegment:
    id: int
    node_a: int
    node_b: int
    centerline: tuple[Point, ...]
    lanes_per_direction: int
    lane_width: float
    speed_limit: float  # km/h

    @property
    def length(self) -> float:
        return geo.polyline_length(list(self.centerline))

    @property
    def half_width(self) -> float:
        return self.lanes_per_direction * self.lane_width


@dataclass(frozen=True)
class Intersection:
    id: int
    center: Point
    box: tuple[Point, ...]


@dataclass(frozen=True)
class TrafficLight:
    position: Point
    intersection: int
    green: float
    yellow: float
    red: float
    offset: float

    def state_at(self, sim_time: float) -> str:
        cycle = self.green + self.yellow + self.red
        t = math.fmod(sim_time + self.offset, cycle)
        if t < 0.0:
            t += cycle
        if t < self.green:
            return "green"
        if t < self.green + self.yellow:
            return "yellow"
        return "red"


@dataclass(frozen=True)
class SpeedLimitSign:
    position: Point
    limit: float  # km/h


@dataclass(frozen=True)
class Obstacle:
    polygon: tuple[Point, ...]
    semantic_class: str


@dataclass(frozen=True)
class LaneRegion:
    """One convex quad of lane surface, oriented along its travel direction."""
    road_id: int
    direction: int  # +1 travels a->b along the centerline, -1 the reverse
    lane_index: int
    quad: tuple[Point, ...]
    travel_dir: Point  # unit vector of legal travel
    s_lo: float  # arc range along the directed lane centerline
    s_hi: float


@dataclass(frozen=True)
class RegionQuery:
    kind: str
    lane_id: tuple[int, int, int] | None = None  # (road, direction, lane index)
    wrong_way: bool = False


@dataclass(frozen=True)
class DirectedEdge:
    """A one-way traversal of a road, with its right-hand lane centerline."""
    road_id: int
    direction: int
    node_from: int
    node_to: int
    lane_points: tuple[Point, ...]
    lane_cumlen: tuple[float, ...]

    @property
    def length(self) -> float:
        return self.lane_cumlen[-1]

    @property
    def key(self) -> tuple[int, int]:
        return (self.road_id, self.direction)


class NavCostGrid:
    """Location-based walking cost; low on sidewalks, high on road surface."""

    def __init__(self, origin: Point, cell_size: float, costs: np.ndarray):
        self.origin = origin
        self.cell_size = cell_size
        self.costs = costs  # shape (height, width), row-major, y then x

    @property
    def width(self) -> int:
        return self.costs.shape[1]

    @property
    def height(self) -> int:
        return self.costs.shape[0]

    def cell_of(self, p: Point) -> tuple[int, int] | None:
        ix = int(math.floor((p[0] - self.origin[0]) / self.cell_size))
        iy = int(math.floor((p[1] - self.origin[1]) / self.cell_size))
        if 0 <= ix < self.width and 0 <= iy < self.height:
            return (ix, iy)
        return None

    def center_of(self, cell: tuple[int, int]) -> Point:
        return (
            self.origin[0] + (cell[0] + 0.5) * self.cell_size,
            self.origin[1] + (cell[1] + 0.5) * self.cell_size,
        )

    def cost(self, cell: tuple[int, int]) -> float:
        return float(self.costs[cell[1], cell[0]])


class TownMap:
    """Immutable town; construct via load_town()/town_from_dict()."""

    def __init__(self, *, id: str, declared_km: float, roads: list[RoadSegment],
                 intersections: list[Intersection], sidewalks: list[tuple[Point, ...]],
                 spawn_player: list[Pose], spawn_vehicles: list[Pose],
                 spawn_pedestrians: list[Pose], lights: list[TrafficLight],
                 speed_signs: list[SpeedLimitSign], nav_grid: NavCostGrid,
                 obstacles: list[Obstacle]):
        self.id = id
        self.declared_km = declared_km
        self.roads = roads
        self.intersections = intersections
        self.sidewalks = sidewalks
        self.spawn_player = spawn_player
        self.spawn_vehicles = spawn_vehicles
        self.spawn_pedestrians = spawn_pedestrians
        self.lights = lights
        self.speed_signs = speed_signs
        self.nav_grid = nav_grid
        self.obstacles = obstacles

        self._roads_by_id = {r.id: r for r in roads}
        self._intersections_by_id = {i.id: i for i in intersections}
        self.lane_regions: list[LaneRegion] = _build_lane_regions(roads)
        self.directed_edges: list[DirectedEdge] = _build_directed_edges(roads)
        self._edges_by_key = {e.key: e for e in self.directed_edges}
        self._edges_from: dict[int, list[DirectedEdge]] = {}
        for e in self.directed_edges:
            self._edges_from.setdefault(e.node_from, []).append(e)
        self._connector_cache: dict = {}
        self._index = _SpatialIndex(self)
        self._approach_lights = _bind_lights_to_approaches(self)
        self.bounds = self._compute_bounds()
        # painted lane boundaries: the centre divider and both road edges
        self.boundary_segments: list[tuple[Point, Point]] = []
        for road in roads:
            pts = list(road.centerline)
            for off in (0.0, road.half_width, -road.half_width):
                line = geo.offset_polyline(pts, off)
                for i in range(len(line) - 1):
                    self.boundary_segments.append((line[i], line[i + 1]))

    # -- basic lookups -------------------------------------------------

    def road(self, road_id: int) -> RoadSegment:
        return self._roads_by_id[road_id]

    def intersection(self, node_id: int) -> Intersection:
        return self._intersections_by_id[node_id]

    def node_center(self, node_id: int) -> Point:
        return self._intersections_by_id[node_id].center

    def edge(self, road_id: int, direction: int) -> DirectedEdge:
        return self._edges_by_key[(road_id, direction)]

    def edges_from(self, node_id: int) -> list[DirectedEdge]:
        return self._edges_from.get(node_id, [])

    def approach_light(self, road_id: int, direction: int) -> TrafficLight | None:
        return self._approach_lights.get((road_id, direction))

    def _compute_bounds(self) -> tuple[float, float, float, float]:
        g = self.nav_grid
        return (g.origin[0], g.origin[1],
                g.origin[0] + g.width * g.cell_size,
                g.origin[1] + g.height * g.cell_size)

    # -- classification ------------------------------------------------

    def lane_at(self, point: Point) -> LaneRegion | None:
        for kind, idx in self._index.candidates_at(point):
            if kind == "lane":
                region = self.lane_regions[idx]
                if geo.point_in_convex(point, list(region.quad)):
                    return region
        return None

    def classify(self, point: Point, heading: float) -> RegionQuery:
        """Region kind at a point for a body travelling along ``heading``.

        Precedence: intersection-box > lane > sidewalk > off-map. A lane hit
        is wrong-way when the travel direction differs from the lane
        direction by more than 90 degrees.
        """
        lane_hit: LaneRegion | None = None
        sidewalk_hit = False
        for kind, idx in self._index.candidates_at(point):
            if kind == "box":
                if geo.point_in_convex(point, list(self.intersections[idx].box)):
                    return RegionQuery(KIND_INTERSECTION)
            elif kind == "lane" and lane_hit is None:
                region = self.lane_regions[idx]
                if geo.point_in_convex(point, list(region.quad)):
                    lane_hit = region
            elif kind == "side" and not sidewalk_hit:
                if geo.point_in_polygon(point, list(self.sidewalks[idx])):
                    sidewalk_hit = True
        if lane_hit is not None:
            hv = geo.heading_vec(heading)
            wrong = geo.dot(hv, lane_hit.travel_dir) < 0.0
            kind = KIND_OPPOSITE_LANE if wrong else KIND_OWN_LANE
            lane_id = (lane_hit.road_id, lane_hit.direction, lane_hit.lane_index)
            return RegionQuery(kind, lane_id=lane_id, wrong_way=wrong)
        if sidewalk_hit:
            return RegionQuery(KIND_SIDEWALK)
        return RegionQuery(KIND_OFF_MAP)

    def is_drivable(self, point: Point) -> bool:
        q = self.classify(point, 0.0)
        return q.kind in (KIND_INTERSECTION, KIND_OWN_LANE, KIND_OPPOSITE_LANE)

    def regions_near(self, bounds: tuple[float, float, float, float]):
        """(kind, index) pairs whose bounding boxes meet ``bounds``."""
        return self._index.candidates_in(bounds)

    def project_to_edge(self, point: Point, heading: float) -> tuple[DirectedEdge, float, float] | None:
        """Closest directed edge whose travel direction matches ``heading``.

        Returns (edge, arc length along the edge lane centerline, lateral
        distance), or None when no lane lies within two lane widths.
        """
        hv = geo.heading_vec(heading)
        best: tuple[DirectedEdge, float, float] | None = None
        for edge in self.directed_edges:
            pts = list(edge.lane_points)
            cum = list(edge.lane_cumlen)
            s, d = geo.project_to_polyline(point, pts, cum)
            tangent = geo.tangent_along_polyline(pts, cum, s)
            if geo.dot(hv, tangent) <= 0.0:
                continue
            road = self._roads_by_id[edge.road_id]
            if d > 2.0 * road.lane_width:
                continue
            if best is None or d < best[2]:
                best = (edge, s, d)
        return best

    def shortest_route_length(self, a: Pose, b: Pose) -> float:
        """Optimal driving distance in km between two drivable poses."""
        from .planner import plan  # local import to avoid a module cycle
        return plan(self, a, b).total_length_km

    # -- connectors through intersections --------------------------------

    def turn_connector(self, edge_in: DirectedEdge, edge_out: DirectedEdge,
                       samples: int = 8) -> list[Point]:
        """Polyline from the end of one directed lane to the start of the
        next, blended through the intersection with a quadratic Bezier."""
        cache_key = (edge_in.key, edge_out.key, samples)
        cached = self._connector_cache.get(cache_key)
        if cached is not None:
            return cached
        p0 = edge_in.lane_points[-1]
        p2 = edge_out.lane_points[0]
        t0 = geo.tangent_along_polyline(list(edge_in.lane_points),
                                        list(edge_in.lane_cumlen),
                                        edge_in.length)
        t2 = geo.tangent_along_polyline(list(edge_out.lane_points),
                                        list(edge_out.lane_cumlen), 0.0)
        ctrl = _tangent_meet(p0, t0, p2, t2)
        pts: list[Point] = []
        for i in range(samples + 1):
            t = i / samples
            omt = 1.0 - t
            x = omt * omt * p0[0] + 2 * omt * t * ctrl[0] + t * t * p2[0]
            y = omt * omt * p0[1] + 2 * omt * t * ctrl[1] + t * t * p2[1]
            pts.append((x, y))
        self._connector_cache[cache_key] = pts
        return pts

    def connector_length(self, edge_in: DirectedEdge, edge_out: DirectedEdge) -> float:
        return geo.polyline_length(self.turn_connector(edge_in, edge_out))


def _tangent_meet(p0: Point, t0: Point, p2: Point, t2: Point) -> Point:
    """Intersection of the two tangent lines; midpoint fallback when nearly
    parallel (straight-through connectors)."""
    denom = geo.cross(t0, t2)
    if abs(denom) < 1e-6:
        return ((p0[0] + p2[0]) * 0.5, (p0[1] + p2[1]) * 0.5)
    w = geo.sub(p2, p0)
    s = geo.cross(w, t2) / denom
    return geo.add(p0, geo.scale(t0, s))


def _right_lane_polyline(road: RoadSegment, direction: int, lane_index: int) -> list[Point]:
    """Centerline of one lane, offset to the right of the travel direction."""
    pts = list(road.centerline)
    if direction < 0:
        pts = pts[::-1]
    return geo.offset_polyline(pts, (lane_index + 0.5) * road.lane_width)


def _build_lane_regions(roads: list[RoadSegment]) -> list[LaneRegion]:
    regions: list[LaneRegion] = []
    for road in roads:
        for direction in (1, -1):
            pts = list(road.centerline)
            if direction < 0:
                pts = pts[::-1]
            cum = geo.polyline_lengths(pts)
            for lane in range(road.lanes_per_direction):
                quads = geo.offset_band(pts, lane * road.lane_width,
                                        (lane + 1) * road.lane_width)
                for i, quad in enumerate(quads):
                    tdir = geo.unit(geo.sub(pts[i + 1], pts[i]))
                    regions.append(LaneRegion(
                        road_id=road.id, direction=direction, lane_index=lane,
                        quad=tuple(quad), travel_dir=tdir,
                        s_lo=cum[i], s_hi=cum[i + 1]))
    return regions


def _build_directed_edges(roads: list[RoadSegment]) -> list[DirectedEdge]:
    edges: list[DirectedEdge] = []
    for road in roads:
        for direction in (1, -1):
            pts = _right_lane_polyline(road, direction, 0)
            cum = geo.polyline_lengths(pts)
            node_from = road.node_a if direction > 0 else road.node_b
            node_to = road.node_b if direction > 0 else road.node_a
            edges.append(DirectedEdge(
                road_id=road.id, direction=direction,
                node_from=node_from, node_to=node_to,
                lane_points=tuple(pts), lane_cumlen=tuple(cum)))
    return edges


def _bind_lights_to_approaches(town: TownMap) -> dict[tuple[int, int], TrafficLight]:
    """Assign each light to the incoming directed edge whose end point is
    nearest to it; unlit approaches simply have no light."""
    binding: dict[tuple[int, int], TrafficLight] = {}
    for light in town.lights:
        best_key = None
        best_d = math.inf
        for edge in town.directed_edges:
            if edge.node_to != light.intersection:
                continue
            d = geo.dist(edge.lane_points[-1], light.position)
            if d < best_d:
                best_d = d
                best_key = edge.key
        if best_key is not None and best_key not in binding:
            binding[best_key] = light
    return binding


class _SpatialIndex:
    """Uniform-grid hash over region and obstacle bounding boxes."""

    def __init__(self, town: TownMap):
        self._cells: dict[tuple[int, int], list[tuple[str, int]]] = {}
        self._bounds: dict[tuple[str, int], tuple[float, float, float, float]] = {}
        for i, inter in enumerate(town.intersections):
            self._insert("box", i, geo.polygon_bounds(list(inter.box)))
        for i, region in enumerate(town.lane_regions):
            self._insert("lane", i, geo.polygon_bounds(list(region.quad)))
        for i, poly in enumerate(town.sidewalks):
            self._insert("side", i, geo.polygon_bounds(list(poly)))
        for i, obs in enumerate(town.obstacles):
            self._insert("obst", i, geo.polygon_bounds(list(obs.polygon)))

    def _cell_range(self, bounds):
        x0 = int(math.floor(bounds[0] / _INDEX_CELL))
        y0 = int(math.floor(bounds[1] / _INDEX_CELL))
        x1 = int(math.floor(bounds[2] / _INDEX_CELL))
        y1 = int(math.floor(bounds[3] / _INDEX_CELL))
        return x0, y0, x1, y1

    def _insert(self, kind: str, idx: int, bounds) -> None:
        self._bounds[(kind, idx)] = bounds
        x0, y0, x1, y1 = self._cell_range(bounds)
        for cx in range(x0, x1 + 1):
            for cy in range(y0, y1 + 1):
                self._cells.setdefault((cx, cy), []).append((kind, idx))

    def candidates_at(self, p: Point) -> list[tuple[str, int]]:
        cx = int(math.floor(p[0] / _INDEX_CELL))
        cy = int(math.floor(p[1] / _INDEX_CELL))
        out = []
        for kind, idx in self._cells.get((cx, cy), ()):
            b = self._bounds[(kind, idx)]
            if b[0] <= p[0] <= b[2] and b[1] <= p[1] <= b[3]:
                out.append((kind, idx))
        return out

    def candidates_in(self, bounds) -> list[tuple[str, int]]:
        x0, y0, x1, y1 = self._cell_range(bounds)
        seen: set[tuple[str, int]] = set()
        out: list[tuple[str, int]] = []
        for cx in range(x0, x1 + 1):
            for cy in range(y0, y1 + 1):
                for item in self._cells.get((cx, cy), ()):
                    if item in seen:
                        continue
                    seen.add(item)
                    if geo.bounds_overlap(self._bounds[item], bounds):
                        out.append(item)
        out.sort()
        return out


# -- serialization -------------------------------------------------------

_TOP_KEYS = {"id", "declared_km", "roads", "intersections", "sidewalks",
             "spawns", "lights", "speed_limits", "nav_grid"}
_TOP_OPTIONAL = {"obstacles"}


def _check_keys(obj: dict, required: set[str], optional: set[str], where: str) -> None:
    keys = set(obj)
    missing = required - keys
    if missing:
        raise TownParseError(f"{where}: missing keys {sorted(missing)}")
    unknown = keys - required - optional
    if unknown:
        raise TownParseError(f"{where}: unknown keys {sorted(unknown)}")


def _as_point(v, where: str) -> Point:
    if not isinstance(v, (list, tuple)) or len(v) != 2:
        raise TownParseError(f"{where}: expected [x, y]")
    return (float(v[0]), float(v[1]))


def _as_polygon(v, where: str) -> tuple[Point, ...]:
    if not isinstance(v, list) or len(v) < 3:
        raise TownParseError(f"{where}: expected a polygon with >= 3 vertices")
    return tuple(_as_point(p, where) for p in v)


def _as_pose(v, where: str) -> Pose:
    if not isinstance(v, (list, tuple)) or len(v) != 3:
        raise TownParseError(f"{where}: expected [x, y, heading]")
    return Pose(float(v[0]), float(v[1]), float(v[2]))


def town_from_dict(data: dict) -> TownMap:
    if not isinstance(data, dict):
        raise TownParseError("town document must be a JSON object")
    _check_keys(data, _TOP_KEYS, _TOP_OPTIONAL, "town")

    roads = []
    for i, rd in enumerate(data["roads"]):
        where = f"roads[{i}]"
        _check_keys(rd, {"id", "a", "b", "centerline", "lanes_per_direction",
                         "lane_width", "speed_limit"}, set(), where)
        centerline = tuple(_as_point(p, where) for p in rd["centerline"])
        if len(centerline) < 2:
            raise TownValidationError(f"{where}: centerline needs at least 2 points")
        road = RoadSegment(
            id=int(rd["id"]), node_a=int(rd["a"]), node_b=int(rd["b"]),
            centerline=centerline,
            lanes_per_direction=int(rd["lanes_per_direction"]),
            lane_width=float(rd["lane_width"]),
            speed_limit=float(rd["speed_limit"]))
        if road.lane_width <= 0.0:
            raise TownValidationError(f"{where}: lane_width must be positive")
        if road.length <= 0.0:
            raise TownValidationError(f"{where}: arc length must be positive")
        roads.append(road)

    intersections = []
    for i, it in enumerate(data["intersections"]):
        where = f"intersections[{i}]"
        _check_keys(it, {"id", "center", "box"}, set(), where)
        intersections.append(Intersection(
            id=int(it["id"]), center=_as_point(it["center"], where),
            box=_as_polygon(it["box"], where)))

    sidewalks = [_as_polygon(p, f"sidewalks[{i}]")
                 for i, p in enumerate(data["sidewalks"])]

    _check_keys(data["spawns"], {"player", "vehicles", "pedestrians"}, set(), "spawns")
    spawn_player = [_as_pose(p, "spawns.player") for p in data["spawns"]["player"]]
    spawn_vehicles = [_as_pose(p, "spawns.vehicles") for p in data["spawns"]["vehicles"]]
    spawn_pedestrians = [_as_pose(p, "spawns.pedestrians")
                         for p in data["spawns"]["pedestrians"]]

    lights = []
    for i, lt in enumerate(data["lights"]):
        where = f"lights[{i}]"
        _check_keys(lt, {"position", "intersection", "green", "yellow", "red",
                         "offset"}, set(), where)
        lights.append(TrafficLight(
            position=_as_point(lt["position"], where),
            intersection=int(lt["intersection"]), green=float(lt["green"]),
            yellow=float(lt["yellow"]), red=float(lt["red"]),
            offset=float(lt["offset"])))

    signs = []
    for i, sg in enumerate(data["speed_limits"]):
        where = f"speed_limits[{i}]"
        _check_keys(sg, {"position", "limit"}, set(), where)
        signs.append(SpeedLimitSign(position=_as_point(sg["position"], where),
                                    limit=float(sg["limit"])))

    ng = data["nav_grid"]
    _check_keys(ng, {"origin", "cell_size", "width", "height", "costs"}, set(),
                "nav_grid")
    width, height = int(ng["width"]), int(ng["height"])
    costs = np.asarray(ng["costs"], dtype=np.float64)
    if costs.size != width * height:
        raise TownParseError("nav_grid: costs length != width * height")
    nav_grid = NavCostGrid(origin=_as_point(ng["origin"], "nav_grid"),
                           cell_size=float(ng["cell_size"]),
                           costs=costs.reshape(height, width))

    obstacles = []
    for i, ob in enumerate(data.get("obstacles", [])):
        where = f"obstacles[{i}]"
        _check_keys(ob, {"polygon", "class"}, set(), where)
        cls = str(ob["class"])
        if cls not in OBSTACLE_CLASSES:
            raise TownParseError(f"{where}: unknown semantic class {cls!r}")
        obstacles.append(Obstacle(polygon=_as_polygon(ob["polygon"], where),
                                  semantic_class=cls))

    town = TownMap(
        id=str(data["id"]), declared_km=float(data["declared_km"]),
        roads=roads, intersections=intersections, sidewalks=sidewalks,
        spawn_player=spawn_player, spawn_vehicles=spawn_vehicles,
        spawn_pedestrians=spawn_pedestrians, lights=lights, speed_signs=signs,
        nav_grid=nav_grid, obstacles=obstacles)
    _validate(town)
    return town


def town_to_dict(town: TownMap) -> dict:
    return {
        "id": town.id,
        "declared_km": town.declared_km,
        "roads": [{
            "id": r.id, "a": r.node_a, "b": r.node_b,
            "centerline": [[p[0], p[1]] for p in r.centerline],
            "lanes_per_direction": r.lanes_per_direction,
            "lane_width": r.lane_width, "speed_limit": r.speed_limit,
        } for r in town.roads],
        "intersections": [{
            "id": i.id, "center": [i.center[0], i.center[1]],
            "box": [[p[0], p[1]] for p in i.box],
        } for i in town.intersections],
        "sidewalks": [[[p[0], p[1]] for p in poly] for poly in town.sidewalks],
        "spawns": {
            "player": [[p.x, p.y, p.heading] for p in town.spawn_player],
            "vehicles": [[p.x, p.y, p.heading] for p in town.spawn_vehicles],
            "pedestrians": [[p.x, p.y, p.heading] for p in town.spawn_pedestrians],
        },
        "lights": [{
            "position": [l.position[0], l.position[1]],
            "intersection": l.intersection, "green": l.green,
            "yellow": l.yellow, "red": l.red, "offset": l.offset,
        } for l in town.lights],
        "speed_limits": [{
            "position": [s.position[0], s.position[1]], "limit": s.limit,
        } for s in town.speed_signs],
        "nav_grid": {
            "origin": [town.nav_grid.origin[0], town.nav_grid.origin[1]],
            "cell_size": town.nav_grid.cell_size,
            "width": town.nav_grid.width, "height": town.nav_grid.height,
            "costs": [float(c) for c in town.nav_grid.costs.reshape(-1)],
        },
        "obstacles": [{
            "polygon": [[p[0], p[1]] for p in o.polygon],
            "class": o.semantic_class,
        } for o in town.obstacles],
    }


def load_town(path: str | Path) -> TownMap:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise TownParseError(f"cannot read town file {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise TownParseError(f"town file {path} is not valid JSON: {exc}") from exc
    return town_from_dict(data)


def write_town(town: TownMap, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(town_to_dict(town), separators=(",", ":"), sort_keys=True),
        encoding="utf-8")


def bundled_town_path(name: str) -> Path:
    """Path of a town shipped with the package ('a' or 'b')."""
    here = Path(__file__).parent / "towns"
    path = here / f"town_{name.lower()}.json"
    if not path.exists():
        raise TownParseError(f"no bundled town named {name!r}")
    return path


def load_bundled(name: str) -> TownMap:
    return load_town(bundled_town_path(name))


# -- validation ------------------------------------------------------------

def _validate(town: TownMap) -> None:
    _validate_connectivity(town)
    _validate_length(town)
    _validate_regions_disjoint(town)
    _validate_spawns(town)
    _validate_nav_costs(town)


def _validate_connectivity(town: TownMap) -> None:
    nodes = {i.id for i in town.intersections}
    for r in town.roads:
        if r.node_a not in nodes or r.node_b not in nodes:
            raise TownValidationError(
                f"road {r.id} references unknown intersection node")
    if not nodes:
        raise TownValidationError("town has no intersections")
    forward: dict[int, set[int]] = {n: set() for n in nodes}
    backward: dict[int, set[int]] = {n: set() for n in nodes}
    for e in town.directed_edges:
        forward[e.node_from].add(e.node_to)
        backward[e.node_to].add(e.node_from)
    start = min(nodes)
    for adj, label in ((forward, "forward"), (backward, "backward")):
        seen = {start}
        stack = [start]
        while stack:
            for nxt in sorted(adj[stack.pop()]):
                if nxt not in seen:
                    seen.add(nxt)
                    stack.append(nxt)
        if seen != nodes:
            missing = sorted(nodes - seen)
            raise TownValidationError(
                "road graph is not strongly connected over drivable "
                f"directions ({label} sweep cannot reach nodes {missing})")


def _validate_length(town: TownMap) -> None:
    total_m = sum(r.length for r in town.roads)
    declared_m = town.declared_km * 1000.0
    if declared_m <= 0.0 or abs(total_m - declared_m) > 0.01 * declared_m:
        raise TownValidationError(
            "sum of road arc lengths "
            f"({total_m:.1f} m) is not within 1% of declared drivable length "
            f"({declared_m:.1f} m)")


def _validate_regions_disjoint(town: TownMap) -> None:
    polys: list[tuple[str, Polygon]] = []
    for i, inter in enumerate(town.intersections):
        polys.append((f"intersection {inter.id}", list(inter.box)))
    for i, region in enumerate(town.lane_regions):
        polys.append((f"lane quad {i} (road {region.road_id})", list(region.quad)))
    for i, poly in enumerate(town.sidewalks):
        polys.append((f"sidewalk {i}", list(poly)))
    bounds = [geo.polygon_bounds(p) for _, p in polys]
    for i in range(len(polys)):
        for j in range(i + 1, len(polys)):
            if not geo.bounds_overlap(bounds[i], bounds[j]):
                continue
            # both arguments may be non-convex only for sidewalks; keep clip
            # convex by testing against the convex one
            a_name, a_poly = polys[i]
            b_name, b_poly = polys[j]
            clip = b_poly if geo.is_convex(b_poly) else a_poly
            subject = a_poly if clip is b_poly else b_poly
            if geo.clip_area(subject, clip) > _REGION_OVERLAP_TOL:
                raise TownValidationError(
                    f"regions overlap: {a_name} and {b_name} "
                    "(lane, sidewalk and intersection regions must be disjoint)")


def _validate_spawns(town: TownMap) -> None:
    for label, poses in (("player", town.spawn_player),
                         ("vehicle", town.spawn_vehicles)):
        for i, pose in enumerate(poses):
            if not town.is_drivable(pose.point):
                raise TownValidationError(
                    f"{label} spawn point {i} at ({pose.x:.1f}, {pose.y:.1f}) "
                    "is not inside a drivable region")
    for i, pose in enumerate(town.spawn_pedestrians):
        cell = town.nav_grid.cell_of(pose.point)
        if cell is None or not math.isfinite(town.nav_grid.cost(cell)):
            raise TownValidationError(
                f"pedestrian spawn point {i} is not on a finite-cost nav cell")
    if not math.isfinite(town.nav_grid.costs.max()) or town.nav_grid.costs.min() <= 0.0:
        raise TownValidationError("nav grid costs must be finite and positive")


def _validate_nav_costs(town: TownMap) -> None:
    """Spot-check that walking on sidewalk is strictly cheaper than on road."""
    road_costs = []
    for region in town.lane_regions[:: max(1, len(town.lane_regions) // 64)]:
        cx = sum(p[0] for p in region.quad) / 4.0
        cy = sum(p[1] for p in region.quad) / 4.0
        cell = town.nav_grid.cell_of((cx, cy))
        if cell is not None:
            road_costs.append(town.nav_grid.cost(cell))
    side_costs = []
    for poly in town.sidewalks:
        cx = sum(p[0] for p in poly) / len(poly)
        cy = sum(p[1] for p in poly) / len(poly)
        if geo.point_in_polygon((cx, cy), list(poly)):
            cell = town.nav_grid.cell_of((cx, cy))
            if cell is not None:
                side_costs.append(town.nav_grid.cost(cell))
    if road_costs and side_costs and max(side_costs) >= min(road_costs):
        raise TownValidationError(
            "nav grid: sidewalk cells must have strictly lower cost than road cells")
