#!/usr/bin/env python3
"""Generate the two bundled towns.

Both towns are rectangular street grids with one lane per direction, 2 m
sidewalks, octagonal intersection boxes (wide enough that a 2.7 m-wheelbase
car at full steering lock can make the corner arcs), traffic lights on the
major crossings, tagged static obstacles, and a pedestrian cost grid that
favours sidewalks 10:1 over road surface with cheap marked crossings next to
every intersection.

Town A is the large training town (2.9 km of road); town B is the small test
town (1.4 km). Output is deterministic; the JSON files are committed under
src/microcarla/towns/.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from microcarla import geometry as geo
from microcarla.town import TownMap, town_from_dict, town_to_dict

LANE_WIDTH = 3.5
ROAD_HALF = LANE_WIDTH  # one lane per direction
SIDEWALK_WIDTH = 2.0
BOX_HALF = 8.0  # intersection box half-width; corner arc radius ~4.4 m
CELL = 1.0
COST_SIDEWALK = 1.0
COST_CROSSING = 2.0
COST_YARD = 3.0
COST_ROAD = 10.0
COST_OBSTACLE = 50.0
MARGIN = 15.0

LIGHT_CYCLE = {"green": 5.0, "yellow": 1.0, "red": 6.0}


def _rect(x0: float, y0: float, x1: float, y1: float) -> list[list[float]]:
    return [[x0, y0], [x1, y0], [x1, y1], [x0, y1]]


def _octagon_box(x: float, y: float) -> list[list[float]]:
    """Intersection box: a square with the corners cut back to the road
    edges, leaving the corner triangles free for sidewalk."""
    b, r = BOX_HALF, ROAD_HALF
    return [[x + b, y - r], [x + b, y + r], [x + r, y + b], [x - r, y + b],
            [x - b, y + r], [x - b, y - r], [x - r, y - b], [x + r, y - b]]


def _tree(cx: float, cy: float, r: float) -> list[list[float]]:
    pts = []
    for i in range(8):
        a = (i + 0.5) * math.pi / 4.0
        pts.append([cx + r * math.cos(a), cy + r * math.sin(a)])
    return pts


def _ccw(poly: list[list[float]]) -> list[list[float]]:
    if geo.polygon_area([tuple(p) for p in poly]) < 0:
        return poly[::-1]
    return poly


def build_grid_town(town_id: str, cols: int, rows: int, declared_km: float,
                    slow_roads: tuple[int, ...], light_nodes: tuple[int, ...]) -> dict:
    n_h = (cols - 1) * rows
    n_v = cols * (rows - 1)
    seg_len = declared_km * 1000.0 / (n_h + n_v)
    spacing = seg_len + 2.0 * BOX_HALF

    def node_id(c: int, r: int) -> int:
        return r * cols + c

    def node_pos(c: int, r: int) -> tuple[float, float]:
        return (c * spacing, r * spacing)

    intersections = [{"id": node_id(c, r),
                      "center": [node_pos(c, r)[0], node_pos(c, r)[1]],
                      "box": _octagon_box(*node_pos(c, r))}
                     for r in range(rows) for c in range(cols)]

    roads = []
    road_dirs = {}
    for r in range(rows):
        for c in range(cols - 1):
            x0, y = node_pos(c, r)
            x1, _ = node_pos(c + 1, r)
            rid = len(roads)
            roads.append({
                "id": rid, "a": node_id(c, r), "b": node_id(c + 1, r),
                "centerline": [[x0 + BOX_HALF, y], [x1 - BOX_HALF, y]],
                "lanes_per_direction": 1, "lane_width": LANE_WIDTH,
                "speed_limit": 30.0 if rid in slow_roads else 50.0,
            })
            road_dirs[rid] = "h"
    for c in range(cols):
        for r in range(rows - 1):
            x, y0 = node_pos(c, r)
            _, y1 = node_pos(c, r + 1)
            rid = len(roads)
            roads.append({
                "id": rid, "a": node_id(c, r), "b": node_id(c, r + 1),
                "centerline": [[x, y0 + BOX_HALF], [x, y1 - BOX_HALF]],
                "lanes_per_direction": 1, "lane_width": LANE_WIDTH,
                "speed_limit": 30.0 if rid in slow_roads else 50.0,
            })
            road_dirs[rid] = "v"

    has_road = {(min(a, b), max(a, b))
                for a, b in ((rd["a"], rd["b"]) for rd in roads)}

    def connected(c0, r0, c1, r1) -> bool:
        if not (0 <= c1 < cols and 0 <= r1 < rows):
            return False
        pair = (min(node_id(c0, r0), node_id(c1, r1)),
                max(node_id(c0, r0), node_id(c1, r1)))
        return pair in has_road

    out_lo = ROAD_HALF  # 3.5, road edge
    out_hi = ROAD_HALF + SIDEWALK_WIDTH  # 5.5
    sidewalks: list[list[list[float]]] = []
    for rd in roads:  # bands along both road edges, box edge to box edge
        (x0, y0), (x1, y1) = rd["centerline"]
        if road_dirs[rd["id"]] == "h":
            sidewalks.append(_rect(x0, y0 - out_hi, x1, y0 - out_lo))
            sidewalks.append(_rect(x0, y0 + out_lo, x1, y0 + out_hi))
        else:
            sidewalks.append(_rect(x0 - out_hi, y0, x0 - out_lo, y1))
            sidewalks.append(_rect(x0 + out_lo, y0, x0 + out_hi, y1))
    for r in range(rows):  # corner triangles behind each octagon cut
        for c in range(cols):
            x, y = node_pos(c, r)
            for sx in (-1, 1):
                for sy in (-1, 1):
                    sidewalks.append(_ccw([
                        [x + sx * BOX_HALF, y + sy * ROAD_HALF],
                        [x + sx * BOX_HALF, y + sy * BOX_HALF],
                        [x + sx * ROAD_HALF, y + sy * BOX_HALF]]))
            # strips along box sides with no road
            if not connected(c, r, c + 1, r):
                sidewalks.append(_rect(x + BOX_HALF, y - BOX_HALF,
                                       x + BOX_HALF + SIDEWALK_WIDTH, y + BOX_HALF))
            if not connected(c, r, c - 1, r):
                sidewalks.append(_rect(x - BOX_HALF - SIDEWALK_WIDTH, y - BOX_HALF,
                                       x - BOX_HALF, y + BOX_HALF))
            if not connected(c, r, c, r + 1):
                sidewalks.append(_rect(x - BOX_HALF, y + BOX_HALF,
                                       x + BOX_HALF, y + BOX_HALF + SIDEWALK_WIDTH))
            if not connected(c, r, c, r - 1):
                sidewalks.append(_rect(x - BOX_HALF, y - BOX_HALF - SIDEWALK_WIDTH,
                                       x + BOX_HALF, y - BOX_HALF))

    # crosswalks: cost-2 strips across each approach, flush with the box
    crosswalks = []
    for rd in roads:
        (x0, y0), (x1, y1) = rd["centerline"]
        if road_dirs[rd["id"]] == "h":
            crosswalks.append((x0, y0 - ROAD_HALF, x0 + 3.0, y0 + ROAD_HALF))
            crosswalks.append((x1 - 3.0, y0 - ROAD_HALF, x1, y0 + ROAD_HALF))
        else:
            crosswalks.append((x0 - ROAD_HALF, y0, x0 + ROAD_HALF, y0 + 3.0))
            crosswalks.append((x0 - ROAD_HALF, y1 - 3.0, x0 + ROAD_HALF, y1))

    # traffic lights: one per approach at the listed nodes, opposing
    # approaches in phase, the cross street half a cycle out of phase
    lights = []
    cycle = sum(LIGHT_CYCLE.values())
    for nid in light_nodes:
        c, r = nid % cols, nid // cols
        x, y = node_pos(c, r)
        for (dx, dy), offset in (((1, 0), 0.0), ((-1, 0), 0.0),
                                 ((0, 1), cycle / 2.0), ((0, -1), cycle / 2.0)):
            if not connected(c, r, c + dx, r + dy):
                continue
            # pole on the right-hand sidewalk corner as seen by traffic
            # arriving from the (dx, dy)-adjacent road, heading (-dx, -dy)
            hx, hy = -dx, -dy
            px = x + dx * 7.2 + hy * 5.0
            py = y + dy * 7.2 - hx * 5.0
            lights.append({
                "position": [px, py], "intersection": nid,
                "green": LIGHT_CYCLE["green"], "yellow": LIGHT_CYCLE["yellow"],
                "red": LIGHT_CYCLE["red"], "offset": offset,
            })

    speed_limits = []
    for rd in roads:
        if rd["speed_limit"] >= 50.0:
            continue
        (x0, y0), (x1, y1) = rd["centerline"]
        if road_dirs[rd["id"]] == "h":
            speed_limits.append({"position": [x0 + 10.0, y0 - (out_hi + 0.7)],
                                 "limit": rd["speed_limit"]})
        else:
            speed_limits.append({"position": [x0 - (out_hi + 0.7), y0 + 10.0],
                                 "limit": rd["speed_limit"]})

    obstacles = []
    for r in range(rows - 1):
        for c in range(cols - 1):
            x0, y0 = node_pos(c, r)
            x1, y1 = node_pos(c + 1, r + 1)
            obstacles.append({"polygon": _rect(x0 + 12.0, y0 + 12.0,
                                               x1 - 12.0, y1 - 12.0),
                              "class": "building"})
    for rd in roads:  # street trees in the verge beyond the sidewalk
        (x0, y0), (x1, y1) = rd["centerline"]
        mx, my = (x0 + x1) / 2.0, (y0 + y1) / 2.0
        if road_dirs[rd["id"]] == "h":
            for fx in (0.3, 0.7):
                tx = x0 + fx * (x1 - x0)
                obstacles.append({"polygon": _tree(tx, my - 7.0, 0.8),
                                  "class": "vegetation"})
                obstacles.append({"polygon": _tree(tx, my + 7.0, 0.8),
                                  "class": "vegetation"})
        else:
            for fy in (0.3, 0.7):
                ty = y0 + fy * (y1 - y0)
                obstacles.append({"polygon": _tree(mx - 7.0, ty, 0.8),
                                  "class": "vegetation"})
                obstacles.append({"polygon": _tree(mx + 7.0, ty, 0.8),
                                  "class": "vegetation"})
    for lt in lights:
        px, py = lt["position"]
        obstacles.append({"polygon": _rect(px - 0.25, py - 0.25,
                                           px + 0.25, py + 0.25),
                          "class": "pole"})
    for sg in speed_limits:
        px, py = sg["position"]
        obstacles.append({"polygon": _rect(px - 0.2, py - 0.2, px + 0.2, py + 0.2),
                          "class": "traffic sign"})
    # perimeter walls so long sensor rays terminate on something tagged
    xmax, ymax = node_pos(cols - 1, rows - 1)
    wall_off = 12.0
    obstacles.append({"polygon": _rect(-wall_off, -wall_off - 0.4,
                                       xmax + wall_off, -wall_off), "class": "wall"})
    obstacles.append({"polygon": _rect(-wall_off, ymax + wall_off,
                                       xmax + wall_off, ymax + wall_off + 0.4),
                      "class": "wall"})
    obstacles.append({"polygon": _rect(-wall_off - 0.4, -wall_off,
                                       -wall_off, ymax + wall_off), "class": "wall"})
    obstacles.append({"polygon": _rect(xmax + wall_off, -wall_off,
                                       xmax + wall_off + 0.4, ymax + wall_off),
                      "class": "wall"})

    # spawn poses along the right-hand lane of every directed edge
    spawn_player: list[list[float]] = []
    spawn_vehicles: list[list[float]] = []
    n_slots = max(2, int(seg_len // 40.0))
    for rd in roads:
        (x0, y0), (x1, y1) = rd["centerline"]
        length = math.hypot(x1 - x0, y1 - y0)
        tx, ty = (x1 - x0) / length, (y1 - y0) / length
        for direction in (1, -1):
            dxu, dyu = (tx, ty) if direction > 0 else (-tx, -ty)
            nxu, nyu = dyu, -dxu  # right-hand normal
            heading = math.atan2(dyu, dxu)
            base = (x0, y0) if direction > 0 else (x1, y1)
            cx = base[0] + nxu * (LANE_WIDTH / 2.0)
            cy = base[1] + nyu * (LANE_WIDTH / 2.0)
            for k in range(n_slots):
                s_p = 15.0 + k * 40.0
                s_v = 35.0 + k * 40.0
                if s_p < length - 5.0:
                    spawn_player.append([cx + dxu * s_p, cy + dyu * s_p, heading])
                if s_v < length - 5.0:
                    spawn_vehicles.append([cx + dxu * s_v, cy + dyu * s_v, heading])

    spawn_pedestrians: list[list[float]] = []
    for poly in sidewalks:
        xs = [p[0] for p in poly]
        ys = [p[1] for p in poly]
        x0s, x1s, y0s, y1s = min(xs), max(xs), min(ys), max(ys)
        if min(x1s - x0s, y1s - y0s) < 1.5 or len(poly) != 4:
            continue  # skip triangles and slivers
        cxs, cys = (x0s + x1s) / 2.0, (y0s + y1s) / 2.0
        if x1s - x0s >= y1s - y0s:
            n = max(1, int((x1s - x0s) // 25.0))
            for k in range(n):
                spawn_pedestrians.append([x0s + (k + 0.5) * (x1s - x0s) / n, cys, 0.0])
        else:
            n = max(1, int((y1s - y0s) // 25.0))
            for k in range(n):
                spawn_pedestrians.append([cxs, y0s + (k + 0.5) * (y1s - y0s) / n, 0.0])

    data = {
        "id": town_id, "declared_km": declared_km,
        "roads": roads, "intersections": intersections, "sidewalks": sidewalks,
        "spawns": {"player": spawn_player, "vehicles": spawn_vehicles,
                   "pedestrians": spawn_pedestrians},
        "lights": lights, "speed_limits": speed_limits,
        "obstacles": obstacles,
        "nav_grid": {"origin": [-MARGIN, -MARGIN], "cell_size": CELL,
                     "width": 1, "height": 1, "costs": [COST_YARD]},
    }
    data["nav_grid"] = _compute_nav_grid(data, crosswalks,
                                         (xmax + MARGIN, ymax + MARGIN))
    return data


def _compute_nav_grid(data: dict, crosswalks, upper) -> dict:
    """Rasterize walking costs by classifying every cell center."""
    town = _provisional_town(data)
    width = int(math.ceil((upper[0] + MARGIN) / CELL))
    height = int(math.ceil((upper[1] + MARGIN) / CELL))
    costs = np.full((height, width), COST_YARD)
    origin = (-MARGIN, -MARGIN)
    for iy in range(height):
        y = origin[1] + (iy + 0.5) * CELL
        for ix in range(width):
            x = origin[0] + (ix + 0.5) * CELL
            q = town.classify((x, y), 0.0)
            if q.kind in ("own-lane", "opposite-lane", "intersection-box"):
                cost = COST_ROAD
                for (cx0, cy0, cx1, cy1) in crosswalks:
                    if cx0 <= x <= cx1 and cy0 <= y <= cy1:
                        cost = COST_CROSSING
                        break
            elif q.kind == "sidewalk":
                cost = COST_SIDEWALK
            else:
                cost = COST_YARD
            costs[iy, ix] = cost
    # obstacle cells are walkable but strongly avoided
    for obs in data["obstacles"]:
        poly = [tuple(p) for p in obs["polygon"]]
        bx0, by0, bx1, by1 = geo.polygon_bounds(poly)
        ix0 = max(0, int((bx0 - origin[0]) // CELL))
        iy0 = max(0, int((by0 - origin[1]) // CELL))
        ix1 = min(width - 1, int((bx1 - origin[0]) // CELL))
        iy1 = min(height - 1, int((by1 - origin[1]) // CELL))
        for iy in range(iy0, iy1 + 1):
            for ix in range(ix0, ix1 + 1):
                cx = origin[0] + (ix + 0.5) * CELL
                cy = origin[1] + (iy + 0.5) * CELL
                if geo.point_in_polygon((cx, cy), poly):
                    costs[iy, ix] = COST_OBSTACLE
    return {"origin": [origin[0], origin[1]], "cell_size": CELL,
            "width": width, "height": height,
            "costs": [float(c) for c in costs.reshape(-1)]}


def _provisional_town(data: dict) -> TownMap:
    """TownMap without validation, for classification during rasterizing."""
    from microcarla.town import (Intersection, NavCostGrid, Obstacle, Pose,
                                 RoadSegment, SpeedLimitSign, TrafficLight)
    roads = [RoadSegment(id=rd["id"], node_a=rd["a"], node_b=rd["b"],
                         centerline=tuple(tuple(p) for p in rd["centerline"]),
                         lanes_per_direction=rd["lanes_per_direction"],
                         lane_width=rd["lane_width"],
                         speed_limit=rd["speed_limit"]) for rd in data["roads"]]
    inters = [Intersection(id=it["id"], center=tuple(it["center"]),
                           box=tuple(tuple(p) for p in it["box"]))
              for it in data["intersections"]]
    return TownMap(
        id=data["id"], declared_km=data["declared_km"], roads=roads,
        intersections=inters,
        sidewalks=[tuple(tuple(p) for p in poly) for poly in data["sidewalks"]],
        spawn_player=[Pose(*p) for p in data["spawns"]["player"]],
        spawn_vehicles=[Pose(*p) for p in data["spawns"]["vehicles"]],
        spawn_pedestrians=[Pose(*p) for p in data["spawns"]["pedestrians"]],
        lights=[TrafficLight(position=tuple(lt["position"]),
                             intersection=lt["intersection"], green=lt["green"],
                             yellow=lt["yellow"], red=lt["red"],
                             offset=lt["offset"]) for lt in data["lights"]],
        speed_signs=[SpeedLimitSign(position=tuple(sg["position"]),
                                    limit=sg["limit"])
                     for sg in data["speed_limits"]],
        nav_grid=NavCostGrid((0.0, 0.0), 1.0, np.array([[COST_YARD]])),
        obstacles=[Obstacle(polygon=tuple(tuple(p) for p in ob["polygon"]),
                            semantic_class=ob["class"])
                   for ob in data["obstacles"]])


def check_pools(town: TownMap) -> None:
    from microcarla.bench import TASK_KINDS, task_pool, time_budget
    for kind in TASK_KINDS:
        pool = task_pool(town, kind)
        budgets = [time_budget(town, town.spawn_player[s], town.spawn_player[g])
                   for s, g in pool]
        mean = sum(budgets) / len(budgets)
        print(f"  {town.id} {kind}: pool={len(pool)} mean budget={mean:.1f} s")


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default=str(Path(__file__).resolve().parents[1]
                                         / "src" / "microcarla" / "towns"))
    ap.add_argument("--check-pools", action="store_true")
    args = ap.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    specs = [
        ("town_a", dict(cols=4, rows=3, declared_km=2.9,
                        slow_roads=(2, 11), light_nodes=(5, 6))),
        ("town_b", dict(cols=3, rows=2, declared_km=1.4,
                        slow_roads=(1,), light_nodes=(1, 4))),
    ]
    for name, kw in specs:
        data = build_grid_town(name, **kw)
        town = town_from_dict(data)  # runs full validation
        path = out / f"{name}.json"
        path.write_text(json.dumps(town_to_dict(town), separators=(",", ":"),
                                   sort_keys=True), encoding="utf-8")
        print(f"wrote {path} ({path.stat().st_size / 1024:.0f} KiB, "
              f"{len(town.roads)} roads, {len(town.spawn_player)} player spawns)")
        if args.check_pools:
            check_pools(town)


if __name__ == "__main__":
    main()
