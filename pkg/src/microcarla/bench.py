"""Goal-directed navigation benchmark.

Four task families (straight, one-turn, free navigation, navigation with
traffic) drawn from per-town pools of start/goal spawn pairs, run over 25
episodes per condition with a time budget equal to the optimal route driven
at 10 km/h. Infractions never terminate an episode; they are logged with a
30% footprint threshold for the overlap kinds and a 2-second event window,
so a sustained violation is counted once per window.
"""

from __future__ import annotations

import json
import math
import random
import zlib
from dataclasses import dataclass, field
from pathlib import Path

from . import planner
from .dynamics import DT, Control, MetaCommand
from .learning import AgentInterface, RewardInputs, reward
from .pilot import Pilot
from .protocol import FrameMsg, InProcessClient
from .sensors import Measurements
from .town import Pose, TownMap, load_bundled
from .weather import WEATHER_SETS

TASK_STRAIGHT = "straight"
TASK_ONETURN = "oneturn"
TASK_NAVIGATION = "navigation"
TASK_NAVDYNAMIC = "navdynamic"
TASK_KINDS = (TASK_STRAIGHT, TASK_ONETURN, TASK_NAVIGATION, TASK_NAVDYNAMIC)

INFRACTION_KINDS = ("opposite-lane", "sidewalk", "collision-static",
                    "collision-car", "collision-pedestrian")

OVERLAP_THRESHOLD = 0.30  # footprint fraction that opens an overlap event
EVENT_WINDOW_S = 2.0  # an ongoing violation re-opens as a new event
BUDGET_SPEED_KMH = 10.0
SUITE_EPISODES = 25
MIN_POOL = 25

# mean optimal route length targets per bundled town, metres
TASK_TARGETS = {
    "town_a": {TASK_STRAIGHT: 200.0, TASK_ONETURN: 400.0, TASK_NAVIGATION: 770.0},
    "town_b": {TASK_STRAIGHT: 100.0, TASK_ONETURN: 170.0, TASK_NAVIGATION: 360.0},
}

# (vehicles, pedestrians) for the dynamic task
DYNAMIC_COUNTS = {"town_a": (30, 50), "town_b": (15, 30)}

CONDITIONS = (
    ("training", "a", "training"),
    ("new-town", "b", "training"),
    ("new-weather", "a", "test"),
    ("new-town-weather", "b", "test"),
)
CONDITION_TITLES = {
    "training": "Training conditions", "new-town": "New town",
    "new-weather": "New weather", "new-town-weather": "New town & weather",
}


class BenchError(Exception):
    pass


# -- task pools ---------------------------------------------------------------

_pool_cache: dict[tuple[str, str], list[tuple[int, int]]] = {}


def _pair_turn_class(route: planner.RoutePlan) -> int:
    counts = route.turn_counts()
    return counts[planner.COMMAND_LEFT] + counts[planner.COMMAND_RIGHT]


def _balance(pairs: list[tuple[int, int, float]], target: float,
             min_size: int = MIN_POOL) -> list[tuple[int, int]]:
    """Trim the candidate set so the mean route length approaches the
    target, never dropping below the minimum pool size."""
    pool = sorted(pairs, key=lambda p: (p[2], p[0], p[1]))
    total = sum(p[2] for p in pool)
    while len(pool) > min_size:
        mean = total / len(pool)
        if abs(mean - target) <= 0.02 * target:
            break
        # removing the most extreme element on the heavy side moves the
        # mean fastest
        candidate = pool[-1] if mean > target else pool[0]
        new_mean = (total - candidate[2]) / (len(pool) - 1)
        if abs(new_mean - target) >= abs(mean - target):
            break
        pool.remove(candidate)
        total -= candidate[2]
    return [(a, b) for a, b, _ in pool]


def task_pool(town: TownMap, kind: str) -> list[tuple[int, int]]:
    """Deterministic pool of (start, goal) player-spawn index pairs."""
    if kind not in TASK_KINDS:
        raise BenchError(f"unknown task kind {kind!r}")
    if kind == TASK_NAVDYNAMIC:
        kind_key = TASK_NAVIGATION
    else:
        kind_key = kind
    cached = _pool_cache.get((town.id, kind_key))
    if cached is not None:
        return cached

    targets = TASK_TARGETS.get(town.id)
    if targets is None:
        # custom town: scale targets off the declared road length
        base = town.declared_km * 1000.0
        targets = {TASK_STRAIGHT: base * 0.07, TASK_ONETURN: base * 0.14,
                   TASK_NAVIGATION: base * 0.27}
    target = targets[kind_key]
    lo, hi = 0.5 * target, 1.7 * target

    spawns = town.spawn_player
    estimates = _length_estimates(town)
    candidates: list[tuple[int, int, float]] = []
    # stable seed: str hashes are salted per process, crc32 is not
    rng = random.Random(zlib.crc32(f"{town.id}/{kind_key}".encode("utf-8")))
    order = list(range(len(spawns)))
    pair_list = [(i, j) for i in order for j in order if i != j]
    rng.shuffle(pair_list)
    for i, j in pair_list:
        est = estimates(i, j)
        if est is None or not (lo - 40.0 <= est <= hi + 40.0):
            continue
        try:
            route = planner.plan(town, spawns[i], spawns[j])
        except planner.PlanError:
            continue
        length = route.total_length_m
        if not (lo <= length <= hi):
            continue
        turns = _pair_turn_class(route)
        if kind_key == TASK_STRAIGHT and turns != 0:
            continue
        if kind_key == TASK_ONETURN and turns != 1:
            continue
        if kind_key == TASK_NAVIGATION and turns < 2:
            continue
        candidates.append((i, j, length))
        if len(candidates) >= 400:
            break
    if len(candidates) < MIN_POOL:
        raise BenchError(
            f"pool exhausted: town {town.id} task {kind_key} has only "
            f"{len(candidates)} candidate pairs (need {MIN_POOL})")
    pool = _balance(candidates, target)
    _pool_cache[(town.id, kind_key)] = pool
    return pool


def _length_estimates(town: TownMap):
    """All-pairs shortest lengths over the directed-edge graph, used as a
    cheap prefilter before exact planning (connector lengths are ignored, so
    callers must leave slack)."""
    import heapq

    keys = [e.key for e in town.directed_edges]
    index = {k: n for n, k in enumerate(keys)}
    dist_table: list[list[float]] = []
    for start in keys:
        dist = {start: 0.0}
        heap = [(0.0, index[start], start)]
        while heap:
            d, _, k = heapq.heappop(heap)
            if d > dist.get(k, math.inf):
                continue
            edge = town.edge(*k)
            for out in town.edges_from(edge.node_to):
                if out.key == (edge.road_id, -edge.direction):
                    continue
                nd = d + out.length
                if nd < dist.get(out.key, math.inf) - 1e-12:
                    dist[out.key] = nd
                    heapq.heappush(heap, (nd, index[out.key], out.key))
        dist_table.append([dist.get(k, math.inf) for k in keys])

    spawns = town.spawn_player
    projections = []
    for pose in spawns:
        proj = town.project_to_edge(pose.point, pose.heading)
        projections.append(proj)

    def estimate(i: int, j: int) -> float | None:
        pi, pj = projections[i], projections[j]
        if pi is None or pj is None:
            return None
        edge_s, s_s, _ = pi
        edge_g, s_g, _ = pj
        if edge_s.key == edge_g.key and s_g >= s_s:
            return s_g - s_s
        best = math.inf
        row = dist_table[index[edge_s.key]]
        for n, k in enumerate(keys):
            edge_p = town.edge(*k)
            if edge_p.node_to != edge_g.node_from:
                continue
            if k == (edge_g.road_id, -edge_g.direction):
                continue
            d = row[n]
            if d < best:
                best = d
        if not math.isfinite(best):
            return None
        return (edge_s.length - s_s) + best + s_g

    return estimate


def time_budget(town: TownMap, start: Pose, goal: Pose) -> float:
    """Episode limit: the optimal route driven at 10 km/h, in seconds."""
    km = planner.plan(town, start, goal).total_length_km
    return km / BUDGET_SPEED_KMH * 3600.0


# -- episodes -----------------------------------------------------------------

@dataclass(frozen=True)
class EpisodeConfig:
    town_id: str
    weather: str
    task: str
    start_index: int
    goal_index: int
    seed_vehicles: int
    seed_pedestrians: int
    num_vehicles: int
    num_pedestrians: int
    time_budget_s: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def make_suite(town: TownMap, weather_set: str, task: str,
               seed: int) -> list[EpisodeConfig]:
    """25 episode configs drawn deterministically from the task pool."""
    try:
        weathers = WEATHER_SETS[weather_set]
    except KeyError:
        raise BenchError(f"unknown weather set {weather_set!r}") from None
    pool = task_pool(town, task)
    rng = random.Random(seed)
    picks = rng.sample(range(len(pool)), min(SUITE_EPISODES, len(pool)))
    while len(picks) < SUITE_EPISODES:
        picks.append(rng.randrange(len(pool)))
    if task == TASK_NAVDYNAMIC:
        nv, np_ = DYNAMIC_COUNTS.get(town.id,
                                     (min(10, len(town.spawn_vehicles)),
                                      min(20, len(town.spawn_pedestrians))))
    else:
        nv, np_ = 0, 0
    configs = []
    for i, pick in enumerate(picks):
        start, goal = pool[pick]
        budget = time_budget(town, town.spawn_player[start],
                             town.spawn_player[goal])
        configs.append(EpisodeConfig(
            town_id=town.id, weather=weathers[i % len(weathers)], task=task,
            start_index=start, goal_index=goal,
            seed_vehicles=rng.getrandbits(32),
            seed_pedestrians=rng.getrandbits(32),
            num_vehicles=nv, num_pedestrians=np_, time_budget_s=budget))
    return configs


@dataclass(frozen=True)
class InfractionEvent:
    kind: str
    start_tick: int
    duration_s: float  # capped at the event window

    def to_dict(self) -> dict:
        return {"kind": self.kind, "start_tick": self.start_tick,
                "duration_s": self.duration_s}


class InfractionDetector:
    """Per-tick infraction accounting over a measurement stream."""

    def __init__(self):
        self.events: list[InfractionEvent] = []
        self._open: dict[str, int] = {}  # kind -> opening tick
        self._damage_prev = {"collision-static": 0.0, "collision-car": 0.0,
                             "collision-pedestrian": 0.0}
        self._last_tick = 0

    def _close(self, kind: str, tick: int) -> None:
        start = self._open.pop(kind)
        duration = min(EVENT_WINDOW_S, (tick - start) * DT)
        self.events.append(InfractionEvent(kind, start, duration))

    def _update_overlap(self, kind: str, frac: float, tick: int) -> None:
        if kind in self._open:
            if (tick - self._open[kind]) * DT >= EVENT_WINDOW_S:
                self._close(kind, tick)
                if frac > OVERLAP_THRESHOLD:
                    self._open[kind] = tick  # violation continues: new event
            elif frac <= OVERLAP_THRESHOLD:
                self._close(kind, tick)
        elif frac > OVERLAP_THRESHOLD:
            self._open[kind] = tick

    def _update_collision(self, kind: str, total: float, tick: int) -> None:
        delta = total - self._damage_prev[kind]
        self._damage_prev[kind] = total
        if kind in self._open and (tick - self._open[kind]) * DT >= EVENT_WINDOW_S:
            self._close(kind, tick)
        if delta > 1e-12 and kind not in self._open:
            self._open[kind] = tick

    def update(self, m: Measurements, tick: int) -> None:
        self._last_tick = tick
        self._update_overlap("opposite-lane", m.opposite_lane, tick)
        self._update_overlap("sidewalk", m.sidewalk, tick)
        self._update_collision("collision-static", m.collision_static, tick)
        self._update_collision("collision-car", m.collision_car, tick)
        self._update_collision("collision-pedestrian", m.collision_pedestrian, tick)

    def finish(self) -> list[InfractionEvent]:
        for kind in sorted(self._open):
            self._close(kind, self._last_tick + 1)
        self.events.sort(key=lambda e: (e.start_tick, e.kind))
        return self.events


@dataclass
class EpisodeResult:
    config: EpisodeConfig
    success: bool
    completion_time_s: float
    distance_km: float
    infractions: list[InfractionEvent]
    agent_fault: bool = False
    reward_total: float | None = None

    def to_dict(self) -> dict:
        return {"config": self.config.to_dict(), "success": self.success,
                "completion_time_s": self.completion_time_s,
                "distance_km": self.distance_km,
                "infractions": [e.to_dict() for e in self.infractions],
                "agent_fault": self.agent_fault,
                "reward_total": self.reward_total}


def run_episode(town: TownMap, config: EpisodeConfig, agent: AgentInterface,
                collect_reward: bool = False) -> EpisodeResult:
    """Lockstep rollout of one episode against an in-process world."""
    start = town.spawn_player[config.start_index]
    goal = town.spawn_player[config.goal_index]
    meta = MetaCommand(num_vehicles=config.num_vehicles,
                       num_pedestrians=config.num_pedestrians,
                       weather=config.weather,
                       seed_vehicles=config.seed_vehicles,
                       seed_pedestrians=config.seed_pedestrians,
                       cameras=(), player_spawn_index=config.start_index)
    client = InProcessClient(town)
    route = planner.plan(town, start, goal)
    budget_ticks = int(round(config.time_budget_s / DT))
    detector = InfractionDetector()
    agent.reset()
    frame = client.reset(meta)
    distance_km = 0.0
    success = False
    agent_fault = False
    completion = config.time_budget_s
    reward_sum = 0.0
    prev_inputs: RewardInputs | None = None

    for tick in range(budget_ticks + 1):
        m = frame.measurements
        pose = Pose(m.position[0], m.position[1],
                    math.atan2(m.orientation[1], m.orientation[0]))
        try:
            command = planner.current_command(route, pose, town)
        except planner.OffRouteError:
            try:
                route = planner.plan(town, pose, goal)
                command = planner.current_command(route, pose, town)
            except planner.PlanError:
                command = planner.COMMAND_FOLLOW
        if collect_reward:
            try:
                remaining = planner.remaining_distance(route, pose)
            except planner.PlanError:
                remaining = route.total_length_km
            inputs = RewardInputs(
                tick=tick, distance_km=remaining, speed_kmh=m.speed_kmh,
                collision=m.collision_car + m.collision_pedestrian
                + m.collision_static,
                sidewalk=m.sidewalk, opposite=m.opposite_lane)
            if prev_inputs is not None:
                reward_sum += reward(prev_inputs, inputs).total
            prev_inputs = inputs
        if command == planner.COMMAND_GOAL:
            success = True
            completion = tick * DT
            break
        if tick == budget_ticks:
            break
        try:
            control = agent.act(frame, command)
        except Exception:
            agent_fault = True
            break
        frame = client.step(control)
        distance_km += abs(frame.measurements.speed_kmh) / 3.6 * DT / 1000.0
        detector.update(frame.measurements, frame.tick)

    client.close()
    return EpisodeResult(config=config, success=success,
                         completion_time_s=completion,
                         distance_km=distance_km,
                         infractions=detector.finish(),
                         agent_fault=agent_fault,
                         reward_total=reward_sum if collect_reward else None)


# -- agents -------------------------------------------------------------------

class PilotAgent:
    """The modular pipeline wrapped in the benchmark agent interface."""

    def __init__(self, town: TownMap, config=None):
        self._pilot = Pilot(town, config)

    def reset(self) -> None:
        self._pilot.reset()

    def act(self, frame: FrameMsg, command: str) -> Control:
        return self._pilot.act(frame.measurements, command)


class RemoteAgent:
    """Drives an external agent service over the wire protocol: one act
    message per frame, one control message back."""

    def __init__(self, host: str, port: int, timeout: float = 10.0):
        import socket as _socket

        from . import protocol as proto
        self._proto = proto
        self._sock = _socket.socket(_socket.AF_INET, _socket.SOCK_STREAM)
        self._sock.settimeout(timeout)
        self._sock.connect((host, port))
        self._sock.setsockopt(_socket.IPPROTO_TCP, _socket.TCP_NODELAY, 1)

    def reset(self) -> None:
        pass

    def act(self, frame: FrameMsg, command: str) -> Control:
        from .server import read_frame
        proto = self._proto
        self._sock.sendall(proto.encode(proto.ActMsg(frame=frame, command=command)))
        data = read_frame(self._sock)
        if data is None:
            raise RuntimeError("agent service closed the connection")
        reply = proto.decode(data)
        if not isinstance(reply, proto.ControlMsg):
            raise RuntimeError(f"agent service sent {type(reply).__name__}")
        return reply.control

    def close(self) -> None:
        self._sock.close()


def serve_agent(agent: AgentInterface, port: int, host: str = "127.0.0.1",
                once: bool = True) -> None:
    """Expose any agent as a TCP act/control service (the counterpart of
    RemoteAgent / `bench --agent tcp:...`)."""
    import socket as _socket

    from . import protocol as proto
    from .server import read_frame
    listener = _socket.socket(_socket.AF_INET, _socket.SOCK_STREAM)
    listener.setsockopt(_socket.SOL_SOCKET, _socket.SO_REUSEADDR, 1)
    listener.bind((host, port))
    listener.listen(1)
    try:
        while True:
            conn, _ = listener.accept()
            with conn:
                agent.reset()
                while True:
                    data = read_frame(conn)
                    if data is None:
                        break
                    msg = proto.decode(data)
                    if not isinstance(msg, proto.ActMsg):
                        conn.sendall(proto.encode(proto.ErrorMsg(
                            kind=proto.ERR_PROTOCOL, message="expected act")))
                        break
                    control = agent.act(msg.frame, msg.command)
                    conn.sendall(proto.encode(proto.ControlMsg(control=control)))
            if once:
                return
    finally:
        listener.close()


def make_agent(spec: str, town: TownMap, pilot_config=None) -> AgentInterface:
    if spec == "pilot":
        return PilotAgent(town, pilot_config)
    if spec.startswith("tcp:"):
        parts = spec.split(":")
        if len(parts) != 3:
            raise BenchError(f"agent spec {spec!r} must be tcp:HOST:PORT")
        return RemoteAgent(parts[1], int(parts[2]))
    raise BenchError(f"unknown agent spec {spec!r}")


# -- aggregation and reports --------------------------------------------------

@dataclass
class Report:
    tasks: list[str]
    conditions: list[str]
    success_pct: dict[tuple[str, str], float] = field(default_factory=dict)
    km_between: dict[tuple[str, str], str] = field(default_factory=dict)
    total_km: dict[str, float] = field(default_factory=dict)

    def to_text(self) -> str:
        lines = ["Success rate (% of episodes reaching the goal in budget)", ""]
        header = f"{'task':<14}" + "".join(
            f"{CONDITION_TITLES[c]:>22}" for c in self.conditions)
        lines.append(header)
        for task in self.tasks:
            row = f"{task:<14}"
            for cond in self.conditions:
                v = self.success_pct.get((task, cond))
                row += f"{v:>22.0f}" if v is not None else f"{'-':>22}"
            lines.append(row)
        lines += ["", "Average km driven between two infractions", ""]
        lines.append(f"{'infraction':<22}" + "".join(
            f"{CONDITION_TITLES[c]:>22}" for c in self.conditions))
        for kind in INFRACTION_KINDS:
            row = f"{kind:<22}"
            for cond in self.conditions:
                row += f"{self.km_between.get((kind, cond), '-'):>22}"
            lines.append(row)
        return "\n".join(lines) + "\n"


def aggregate(results_by_cell: dict[tuple[str, str], list[EpisodeResult]]) -> Report:
    """Fold episode results into the success grid and the per-kind distance
    between infractions (the '>' convention marks zero-infraction cells)."""
    tasks = sorted({task for task, _ in results_by_cell},
                   key=lambda t: TASK_KINDS.index(t))
    conditions = sorted({cond for _, cond in results_by_cell},
                        key=lambda c: [c0 for c0, _, _ in CONDITIONS].index(c))
    report = Report(tasks=tasks, conditions=conditions)
    for (task, cond), results in sorted(results_by_cell.items()):
        if not results:
            raise BenchError(f"empty benchmark cell {(task, cond)}")
        pct = 100.0 * sum(1 for r in results if r.success) / len(results)
        report.success_pct[(task, cond)] = pct
    for cond in conditions:
        cond_results = [r for (t, c), rs in results_by_cell.items()
                        if c == cond for r in rs]
        total_km = sum(r.distance_km for r in cond_results)
        report.total_km[cond] = total_km
        for kind in INFRACTION_KINDS:
            count = sum(1 for r in cond_results
                        for e in r.infractions if e.kind == kind)
            if count == 0:
                report.km_between[(kind, cond)] = f"> {total_km:.1f}"
            else:
                report.km_between[(kind, cond)] = f"{total_km / count:.2f}"
    return report


def write_reports(out_dir: str | Path, report: Report,
                  results_by_cell: dict[tuple[str, str], list[EpisodeResult]]) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with (out / "episodes.jsonl").open("w", encoding="utf-8") as fh:
        for (task, cond) in sorted(results_by_cell):
            for r in results_by_cell[(task, cond)]:
                row = r.to_dict()
                row["condition"] = cond
                fh.write(json.dumps(row, separators=(",", ":"), sort_keys=True))
                fh.write("\n")
    with (out / "success.csv").open("w", encoding="utf-8") as fh:
        fh.write("task," + ",".join(report.conditions) + "\n")
        for task in report.tasks:
            cells = [f"{report.success_pct.get((task, c), float('nan')):.1f}"
                     for c in report.conditions]
            fh.write(task + "," + ",".join(cells) + "\n")
    with (out / "infractions.csv").open("w", encoding="utf-8") as fh:
        fh.write("kind," + ",".join(report.conditions) + "\n")
        for kind in INFRACTION_KINDS:
            cells = [report.km_between.get((kind, c), "-").replace(",", ";")
                     for c in report.conditions]
            fh.write(kind + "," + ",".join(cells) + "\n")
    (out / "summary.txt").write_text(report.to_text(), encoding="utf-8")


_worker_towns: dict[str, TownMap] = {}


def _episode_worker(args) -> EpisodeResult:
    town_name, town_path, config, agent_spec = args
    town = _worker_towns.get(town_name)
    if town is None:
        if town_path is not None:
            from .town import load_town
            town = load_town(town_path)
        else:
            town = load_bundled(town_name)
        _worker_towns[town_name] = town
    agent = make_agent(agent_spec, town)
    return run_episode(town, config, agent)


def run_grid(agent_spec: str, tasks: list[str], conditions=CONDITIONS,
             seed: int = 0, episodes: int = SUITE_EPISODES, jobs: int = 1,
             pilot_config=None, town_paths: dict[str, str] | None = None,
             progress=None) -> dict[tuple[str, str], list[EpisodeResult]]:
    """Run the benchmark grid; returns results keyed by (task, condition).

    Episodes are independent, so with jobs > 1 they run in worker processes;
    results are collected in submission order, keeping output deterministic.
    """
    towns: dict[str, TownMap] = {}
    results: dict[tuple[str, str], list[EpisodeResult]] = {}
    jobs_list: list[tuple[tuple[str, str], tuple]] = []
    for cond_name, town_name, weather_set in conditions:
        if town_name not in towns:
            if town_paths and town_name in town_paths:
                from .town import load_town
                towns[town_name] = load_town(town_paths[town_name])
            else:
                towns[town_name] = load_bundled(town_name)
        town = towns[town_name]
        for task in tasks:
            suite = make_suite(town, weather_set, task, seed)[:episodes]
            results[(task, cond_name)] = []
            path = town_paths.get(town_name) if town_paths else None
            for config in suite:
                jobs_list.append(((task, cond_name),
                                  (town_name, path, config, agent_spec)))

    if jobs <= 1:
        for cell_key, args in jobs_list:
            result = _episode_worker(args)
            results[cell_key].append(result)
            if progress is not None:
                progress(cell_key[1], cell_key[0], len(results[cell_key]), result)
        return results

    from concurrent.futures import ProcessPoolExecutor
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        futures = [(cell_key, pool.submit(_episode_worker, args))
                   for cell_key, args in jobs_list]
        for cell_key, fut in futures:
            result = fut.result()
            results[cell_key].append(result)
            if progress is not None:
                progress(cell_key[1], cell_key[0], len(results[cell_key]), result)
    return results
