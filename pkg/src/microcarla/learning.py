"""Learning-support toolkit.

Three pieces: the triangular steering-perturbation stream used while
recording demonstrations (the stored action is the expert's, the applied
action is the perturbed one, so a policy trained on the data learns
recoveries), the dense navigation reward, and the agent interface the
benchmark harness drives.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Protocol, runtime_checkable

from .dynamics import DT, Control
from .planner import DRIVING_COMMANDS

REWARD_W_DISTANCE = 1000.0  # per km of progress
REWARD_W_SPEED = 0.05  # per km/h gained
REWARD_W_COLLISION = 0.00002  # per unit of damage
REWARD_W_SIDEWALK = 2.0  # per unit of overlap fraction
REWARD_W_OPPOSITE = 2.0


@dataclass(frozen=True)
class PerturbationConfig:
    p_per_second: float = 0.1
    duration_min: float = 0.5
    duration_max: float = 2.0
    intensity: float = 0.15

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "PerturbationConfig":
        return cls(**d)


@dataclass(frozen=True)
class Impulse:
    t0: float
    duration: float
    sign: int  # -1 or +1
    intensity: float


def s_perturb(t: float, impulse: Impulse) -> float:
    """Triangular steering offset: rises linearly from zero at t0 to
    sign*intensity at the midpoint, back to zero at t0 + duration."""
    if impulse.duration <= 0.0:
        raise ValueError("impulse duration must be positive")
    shape = 1.0 - abs(2.0 * (t - impulse.t0) / impulse.duration - 1.0)
    return impulse.sign * impulse.intensity * max(0.0, shape)


class PerturbationStream:
    """Per-tick steering perturbation.

    At every whole second of driving a new impulse starts with probability
    ``p_per_second``; impulses may overlap and their sum is clamped with the
    expert command into [-1, 1]. Call apply() once per tick in time order.
    """

    def __init__(self, config: PerturbationConfig, rng: random.Random):
        self.config = config
        self.rng = rng
        self.active: list[Impulse] = []
        self.log: list[Impulse] = []
        self._ticks_per_second = int(round(1.0 / DT))

    def apply(self, tick: int, expert_steer: float) -> float:
        t = tick * DT
        if tick % self._ticks_per_second == 0:
            if self.rng.random() < self.config.p_per_second:
                imp = Impulse(
                    t0=t,
                    duration=self.rng.uniform(self.config.duration_min,
                                              self.config.duration_max),
                    sign=self.rng.choice((-1, 1)),
                    intensity=self.config.intensity)
                self.active.append(imp)
                self.log.append(imp)
        offset = 0.0
        still: list[Impulse] = []
        for imp in self.active:
            if t <= imp.t0 + imp.duration:
                offset += s_perturb(t, imp)
                still.append(imp)
        self.active = still
        return min(1.0, max(-1.0, expert_steer + offset))


@dataclass(frozen=True)
class RewardInputs:
    """Per-tick reward ingredients. distance_km is the remaining route
    distance to the goal; collision is the sum of the damage accumulators."""
    tick: int
    distance_km: float
    speed_kmh: float
    collision: float
    sidewalk: float
    opposite: float


@dataclass(frozen=True)
class RewardBreakdown:
    distance: float
    speed: float
    collision: float
    sidewalk: float
    opposite: float

    @property
    def total(self) -> float:
        return (self.distance + self.speed + self.collision + self.sidewalk
                + self.opposite)


def reward(prev: RewardInputs, cur: RewardInputs) -> RewardBreakdown:
    """Weighted five-term reward over one tick of progress."""
    if cur.tick != prev.tick + 1:
        raise ValueError(
            f"reward needs consecutive ticks, got {prev.tick} -> {cur.tick}")
    return RewardBreakdown(
        distance=REWARD_W_DISTANCE * (prev.distance_km - cur.distance_km),
        speed=REWARD_W_SPEED * (cur.speed_kmh - prev.speed_kmh),
        collision=-REWARD_W_COLLISION * (cur.collision - prev.collision),
        sidewalk=-REWARD_W_SIDEWALK * (cur.sidewalk - prev.sidewalk),
        opposite=-REWARD_W_OPPOSITE * (cur.opposite - prev.opposite))


@runtime_checkable
class AgentInterface(Protocol):
    """Anything the benchmark can drive: reset at episode start, then one
    control per frame within the protocol step timeout."""

    def reset(self) -> None: ...

    def act(self, frame, command: str) -> Control: ...


# -- demonstration files -----------------------------------------------------

DEMO_VERSION = 1


@dataclass(frozen=True)
class DemoSample:
    tick: int
    frame_id: int
    command: str  # one of the four driving commands, never goal-reached
    action: Control  # the expert's intent, pre-perturbation
    applied: Control  # what actually drove the simulation
    speed_kmh: float

    def __post_init__(self):
        if self.command not in DRIVING_COMMANDS:
            raise ValueError(f"demo command must be a driving command, "
                             f"got {self.command!r}")


def _control_to_dict(c: Control) -> dict:
    return {"steer": c.steer, "throttle": c.throttle, "brake": c.brake,
            "hand_brake": c.hand_brake, "reverse": c.reverse}


def _control_from_dict(d: dict) -> Control:
    return Control(steer=d["steer"], throttle=d["throttle"], brake=d["brake"],
                   hand_brake=d["hand_brake"], reverse=d["reverse"])


def sample_to_dict(s: DemoSample, frame_dict: dict) -> dict:
    return {"type": "sample", "tick": s.tick, "frame_id": s.frame_id,
            "command": s.command, "action": _control_to_dict(s.action),
            "applied": _control_to_dict(s.applied),
            "speed_kmh": s.speed_kmh, "frame": frame_dict}


def sample_from_dict(d: dict) -> tuple[DemoSample, dict]:
    sample = DemoSample(
        tick=d["tick"], frame_id=d["frame_id"], command=d["command"],
        action=_control_from_dict(d["action"]),
        applied=_control_from_dict(d["applied"]), speed_kmh=d["speed_kmh"])
    return sample, d["frame"]


class DemoWriter:
    """One JSON line per tick after a header line; frames embedded inline."""

    def __init__(self, path: str | Path, *, town_id: str, weather: str,
                 seed_vehicles: int, seed_pedestrians: int,
                 player_spawn_index: int, num_vehicles: int = 0,
                 num_pedestrians: int = 0, cameras: tuple = (),
                 perturbation: PerturbationConfig | None = None):
        self.path = Path(path)
        self._fh = self.path.open("w", encoding="utf-8")
        header = {
            "type": "header", "version": DEMO_VERSION, "town": town_id,
            "weather": weather, "seed_vehicles": seed_vehicles,
            "seed_pedestrians": seed_pedestrians,
            "player_spawn_index": player_spawn_index,
            "num_vehicles": num_vehicles, "num_pedestrians": num_pedestrians,
            "cameras": [c.to_dict() for c in cameras],
            "perturbation": perturbation.to_dict() if perturbation else None,
        }
        self._write_line(header)
        self.samples = 0

    def _write_line(self, obj: dict) -> None:
        self._fh.write(json.dumps(obj, separators=(",", ":"), sort_keys=True))
        self._fh.write("\n")

    def write(self, sample: DemoSample, frame_dict: dict) -> None:
        self._write_line(sample_to_dict(sample, frame_dict))
        self.samples += 1
        self._fh.flush()

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def record_pilot_demo(town, meta, out_path: str | Path, seconds: float,
                      goal_seed: int = 0, perturb: bool = True,
                      demo_seed: int = 0) -> int:
    """Drive the automated expert around random goals for ``seconds`` of sim
    time, recording one sample per tick through the session recorder.
    Returns the number of samples written."""
    import shutil

    from . import planner
    from .protocol import InProcessClient
    from .town import Pose

    rng = random.Random(goal_seed)
    client = InProcessClient(town, demo_dir=str(Path(out_path).parent),
                             demo_seed=demo_seed)
    frame = client.reset(meta)
    ack = client.set_recording(True, perturb=perturb)
    from .pilot import Pilot
    pilot = Pilot(town)

    def pose_of(frame):
        m = frame.measurements
        return Pose(m.position[0], m.position[1],
                    math.atan2(m.orientation[1], m.orientation[0]))

    def new_route(frame):
        pose = pose_of(frame)
        for _ in range(50):
            goal = town.spawn_player[rng.randrange(len(town.spawn_player))]
            try:
                route = planner.plan(town, pose, goal)
            except planner.PlanError:
                continue
            if route.total_length_m > 60.0:
                return route, goal
        raise RuntimeError("could not draw a recording goal")

    route, goal = new_route(frame)
    ticks = int(round(seconds / DT))
    for _ in range(ticks):
        pose = pose_of(frame)
        try:
            command = planner.current_command(route, pose, town)
        except planner.OffRouteError:
            route, goal = new_route(frame)
            command = planner.current_command(route, pose, town)
        if command == "goal-reached":
            route, goal = new_route(frame)
            command = planner.current_command(route, pose, town)
        control = pilot.act(frame.measurements, command)
        frame = client.step(control, command=command)
    ack = client.set_recording(False)
    client.close()
    recorded = Path(ack.path)
    out_path = Path(out_path)
    if recorded.resolve() != out_path.resolve():
        shutil.move(str(recorded), str(out_path))
    return ticks


def replay_demo(path: str | Path, town) -> tuple[bool, int | None]:
    """Feed the applied actions back through a fresh session and compare the
    produced frames with the recorded ones. Returns (ok, divergence tick)."""
    from .protocol import InProcessClient, to_wire
    from .sensors import CameraConfig

    header, samples = read_demo(path)
    if not samples:
        return True, None
    if samples[0][0].tick != 0:
        raise ValueError("replay requires a demo recorded from a fresh reset")
    from .dynamics import MetaCommand
    meta = MetaCommand(
        num_vehicles=header["num_vehicles"],
        num_pedestrians=header["num_pedestrians"],
        weather=header["weather"], seed_vehicles=header["seed_vehicles"],
        seed_pedestrians=header["seed_pedestrians"],
        cameras=tuple(CameraConfig.from_dict(c)
                      for c in header.get("cameras", [])),
        player_spawn_index=header["player_spawn_index"])
    client = InProcessClient(town)
    frame = client.reset(meta)
    for sample, stored in samples:
        actual = json.dumps(to_wire(frame), separators=(",", ":"), sort_keys=True)
        expected = json.dumps(stored, separators=(",", ":"), sort_keys=True)
        if actual != expected:
            client.close()
            return False, sample.tick
        frame = client.step(sample.applied)
    client.close()
    return True, None


def read_demo(path: str | Path) -> tuple[dict, list[tuple[DemoSample, dict]]]:
    """Parse a demo file; truncated trailing lines are dropped so a file cut
    off by a session drop stays readable up to the last complete sample."""
    header: dict | None = None
    samples: list[tuple[DemoSample, dict]] = []
    with Path(path).open("r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError:
                break  # incomplete trailing line
            if obj.get("type") == "header":
                header = obj
            elif obj.get("type") == "sample":
                samples.append(sample_from_dict(obj))
    if header is None:
        raise ValueError(f"{path} has no demo header")
    return header, samples
