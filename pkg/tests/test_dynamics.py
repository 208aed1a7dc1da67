import json
import math
import random

import pytest

from microcarla import geometry as geo
from microcarla.dynamics import (CAR_LENGTH, CAR_WIDTH, Control, MetaCommand,
                                 MetaError, OrientedRect, VehicleState,
                                 apply_meta, clamp_control, collide,
                                 overlap_fraction, step)
from microcarla.sensors import assemble_measurements
from microcarla.town import KIND_OPPOSITE_LANE, KIND_SIDEWALK


def fresh_world(town, **kw):
    return apply_meta(town, MetaCommand(**kw))


def test_zero_control_is_a_fixpoint(town_a):
    world = fresh_world(town_a)
    x0, y0, h0 = world.player.x, world.player.y, world.player.heading
    step(world, town_a, Control())
    assert (world.player.x, world.player.y, world.player.heading) == (x0, y0, h0)
    assert world.player.speed == 0.0
    assert world.tick == 1
    assert world.sim_time == pytest.approx(0.1)


def test_full_throttle_first_tick_speed(town_a):
    world = fresh_world(town_a)  # Clear Midday: friction 1.0
    step(world, town_a, Control(throttle=1.0))
    assert world.player.speed == pytest.approx(0.4, abs=1e-12)


def test_friction_scales_acceleration(town_a):
    world = fresh_world(town_a, weather="Hard Rain Midday")  # friction 0.7
    step(world, town_a, Control(throttle=1.0))
    assert world.player.speed == pytest.approx(0.4 * 0.7, abs=1e-12)


def test_coasting_decays_monotonically_to_zero(town_a):
    world = fresh_world(town_a)
    world.player.speed = 3.0
    speeds = []
    for _ in range(100):
        step(world, town_a, Control())
        speeds.append(world.player.speed)
    assert all(b <= a for a, b in zip(speeds, speeds[1:]))
    assert speeds[-1] == 0.0
    # 3.0 m/s at 0.5 m/s^2 rolling drag: zero after exactly 60 ticks
    assert speeds[59] == pytest.approx(0.0, abs=1e-9)


def test_reverse_gear_drives_backward(town_a):
    world = fresh_world(town_a)
    x0 = world.player.x
    for _ in range(10):
        step(world, town_a, Control(throttle=0.5, reverse=True))
    assert world.player.speed < 0.0
    dx = (world.player.x - x0) * math.cos(world.player.heading)
    assert dx < 0.0


def test_hand_brake_acts_as_full_brake(town_a):
    world = fresh_world(town_a)
    world.player.speed = 5.0
    step(world, town_a, Control(hand_brake=True))
    assert world.player.speed == pytest.approx(5.0 - 0.8, abs=1e-12)


def test_clamp_control():
    control, clamped = clamp_control(1.5, 0.5, 0.0)
    assert control.steer == 1.0 and clamped
    control, clamped = clamp_control(-2.0, 2.0, -1.0)
    assert (control.steer, control.throttle, control.brake) == (-1.0, 1.0, 0.0)
    assert clamped
    control, clamped = clamp_control(0.25, 0.5, 0.75)
    assert not clamped


def test_determinism_bit_identical_sequences(town_a):
    def run():
        world = fresh_world(town_a, num_vehicles=8, num_pedestrians=8,
                            seed_vehicles=11, seed_pedestrians=13)
        rng = random.Random(5)
        trace = []
        for _ in range(200):
            control = Control(steer=rng.uniform(-0.2, 0.2),
                              throttle=rng.uniform(0, 1))
            step(world, town_a, control)
            m = assemble_measurements(world, town_a)
            trace.append(json.dumps(m.to_dict(), sort_keys=True))
        return trace

    assert run() == run()


# -- collisions --------------------------------------------------------------

def test_collide_no_contacts_keeps_accumulators(town_a):
    world = fresh_world(town_a)
    collide(world, town_a)
    assert world.damage == {"car": 0.0, "pedestrian": 0.0, "static": 0.0}


def test_collide_static_damage_is_mass_times_speed(town_a):
    world = fresh_world(town_a)
    pole = town_a.obstacles[-1]
    cx = sum(p[0] for p in pole.polygon) / len(pole.polygon)
    cy = sum(p[1] for p in pole.polygon) / len(pole.polygon)
    world.player.x, world.player.y = cx, cy
    world.player.speed = 5.0
    collide(world, town_a)
    assert world.damage["static"] == pytest.approx(5000.0, abs=1e-9)
    assert world.player.speed == 0.0  # bodies stop at contact
    # persisting contact adds no further damage
    collide(world, town_a)
    assert world.damage["static"] == pytest.approx(5000.0, abs=1e-9)


def test_collide_car_damage_uses_relative_speed(town_a):
    world = fresh_world(town_a, num_vehicles=1, seed_vehicles=3)
    npc = world.npcs[0]
    npc.speed = 0.0
    world.player.x, world.player.y = npc.x, npc.y
    world.player.heading = npc.heading
    world.player.speed = 3.0
    collide(world, town_a)
    assert world.damage["car"] == pytest.approx(3000.0, abs=1e-9)


def test_pedestrian_hit_despawns_and_returns_after_50_ticks(town_a):
    world = fresh_world(town_a, num_pedestrians=1, seed_pedestrians=9)
    ped = world.pedestrians[0]
    ped.speed = 0.0
    ped.heading = 0.0
    world.player.x, world.player.y = ped.x, ped.y
    world.player.speed = 1.0
    collide(world, town_a)
    assert world.damage["pedestrian"] == pytest.approx(80.0, abs=1e-9)
    assert not ped.alive
    assert ped.respawn_timer == pytest.approx(5.0)
    # the car keeps rolling; a new pedestrian appears after 50 ticks
    ticks = 0
    while not ped.alive:
        step(world, town_a, Control())
        ticks += 1
        assert ticks <= 50
    assert ticks == 50


# -- overlap fractions ---------------------------------------------------------

def test_overlap_zero_in_own_lane(town_a):
    pose = town_a.spawn_player[0]
    rect = OrientedRect(pose.point, pose.heading, CAR_LENGTH, CAR_WIDTH)
    assert overlap_fraction(rect, town_a, KIND_OPPOSITE_LANE) == 0.0
    assert overlap_fraction(rect, town_a, KIND_SIDEWALK) == 0.0


def test_overlap_one_inside_sidewalk(town_a):
    road = town_a.roads[0]
    (x0, y0), (x1, _) = road.centerline
    center = ((x0 + x1) / 2.0, y0 + 4.5)  # middle of the 2 m band
    rect = OrientedRect(center, 0.0, 4.0, 1.8)
    # the band is 2 m wide and the car 1.8 m: fully inside when centred
    assert overlap_fraction(rect, town_a, KIND_SIDEWALK) == pytest.approx(1.0, abs=1e-9)


def test_overlap_half_on_straddled_edge(town_a):
    road = town_a.roads[0]
    (x0, y0), (x1, _) = road.centerline
    center = ((x0 + x1) / 2.0, y0 + 3.5)  # on the lane/sidewalk boundary
    rect = OrientedRect(center, 0.0, 4.0, 1.8)
    assert overlap_fraction(rect, town_a, KIND_SIDEWALK) == \
        pytest.approx(0.5, abs=1e-6)
    # straddling the centre divider: half the car is on the opposite lane
    rect = OrientedRect(((x0 + x1) / 2.0, y0), 0.0, 4.0, 1.8)
    assert overlap_fraction(rect, town_a, KIND_OPPOSITE_LANE) == \
        pytest.approx(0.5, abs=1e-6)


def sampling_oracle(town, rect: OrientedRect, kind: str, n_side: int = 100,
                    seed: int = 0) -> float:
    """Stratified point-sampling estimate of the overlap fraction."""
    rng = random.Random(seed)
    poly = rect.polygon
    ax, ay = poly[0]
    ux, uy = poly[1][0] - ax, poly[1][1] - ay
    vx, vy = poly[3][0] - ax, poly[3][1] - ay
    want_wrong = kind == KIND_OPPOSITE_LANE
    hits = 0
    for i in range(n_side):
        for j in range(n_side):
            s = (i + rng.random()) / n_side
            t = (j + rng.random()) / n_side
            p = (ax + s * ux + t * vx, ay + s * uy + t * vy)
            q = town.classify(p, rect.heading)
            if want_wrong:
                hits += q.kind == KIND_OPPOSITE_LANE
            else:
                hits += q.kind == KIND_SIDEWALK
    return hits / (n_side * n_side)


@pytest.mark.parametrize("seed", range(12))
def test_overlap_matches_sampling_oracle(town_a, seed):
    rng = random.Random(seed)
    x0, y0, x1, y1 = town_a.bounds
    rect = OrientedRect((rng.uniform(x0 + 5, x1 - 5), rng.uniform(y0 + 5, y1 - 5)),
                        rng.uniform(0, math.tau), CAR_LENGTH, CAR_WIDTH)
    for kind in (KIND_OPPOSITE_LANE, KIND_SIDEWALK):
        exact = overlap_fraction(rect, town_a, kind)
        estimate = sampling_oracle(town_a, rect, kind, n_side=70, seed=seed)
        assert exact == pytest.approx(estimate, abs=4e-3)
        assert 0.0 <= exact <= 1.0


# -- meta ----------------------------------------------------------------------

def test_meta_zero_counts_spawns_only_player(town_a):
    world = fresh_world(town_a, weather="Clear Midday",
                        seed_vehicles=1, seed_pedestrians=1)
    assert world.npcs == [] and world.pedestrians == []
    assert world.tick == 0
    spawn = town_a.spawn_player[0]
    assert (world.player.x, world.player.y) == (spawn.x, spawn.y)


def test_meta_same_seed_same_world(town_a):
    meta = MetaCommand(num_vehicles=6, num_pedestrians=6, seed_vehicles=42,
                       seed_pedestrians=43, player_spawn_index=3)
    w1 = apply_meta(town_a, meta)
    w2 = apply_meta(town_a, meta)
    s1 = [(n.x, n.y, n.heading) for n in w1.npcs] + \
        [(p.x, p.y, p.speed, p.prop) for p in w1.pedestrians]
    s2 = [(n.x, n.y, n.heading) for n in w2.npcs] + \
        [(p.x, p.y, p.speed, p.prop) for p in w2.pedestrians]
    assert s1 == s2


def test_meta_errors(town_a):
    with pytest.raises(MetaError, match="spawn index"):
        apply_meta(town_a, MetaCommand(player_spawn_index=9999))
    with pytest.raises(MetaError, match="vehicle count"):
        apply_meta(town_a, MetaCommand(num_vehicles=10 ** 6))
    with pytest.raises(MetaError, match="pedestrian count"):
        apply_meta(town_a, MetaCommand(num_pedestrians=10 ** 6))
    with pytest.raises(MetaError, match="weather"):
        apply_meta(town_a, MetaCommand(weather="Sideways Sleet"))


# -- accumulated properties over fuzzed rollouts --------------------------------

def test_damage_monotone_and_fractions_bounded(town_a):
    world = fresh_world(town_a, num_vehicles=5, num_pedestrians=5,
                        seed_vehicles=3, seed_pedestrians=4)
    rng = random.Random(1)
    prev = dict(world.damage)
    for _ in range(400):
        control = Control(steer=rng.uniform(-1, 1), throttle=rng.uniform(0, 1),
                          brake=rng.random() < 0.1)
        step(world, town_a, control)
        assert 0.0 <= world.opposite_frac <= 1.0
        assert 0.0 <= world.sidewalk_frac <= 1.0
        for k in prev:
            assert world.damage[k] >= prev[k]
        prev = dict(world.damage)


def test_npcs_never_enter_on_red(town_a):
    """Fuzz run: whenever a traffic vehicle enters an intersection box, the
    light over its approach was not red on the entry tick."""
    world = fresh_world(town_a, num_vehicles=12, seed_vehicles=21,
                        seed_pedestrians=0)
    boxes = [list(i.box) for i in town_a.intersections]

    def inside_box(p):
        for poly in boxes:
            if geo.point_in_convex(p, poly):
                return True
        return False

    inside = [inside_box(n.position) for n in world.npcs]
    for _ in range(10_000):
        pre_time = world.sim_time
        pre_edges = [(b.edge_key, b.in_connector) for b in world.npc_brains]
        step(world, town_a, Control())
        for i, npc in enumerate(world.npcs):
            now_inside = inside_box(npc.position)
            if now_inside and not inside[i]:
                edge_key, was_connector = pre_edges[i]
                if not was_connector:
                    light = town_a.approach_light(*edge_key)
                    if light is not None:
                        assert light.state_at(pre_time) != "red"
            inside[i] = now_inside
