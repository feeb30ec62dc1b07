"""Procedural synthetic scene corpus.

Each scenario family produces kinematically consistent world-frame tracks:
per-step speed/heading/accel are finite differences of the positions, so
positions integrate velocities exactly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import geometry as geo
from .scene import AgentTrack, AreaSpec, ConnectorSpec, DividerSpec, LaneSpec, SceneDescription

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

FAMILIES = ("straight_follow", "lane_change", "connector_turn", "pedestrian_crossing")
LANE_WIDTH = 3.5
MARKINGS = (
    "double_dashed_white",
    "single_solid_white",
    "double_solid_white",
    "single_solid_yellow",
    "single_zigzag_white",
    "road_divider",
)


@dataclass
class GeneratorConfig:
    counts: dict = field(default_factory=lambda: {f: 0 for f in FAMILIES})
    speed_amplitude: float = 0.08
    lateral_amplitude: float = 0.12
    history_steps: int = 4
    future_steps: int = 12
    dt: float = 0.5

    @classmethod
    def from_toml(cls, text: str) -> "GeneratorConfig":
        doc = tomllib.loads(text)
        cfg = cls()
        for fam, n in doc.get("counts", {}).items():
            if fam not in FAMILIES:
                raise ValueError(f"unknown scenario family {fam!r}")
            cfg.counts[fam] = int(n)
        noise = doc.get("noise", {})
        cfg.speed_amplitude = float(noise.get("speed_amplitude", cfg.speed_amplitude))
        cfg.lateral_amplitude = float(noise.get("lateral_amplitude", cfg.lateral_amplitude))
        horizon = doc.get("horizon", {})
        cfg.history_steps = int(horizon.get("history_steps", cfg.history_steps))
        cfg.future_steps = int(horizon.get("future_steps", cfg.future_steps))
        cfg.dt = float(horizon.get("dt", cfg.dt))
        return cfg

    def total(self) -> int:
        return sum(self.counts.values())


def generate_synthetic(seed: int, config: GeneratorConfig) -> list[SceneDescription]:
    """Deterministic corpus: families in declaration order, scenes in index order."""
    scenes = []
    for fam_idx, family in enumerate(FAMILIES):
        for i in range(config.counts.get(family, 0)):
            rng = np.random.default_rng([int(seed), fam_idx, i])
            scenes.append(_BUILDERS[family](rng, config, i))
    return scenes


# ------------------------------------------------------------------ helpers

def _track_from_positions(xy: np.ndarray, dt: float, fallback_heading: float) -> dict:
    """Finite-difference kinematics; stationary steps reuse the prior heading."""
    T = len(xy)
    speed = np.zeros(T)
    heading = np.zeros(T)
    diffs = np.diff(xy, axis=0)
    norms = np.linalg.norm(diffs, axis=1)
    speed[1:] = norms / dt
    speed[0] = speed[1] if T > 1 else 0.0
    prev = fallback_heading
    for t in range(1, T):
        if norms[t - 1] > 1e-9:
            prev = math.atan2(diffs[t - 1, 1], diffs[t - 1, 0])
        heading[t] = prev
    heading[0] = heading[1] if T > 1 else fallback_heading
    accel = np.zeros(T)
    accel[1:] = np.diff(speed) / dt
    accel[0] = accel[1] if T > 1 else 0.0
    dheading = np.zeros(T)
    dheading[1:] = geo.wrap_angle(np.diff(heading)) / dt
    return {"xy": xy, "heading": heading, "speed": speed, "accel": accel,
            "heading_change": dheading}


def _agent(aid, atype, size, kin) -> AgentTrack:
    return AgentTrack(aid, atype, size, kin["xy"], kin["heading"], kin["speed"],
                      kin["accel"], kin["heading_change"])


def _speed_profile(rng, config, steps, v0):
    phase = rng.uniform(0, 2 * math.pi)
    amp = rng.uniform(0.0, config.speed_amplitude)
    t = np.arange(steps)
    return v0 * (1.0 + amp * np.sin(2 * math.pi * t / steps + phase))


def _lateral_jitter(rng, config, steps):
    phase = rng.uniform(0, 2 * math.pi)
    amp = rng.uniform(0.0, config.lateral_amplitude)
    t = np.arange(steps)
    return amp * np.sin(2 * math.pi * t / steps * rng.uniform(0.5, 1.5) + phase)


def _integrate_arcs(speeds, dt, start_arc):
    """Arc position per step; speeds[t] moves the agent between t-1 and t."""
    arcs = np.empty(len(speeds))
    arcs[0] = start_arc
    for t in range(1, len(speeds)):
        arcs[t] = arcs[t - 1] + speeds[t] * dt
    return arcs


def _world_frame(rng):
    angle = rng.uniform(0, 2 * math.pi)
    offset = rng.uniform(-200, 200, size=2)
    c, s = math.cos(angle), math.sin(angle)
    rot = np.array([[c, -s], [s, c]])

    def to_world(xy):
        return np.asarray(xy, dtype=np.float64) @ rot.T + offset

    return to_world, angle


def _straight_lane(lane_id, y, length, n_points=9):
    xs = np.linspace(0.0, length, n_points)
    return LaneSpec(lane_id, LANE_WIDTH, np.stack([xs, np.full_like(xs, y)], axis=1))


def _positions_on_straight(arcs, lateral, y):
    return np.stack([arcs, y + lateral], axis=1)


def _transform_scene(sd_parts, to_world, angle, dt):
    lanes, dividers, connectors, areas, agents = sd_parts
    lanes = [LaneSpec(l.id, l.width, to_world(l.centerline)) for l in lanes]
    connectors2 = []
    for c in connectors:
        poses = c.poses.copy()
        poses[:, :2] = to_world(poses[:, :2])
        poses[:, 2] = geo.wrap_angle(poses[:, 2] + angle)
        connectors2.append(ConnectorSpec(c.id, c.incoming, c.outgoing, poses))
    areas = [AreaSpec(a.id, a.kind, to_world(a.polygon)) for a in areas]
    agents2 = []
    for a in agents:
        xy = to_world(a.xy)
        kin = _track_from_positions(xy, dt, geo.wrap_angle(a.heading[0] + angle))
        agents2.append(_agent(a.id, a.type, a.size, kin))
    return lanes, dividers, connectors2, areas, agents2


def _finish(rng, config, family, index, lanes, dividers, connectors, areas, agents, target):
    to_world, angle = _world_frame(rng)
    lanes, dividers, connectors, areas, agents = _transform_scene(
        (lanes, dividers, connectors, areas, agents), to_world, angle, config.dt
    )
    return SceneDescription(
        lanes, dividers, connectors, areas, agents, target,
        config.history_steps, config.future_steps, config.dt,
        meta={"family": family, "index": index},
    )


# ------------------------------------------------------------------ families

def _gen_straight_follow(rng, config, index):
    steps = config.history_steps + config.future_steps
    n_lanes = int(rng.integers(1, 4))
    length = 110.0
    lanes = [_straight_lane(f"L{k}", k * LANE_WIDTH, length) for k in range(n_lanes)]
    dividers = [
        DividerSpec(f"L{k}", f"L{k + 1}", str(rng.choice(MARKINGS)))
        for k in range(n_lanes - 1)
    ]

    lane_idx = int(rng.integers(0, n_lanes))
    v0 = rng.uniform(4.0, 8.0)
    speeds = _speed_profile(rng, config, steps, v0)
    span = float(np.sum(speeds[1:]) * config.dt)
    start = rng.uniform(6.0, max(7.0, length - 6.0 - span))
    arcs = _integrate_arcs(speeds, config.dt, start)
    lat = _lateral_jitter(rng, config, steps)
    xy = _positions_on_straight(arcs, lat, lane_idx * LANE_WIDTH)
    agents = [_agent("target", "car", (4.5, 1.9), _track_from_positions(xy, config.dt, 0.0))]

    if rng.random() < 0.7:  # lead vehicle on the same lane
        gap = rng.uniform(7.0, 22.0)
        lead_speeds = _speed_profile(rng, config, steps, v0 * rng.uniform(0.9, 1.1))
        lead_arcs = _integrate_arcs(lead_speeds, config.dt, start + gap)
        lead_xy = _positions_on_straight(
            np.minimum(lead_arcs, length - 2.0), _lateral_jitter(rng, config, steps),
            lane_idx * LANE_WIDTH,
        )
        atype = str(rng.choice(["car", "truck", "bus"], p=[0.7, 0.2, 0.1]))
        size = {"car": (4.5, 1.9), "truck": (8.5, 2.5), "bus": (11.0, 2.9)}[atype]
        agents.append(_agent("lead", atype, size, _track_from_positions(lead_xy, config.dt, 0.0)))
    return _finish(rng, config, "straight_follow", index, lanes, dividers, [], [], agents, 0)


def _gen_lane_change(rng, config, index):
    steps = config.history_steps + config.future_steps
    n_lanes = int(rng.integers(2, 4))
    length = 110.0
    lanes = [_straight_lane(f"L{k}", k * LANE_WIDTH, length) for k in range(n_lanes)]
    src = int(rng.integers(0, n_lanes))
    dst = src + 1 if src + 1 < n_lanes else src - 1
    dividers = []
    for k in range(n_lanes - 1):
        if k == min(src, dst):
            marking = "double_dashed_white"  # the change has to be permitted
        else:
            marking = str(rng.choice(MARKINGS))
        dividers.append(DividerSpec(f"L{k}", f"L{k + 1}", marking))

    v0 = rng.uniform(5.0, 8.5)
    speeds = _speed_profile(rng, config, steps, v0)
    span = float(np.sum(speeds[1:]) * config.dt)
    start = rng.uniform(6.0, max(7.0, length - 6.0 - span))
    arcs = _integrate_arcs(speeds, config.dt, start)

    # smooth lateral blend from src lane to dst lane in the future window
    t0 = config.history_steps + int(rng.integers(0, 3))
    duration = int(rng.integers(5, 8))
    blend = np.zeros(steps)
    for t in range(steps):
        u = np.clip((t - t0) / duration, 0.0, 1.0)
        blend[t] = u * u * (3 - 2 * u)  # smoothstep
    lat = _lateral_jitter(rng, config, steps) + blend * (dst - src) * LANE_WIDTH
    xy = _positions_on_straight(arcs, lat, src * LANE_WIDTH)
    agents = [_agent("target", "car", (4.5, 1.9), _track_from_positions(xy, config.dt, 0.0))]

    if rng.random() < 0.5:  # neighbor on the destination lane
        gap = rng.uniform(-20.0, 25.0)
        nb_speeds = _speed_profile(rng, config, steps, v0 * rng.uniform(0.85, 1.1))
        nb_arcs = np.clip(_integrate_arcs(nb_speeds, config.dt, start + gap), 1.0, length - 1.0)
        nb_xy = _positions_on_straight(nb_arcs, _lateral_jitter(rng, config, steps),
                                       dst * LANE_WIDTH)
        agents.append(_agent("neighbor", "car", (4.4, 1.8),
                             _track_from_positions(nb_xy, config.dt, 0.0)))
    return _finish(rng, config, "lane_change", index, lanes, dividers, [], [], agents, 0)


def _quarter_arc(center, radius, a0, a1, n=13):
    angles = np.linspace(a0, a1, n)
    pts = np.stack([center[0] + radius * np.cos(angles), center[1] + radius * np.sin(angles)],
                   axis=1)
    yaw = angles + (math.pi / 2 if a1 > a0 else -math.pi / 2)
    return np.concatenate([pts, geo.wrap_angle(yaw)[:, None]], axis=1)


def _gen_connector_turn(rng, config, index):
    steps = config.history_steps + config.future_steps
    approach_len = 55.0
    gap = 14.0  # junction box length bridged by connectors
    out_len = 60.0
    lane_in = _straight_lane("Lin", 0.0, approach_len)
    lane_straight = LaneSpec(
        "Lout_s", LANE_WIDTH,
        np.stack([np.linspace(approach_len + gap, approach_len + gap + out_len, 7),
                  np.zeros(7)], axis=1),
    )
    turn_dir = 1.0 if rng.random() < 0.5 else -1.0
    radius = gap / 2.0
    # quarter arc from the end of Lin to a perpendicular outgoing lane
    arc_center = np.array([approach_len, turn_dir * radius])
    a0, a1 = (-math.pi / 2, 0.0) if turn_dir > 0 else (math.pi / 2, 0.0)
    arc = _quarter_arc(arc_center, radius, a0, a1)
    turn_exit = arc[-1, :2]
    ys = turn_exit[1] + turn_dir * np.linspace(0.0, out_len, 7)
    lane_turn = LaneSpec("Lout_t", LANE_WIDTH,
                         np.stack([np.full_like(ys, turn_exit[0]), ys], axis=1))

    conn_straight = ConnectorSpec(
        "C_straight", "Lin", "Lout_s",
        np.stack([np.linspace(approach_len, approach_len + gap, 8), np.zeros(8), np.zeros(8)],
                 axis=1),
    )
    conn_turn = ConnectorSpec("C_turn", "Lin", "Lout_t", arc)
    lanes = [lane_in, lane_straight, lane_turn]
    connectors = [conn_straight, conn_turn]
    dividers = []
    # parallel approach + outgoing lane pair on the side away from the turn
    if rng.random() < 0.6:
        side_y = -turn_dir * LANE_WIDTH
        lanes.append(_straight_lane("Lin2", side_y, approach_len))
        lanes.append(LaneSpec(
            "Lout_s2", LANE_WIDTH,
            np.stack([np.linspace(approach_len + gap, approach_len + gap + out_len, 7),
                      np.full(7, side_y)], axis=1),
        ))
        connectors.append(ConnectorSpec(
            "C_straight2", "Lin2", "Lout_s2",
            np.stack([np.linspace(approach_len, approach_len + gap, 8), np.full(8, side_y),
                      np.zeros(8)], axis=1),
        ))
        left_in, right_in = ("Lin", "Lin2") if side_y < 0 else ("Lin2", "Lin")
        left_out, right_out = ("Lout_s", "Lout_s2") if side_y < 0 else ("Lout_s2", "Lout_s")
        dividers.append(DividerSpec(left_in, right_in, "double_dashed_white"))
        dividers.append(DividerSpec(left_out, right_out, "double_dashed_white"))
    areas = [
        AreaSpec("junction", "Intersection",
                 np.array([[approach_len, -gap], [approach_len + gap, -gap],
                           [approach_len + gap, gap], [approach_len, gap]])),
        AreaSpec("turn_stop", "TurnStopArea",
                 np.array([[approach_len - 6.0, -LANE_WIDTH / 2], [approach_len, -LANE_WIDTH / 2],
                           [approach_len, LANE_WIDTH / 2], [approach_len - 6.0, LANE_WIDTH / 2]])),
    ]

    take_turn = rng.random() < 0.55
    route_pts = [lane_in.centerline]
    if take_turn:
        route_pts += [arc[:, :2], lane_turn.centerline]
    else:
        route_pts += [conn_straight.poses[:, :2], lane_straight.centerline]
    route = np.concatenate(route_pts, axis=0)
    route = route[np.concatenate([[True], np.linalg.norm(np.diff(route, axis=0), axis=1) > 1e-9])]

    v0 = rng.uniform(4.5, 6.5)
    if rng.random() < 0.3:  # already inside the junction at t = 0
        arc_now = approach_len + rng.uniform(2.0, gap - 2.0)
    else:
        arc_now = approach_len - rng.uniform(6.0, 16.0)
    start = max(arc_now - v0 * config.dt * (config.history_steps - 1), 2.0)
    speeds = _speed_profile(rng, config, steps, v0)
    if take_turn:  # slow through the arc
        ramp = np.linspace(1.0, 0.72, config.future_steps)
        speeds[config.history_steps:] *= ramp
    arcs = _integrate_arcs(speeds, config.dt, start)
    xy = np.stack([geo.point_at_arc(route, a) for a in arcs])
    agents = [_agent("target", "car", (4.5, 1.9), _track_from_positions(xy, config.dt, 0.0))]

    if rng.random() < 0.5:  # vehicle going straight through the junction
        straight_route = np.concatenate(
            [lane_in.centerline, conn_straight.poses[:, :2], lane_straight.centerline], axis=0
        )
        straight_route = straight_route[np.concatenate(
            [[True], np.linalg.norm(np.diff(straight_route, axis=0), axis=1) > 1e-9]
        )]
        ov0 = rng.uniform(4.0, 7.0)
        o_now = approach_len + rng.uniform(-8.0, 8.0)
        o_start = max(o_now - ov0 * config.dt * (config.history_steps - 1), 2.0)
        o_speeds = _speed_profile(rng, config, steps, ov0)
        o_arcs = _integrate_arcs(o_speeds, config.dt, o_start)
        o_xy = np.stack([geo.point_at_arc(straight_route, a) for a in o_arcs])
        agents.append(_agent("other", "car", (4.4, 1.8),
                             _track_from_positions(o_xy, config.dt, 0.0)))
    return _finish(rng, config, "connector_turn", index, lanes, dividers,
                   connectors, areas, agents, 0)


def _gen_pedestrian_crossing(rng, config, index):
    steps = config.history_steps + config.future_steps
    length = 90.0
    lanes = [_straight_lane("L0", 0.0, length)]
    cross_arc = rng.uniform(42.0, 55.0)
    half_w = 2.0
    areas = [
        AreaSpec("crossing", "PedCrossingStopArea",
                 np.array([[cross_arc - half_w, -LANE_WIDTH], [cross_arc + half_w, -LANE_WIDTH],
                           [cross_arc + half_w, LANE_WIDTH], [cross_arc - half_w, LANE_WIDTH]])),
        AreaSpec("walk_s", "Walkway",
                 np.array([[cross_arc - 3, -LANE_WIDTH - 4], [cross_arc + 3, -LANE_WIDTH - 4],
                           [cross_arc + 3, -LANE_WIDTH], [cross_arc - 3, -LANE_WIDTH]])),
        AreaSpec("walk_n", "Walkway",
                 np.array([[cross_arc - 3, LANE_WIDTH], [cross_arc + 3, LANE_WIDTH],
                           [cross_arc + 3, LANE_WIDTH + 4], [cross_arc - 3, LANE_WIDTH + 4]])),
    ]

    v0 = rng.uniform(5.0, 8.0)
    start = cross_arc - rng.uniform(18.0, 28.0) - v0 * config.dt * (config.history_steps - 1)
    start = max(start, 2.0)
    # approach at v0, then brake to a crawl before the crossing
    speeds = np.full(steps, v0)
    speeds[:] = _speed_profile(rng, config, steps, v0)
    v_end = rng.uniform(0.3, 1.2)
    brake_start = config.history_steps + 1
    for t in range(brake_start, steps):
        u = (t - brake_start) / max(steps - brake_start - 1, 1)
        speeds[t] = speeds[t] * (1 - u) + v_end * u
    arcs = _integrate_arcs(speeds, config.dt, start)
    arcs = np.minimum(arcs, cross_arc - rng.uniform(2.5, 5.0))
    xy = _positions_on_straight(arcs, _lateral_jitter(rng, config, steps), 0.0)
    agents = [_agent("target", "car", (4.5, 1.9), _track_from_positions(xy, config.dt, 0.0))]

    ped_speed = rng.uniform(1.1, 1.6)
    side = 1.0 if rng.random() < 0.5 else -1.0
    ped_y0 = side * (LANE_WIDTH + rng.uniform(0.5, 2.0))
    ped_y = ped_y0 - side * ped_speed * config.dt * np.arange(steps)
    ped_x = np.full(steps, cross_arc + rng.uniform(-1.0, 1.0))
    ped_xy = np.stack([ped_x, ped_y], axis=1)
    agents.append(_agent("ped", "pedestrian", (0.6, 0.6),
                         _track_from_positions(ped_xy, config.dt, -side * math.pi / 2)))
    return _finish(rng, config, "pedestrian_crossing", index, lanes, [], [], areas, agents, 0)


_BUILDERS = {
    "straight_follow": _gen_straight_follow,
    "lane_change": _gen_lane_change,
    "connector_turn": _gen_connector_turn,
    "pedestrian_crossing": _gen_pedestrian_crossing,
}
