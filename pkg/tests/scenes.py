"""Hand-built scene fixtures shared across test modules."""
import numpy as np

from trajgraph.scene import (
    AgentTrack,
    AreaSpec,
    ConnectorSpec,
    DividerSpec,
    LaneSpec,
    SceneDescription,
)


def straight_track(start, heading_xy, speed, steps=16, dt=0.5, lateral=0.0):
    """Constant-velocity track along a unit direction."""
    direction = np.asarray(heading_xy, dtype=np.float64)
    direction = direction / np.linalg.norm(direction)
    normal = np.array([-direction[1], direction[0]])
    xy = np.stack(
        [np.asarray(start, dtype=np.float64) + direction * speed * dt * t + normal * lateral
         for t in range(steps)]
    )
    heading = np.full(steps, np.arctan2(direction[1], direction[0]))
    return xy, heading


def make_agent(aid, start, direction, speed, atype="car", steps=16, dt=0.5, lateral=0.0):
    xy, heading = straight_track(start, direction, speed, steps, dt, lateral)
    size = (0.6, 0.6) if atype == "pedestrian" else (4.5, 1.9)
    return AgentTrack(
        aid, atype, size, xy, heading,
        np.full(steps, float(speed)), np.zeros(steps), np.zeros(steps),
    )


def straight_lane(lane_id, y, length=60.0, width=3.5, n=7):
    xs = np.linspace(0.0, length, n)
    return LaneSpec(lane_id, width, np.stack([xs, np.full_like(xs, y)], axis=1))


def two_lane_scene(marking="double_dashed_white", agents=None, target=0):
    lanes = [straight_lane("L0", 0.0), straight_lane("L1", 3.5)]
    dividers = [DividerSpec("L0", "L1", marking)]
    if agents is None:
        agents = [make_agent("a0", (6.0, 0.0), (1.0, 0.0), 5.0)]
    return SceneDescription(lanes, dividers, [], [], agents, target)


def junction_scene(agents=None, target=0):
    """Lane Lin feeding two connectors: straight to Ls, a left turn to Lt."""
    lin = straight_lane("Lin", 0.0, length=40.0, n=5)
    ls = LaneSpec("Ls", 3.5, np.stack([np.linspace(52.0, 92.0, 5), np.zeros(5)], axis=1))
    lt = LaneSpec("Lt", 3.5, np.stack([np.full(5, 46.0), np.linspace(6.0, 46.0, 5)], axis=1))
    straight_poses = np.stack(
        [np.linspace(40.0, 52.0, 7), np.zeros(7), np.zeros(7)], axis=1
    )
    angles = np.linspace(-np.pi / 2, 0.0, 9)
    turn_pts = np.stack([40.0 + 6.0 * np.cos(angles), 6.0 + 6.0 * np.sin(angles)], axis=1)
    turn_poses = np.concatenate([turn_pts, (angles + np.pi / 2)[:, None]], axis=1)
    connectors = [
        ConnectorSpec("Cs", "Lin", "Ls", straight_poses),
        ConnectorSpec("Ct", "Lin", "Lt", turn_poses),
    ]
    if agents is None:
        agents = [make_agent("a0", (20.0, 0.0), (1.0, 0.0), 4.0)]
    return SceneDescription([lin, ls, lt], [], connectors, [], agents, target)
