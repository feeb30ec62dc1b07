"""Scene files: parsing, target-centric normalization, graph construction.

Scene file format (JSON, documented in docs/formats.md): top-level keys
"format_version", "map", "agents", "target", "horizon". All operations here
are pure functions; a SceneDescription is never mutated in place.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from . import geometry as geo
from .graph import (
    EdgeKind,
    NodeKind,
    PARTICIPANT_STATES,
    PARTICIPANT_TYPES,
    SceneGraph,
)

SCENE_FORMAT_VERSION = 1
DT = 0.5  # seconds between samples (2 Hz)

SLICE_SPACING = 2.0  # m of arc length between lane slices
SNIPPET_MAX_LEN = 20.0  # m of arc length per lane snippet
PROJECTION_GATE = 10.0  # m; candidates beyond this are off-road
PROJECTION_SIGMA = 2.0  # m; probability ~ exp(-d^2 / sigma^2)
PEDESTRIAN_RADIUS = 15.0  # m
MOVING_SPEED_THRESHOLD = 0.5  # m/s; below this an agent counts as stopped

MARKING_TO_EDGE = {
    "double_dashed_white": EdgeKind.SWITCH_DOUBLE_DASHED_WHITE,
    "road_divider": EdgeKind.SWITCH_ROAD_DIVIDER,
    "single_zigzag_white": EdgeKind.SWITCH_SINGLE_ZIGZAG_WHITE,
    "double_solid_white": EdgeKind.SWITCH_DOUBLE_SOLID_WHITE,
    "single_solid_yellow": EdgeKind.SWITCH_SINGLE_SOLID_YELLOW,
    "single_solid_white": EdgeKind.SWITCH_SINGLE_SOLID_WHITE,
}

AREA_KINDS = {
    "PedCrossingStopArea": NodeKind.PED_CROSSING_STOP_AREA,
    "StopSignArea": NodeKind.STOP_SIGN_AREA,
    "TrafficLightStopArea": NodeKind.TRAFFIC_LIGHT_STOP_AREA,
    "TurnStopArea": NodeKind.TURN_STOP_AREA,
    "YieldStopArea": NodeKind.YIELD_STOP_AREA,
    "CarparkArea": NodeKind.CARPARK_AREA,
    "Walkway": NodeKind.WALKWAY,
    "Intersection": NodeKind.INTERSECTION,
}


class SceneSyntaxError(ValueError):
    def __init__(self, message, line=None):
        super().__init__(f"line {line}: {message}" if line is not None else message)
        self.line = line


class SceneSemanticError(ValueError):
    def __init__(self, subject, message):
        super().__init__(f"{subject}: {message}")
        self.subject = subject


@dataclass
class Trajectory:
    """Ordered 2 Hz (x, y) samples with optional per-step attributes."""

    points: np.ndarray  # (T, 2)
    speed: Optional[np.ndarray] = None
    heading: Optional[np.ndarray] = None

    def __len__(self):
        return len(self.points)


@dataclass
class LaneSpec:
    id: str
    width: float
    centerline: np.ndarray  # (n, 2)


@dataclass
class DividerSpec:
    left: str
    right: str
    marking: str


@dataclass
class ConnectorSpec:
    id: str
    incoming: str
    outgoing: str
    poses: np.ndarray  # (n, 3): x, y, yaw


@dataclass
class AreaSpec:
    id: str
    kind: str
    polygon: np.ndarray  # (n, 2)


@dataclass
class AgentTrack:
    id: str
    type: str
    size: tuple[float, float]
    xy: np.ndarray  # (T, 2)
    heading: np.ndarray
    speed: np.ndarray
    accel: np.ndarray
    heading_change: np.ndarray


@dataclass
class SceneDescription:
    lanes: list[LaneSpec]
    dividers: list[DividerSpec]
    connectors: list[ConnectorSpec]
    areas: list[AreaSpec]
    agents: list[AgentTrack]
    target: int
    history_steps: int = 4
    future_steps: int = 12
    dt: float = DT
    meta: dict = field(default_factory=dict)

    @property
    def steps(self) -> int:
        return self.history_steps + self.future_steps

    @property
    def now_index(self) -> int:
        """Track index of t = 0 (the last observed sample)."""
        return self.history_steps - 1

    def future_of(self, agent_index: int) -> Trajectory:
        a = self.agents[agent_index]
        lo = self.history_steps
        return Trajectory(
            a.xy[lo:].copy(), speed=a.speed[lo:].copy(), heading=a.heading[lo:].copy()
        )

    def history_slice(self):
        return slice(0, self.history_steps)


# ---------------------------------------------------------------- parsing

def parse_scene(text: str) -> SceneDescription:
    """Parse and semantically check a scene file."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as err:
        raise SceneSyntaxError(err.msg, line=err.lineno) from err
    if doc.get("format_version") != SCENE_FORMAT_VERSION:
        raise SceneSemanticError("scene", f"unsupported format_version {doc.get('format_version')!r}")
    for key in ("map", "agents", "target", "horizon"):
        if key not in doc:
            raise SceneSemanticError("scene", f"missing top-level key {key!r}")

    horizon = doc["horizon"]
    h, f = int(horizon["history_steps"]), int(horizon["future_steps"])
    steps = h + f
    m = doc["map"]

    lanes = []
    lane_ids = set()
    for row in m.get("lanes", []):
        cl = np.asarray(row["centerline"], dtype=np.float64)
        if cl.ndim != 2 or cl.shape[1] != 2 or len(cl) < 2:
            raise SceneSemanticError(f"lane {row['id']}", "centerline needs >= 2 (x, y) points")
        if not np.all(np.isfinite(cl)):
            raise SceneSemanticError(f"lane {row['id']}", "non-finite centerline coordinate")
        if row["id"] in lane_ids:
            raise SceneSemanticError(f"lane {row['id']}", "duplicate lane id")
        lane_ids.add(row["id"])
        lanes.append(LaneSpec(row["id"], float(row["width"]), cl))

    dividers = []
    for row in m.get("dividers", []):
        if row["marking"] not in MARKING_TO_EDGE:
            raise SceneSemanticError("divider", f"unknown marking {row['marking']!r}")
        for side in ("left", "right"):
            if row[side] not in lane_ids:
                raise SceneSemanticError("divider", f"unknown lane {row[side]!r}")
        dividers.append(DividerSpec(row["left"], row["right"], row["marking"]))

    connectors = []
    for row in m.get("connectors", []):
        poses = np.asarray(row["poses"], dtype=np.float64)
        if poses.ndim != 2 or poses.shape[1] != 3 or len(poses) < 2:
            raise SceneSemanticError(f"connector {row['id']}", "poses need >= 2 (x, y, yaw) rows")
        if not np.all(np.isfinite(poses)):
            raise SceneSemanticError(f"connector {row['id']}", "non-finite pose")
        for side in ("incoming", "outgoing"):
            if row[side] not in lane_ids:
                raise SceneSemanticError(f"connector {row['id']}", f"unknown lane {row[side]!r}")
        connectors.append(ConnectorSpec(row["id"], row["incoming"], row["outgoing"], poses))

    areas = []
    for row in m.get("areas", []):
        if row["kind"] not in AREA_KINDS:
            raise SceneSemanticError(f"area {row['id']}", f"unknown kind {row['kind']!r}")
        poly = np.asarray(row["polygon"], dtype=np.float64)
        if poly.ndim != 2 or poly.shape[1] != 2 or len(poly) < 3:
            raise SceneSemanticError(f"area {row['id']}", "polygon needs >= 3 points")
        areas.append(AreaSpec(row["id"], row["kind"], poly))

    agents = []
    for row in doc["agents"]:
        subject = f"agent {row['id']}"
        if row["type"] not in PARTICIPANT_TYPES:
            raise SceneSemanticError(subject, f"unknown type {row['type']!r}")
        track = row["track"]
        if len(track) != steps:
            raise SceneSemanticError(subject, f"track has {len(track)} steps, expected {steps}")
        xy = np.array([[p["x"], p["y"]] for p in track], dtype=np.float64)
        heading = np.array([p["heading"] for p in track], dtype=np.float64)
        speed = np.array([p["speed"] for p in track], dtype=np.float64)
        accel = np.array([p["accel"] for p in track], dtype=np.float64)
        dheading = np.array([p["heading_change"] for p in track], dtype=np.float64)
        for name, arr in (("coordinates", xy), ("heading", heading), ("speed", speed),
                          ("accel", accel), ("heading_change", dheading)):
            if not np.all(np.isfinite(arr)):
                raise SceneSemanticError(subject, f"non-finite {name}")
        size = (float(row["size"][0]), float(row["size"][1]))
        agents.append(AgentTrack(row["id"], row["type"], size, xy, heading, speed, accel, dheading))

    target = int(doc["target"])
    if not (0 <= target < len(agents)):
        raise SceneSemanticError("scene", f"target index {target} out of range")
    return SceneDescription(
        lanes, dividers, connectors, areas, agents, target, h, f,
        float(horizon.get("dt", DT)), dict(doc.get("meta", {})),
    )


def scene_to_json(sd: SceneDescription) -> str:
    doc = {
        "format_version": SCENE_FORMAT_VERSION,
        "meta": sd.meta,
        "horizon": {"history_steps": sd.history_steps, "future_steps": sd.future_steps, "dt": sd.dt},
        "map": {
            "lanes": [
                {"id": l.id, "width": l.width, "centerline": l.centerline.tolist()}
                for l in sd.lanes
            ],
            "dividers": [
                {"left": d.left, "right": d.right, "marking": d.marking} for d in sd.dividers
            ],
            "connectors": [
                {"id": c.id, "incoming": c.incoming, "outgoing": c.outgoing, "poses": c.poses.tolist()}
                for c in sd.connectors
            ],
            "areas": [
                {"id": a.id, "kind": a.kind, "polygon": a.polygon.tolist()} for a in sd.areas
            ],
        },
        "agents": [
            {
                "id": a.id,
                "type": a.type,
                "size": list(a.size),
                "track": [
                    {
                        "x": a.xy[t, 0],
                        "y": a.xy[t, 1],
                        "heading": a.heading[t],
                        "speed": a.speed[t],
                        "accel": a.accel[t],
                        "heading_change": a.heading_change[t],
                    }
                    for t in range(len(a.xy))
                ],
            }
            for a in sd.agents
        ],
        "target": sd.target,
    }
    return json.dumps(doc, sort_keys=True, separators=(",", ":"))


# ------------------------------------------------------- frame normalization

def normalize_frame(sd: SceneDescription) -> SceneDescription:
    """Rigidly move the scene into the target-centric frame.

    Origin: target position at t=0. +x axis: displacement from t=-1 to t=0
    (stored heading at t=0 when the target is stationary).
    """
    tgt = sd.agents[sd.target]
    now = sd.now_index
    p0 = tgt.xy[now]
    d = p0 - tgt.xy[now - 1]
    if np.linalg.norm(d) < 1e-9:
        angle = float(tgt.heading[now])
    else:
        angle = math.atan2(d[1], d[0])

    def move_xy(xy):
        return geo.rigid_transform(xy, p0, angle)

    lanes = [replace(l, centerline=move_xy(l.centerline)) for l in sd.lanes]
    connectors = []
    for c in sd.connectors:
        poses = c.poses.copy()
        poses[:, :2] = move_xy(poses[:, :2])
        poses[:, 2] = geo.wrap_angle(poses[:, 2] - angle)
        connectors.append(replace(c, poses=poses))
    areas = [replace(a, polygon=move_xy(a.polygon)) for a in sd.areas]
    agents = [
        replace(a, xy=move_xy(a.xy), heading=geo.wrap_angle(a.heading - angle))
        for a in sd.agents
    ]
    meta = dict(sd.meta)
    meta["frame"] = {"origin": [float(p0[0]), float(p0[1])], "rotation": angle}
    return replace(sd, lanes=lanes, connectors=connectors, areas=areas, agents=agents, meta=meta)


# --------------------------------------------------------------- map layout

@dataclass
class SliceInfo:
    node: int
    lane: str
    snippet_index: int
    center: np.ndarray
    yaw: float
    arc: float  # arc position along the whole lane


@dataclass
class SnippetInfo:
    node: int
    lane: str
    index: int
    arc_start: float
    arc_end: float
    slices: list[int]  # node ids in chain order


@dataclass
class ConnectorInfo:
    node: int
    id: str
    incoming: str
    outgoing: str
    pose_nodes: list[int]
    poses: np.ndarray


@dataclass
class MapLayout:
    """Deterministic map portion of the scene graph plus geometric indexes."""

    graph: SceneGraph
    lane_nodes: dict[str, int]
    snippets: list[SnippetInfo]
    slices: list[SliceInfo]
    connectors: list[ConnectorInfo]
    area_nodes: dict[str, int]
    lane_snippets: dict[str, list[int]]  # lane id -> snippet node ids in order
    slice_by_node: dict[int, SliceInfo] = field(default_factory=dict)
    snippet_by_node: dict[int, SnippetInfo] = field(default_factory=dict)
    connector_by_node: dict[int, ConnectorInfo] = field(default_factory=dict)

    def __post_init__(self):
        self.slice_by_node = {s.node: s for s in self.slices}
        self.snippet_by_node = {s.node: s for s in self.snippets}
        self.connector_by_node = {c.node: c for c in self.connectors}

    @classmethod
    def from_scene(cls, sd: SceneDescription) -> "MapLayout":
        g = SceneGraph(sd.history_steps, sd.future_steps)
        lane_nodes: dict[str, int] = {}
        snippets: list[SnippetInfo] = []
        slices: list[SliceInfo] = []
        lane_snippets: dict[str, list[int]] = {}

        for lane in sd.lanes:
            lane_nodes[lane.id] = g.add_node(NodeKind.LANE)
            pts = geo.resample_polyline(lane.centerline, SLICE_SPACING)
            arcs = geo.cum_arclength(pts)
            yaws = geo.polyline_yaw(pts)
            total = arcs[-1]
            n_snippets = max(1, int(math.ceil(total / SNIPPET_MAX_LEN - 1e-9)))
            bounds = np.linspace(0.0, total, n_snippets + 1)
            lane_snippets[lane.id] = []
            prev_snip = None
            used = 0
            for si in range(n_snippets):
                lo, hi = bounds[si], bounds[si + 1]
                snode = g.add_node(NodeKind.LANE_SNIPPET, (hi - lo,))
                info = SnippetInfo(snode, lane.id, si, lo, hi, [])
                snippets.append(info)
                lane_snippets[lane.id].append(snode)
                if si == 0:
                    g.add_edge(lane_nodes[lane.id], snode, EdgeKind.HAS_NEXT_SNIPPET)
                else:
                    g.add_edge(prev_snip, snode, EdgeKind.HAS_NEXT_SNIPPET)
                prev_snip = snode
                prev_slice = None
                while used < len(pts) and (arcs[used] < hi - 1e-9 or si == n_snippets - 1):
                    node = g.add_node(
                        NodeKind.LANE_SLICE,
                        (lane.width, pts[used, 0], pts[used, 1], yaws[used]),
                    )
                    slices.append(
                        SliceInfo(node, lane.id, si, pts[used].copy(), float(yaws[used]), float(arcs[used]))
                    )
                    info.slices.append(node)
                    head = snode if prev_slice is None else prev_slice
                    g.add_edge(head, node, EdgeKind.HAS_NEXT_SLICE)
                    prev_slice = node
                    used += 1

        connectors: list[ConnectorInfo] = []
        for c in sd.connectors:
            cnode = g.add_node(NodeKind.LANE_CONNECTOR)
            pose_nodes = []
            prev = cnode
            for pose in c.poses:
                pnode = g.add_node(NodeKind.ORDERED_POSE, tuple(pose))
                g.add_edge(prev, pnode, EdgeKind.HAS_NEXT_SLICE)
                pose_nodes.append(pnode)
                prev = pnode
            connectors.append(ConnectorInfo(cnode, c.id, c.incoming, c.outgoing, pose_nodes, c.poses))

        area_nodes = {a.id: g.add_node(AREA_KINDS[a.kind]) for a in sd.areas}

        layout = cls(g, lane_nodes, snippets, slices, connectors, area_nodes, lane_snippets)

        # lateral switch relations from divider markings, slice and snippet level
        for div in sd.dividers:
            kind = MARKING_TO_EDGE[div.marking]
            for a_id, b_id in ((div.left, div.right), (div.right, div.left)):
                layout._emit_switch_edges(a_id, b_id, kind)

        # junction connectivity
        for c in connectors:
            g.add_edge(lane_snippets[c.incoming][-1], c.node, EdgeKind.CONNECTS_INCOMING)
            g.add_edge(c.node, lane_snippets[c.outgoing][0], EdgeKind.CONNECTS_OUTGOING)

        # stop-area containment
        area_by_id = {a.id: a for a in sd.areas}
        for aid, anode in area_nodes.items():
            area = area_by_id[aid]
            if AREA_KINDS[area.kind] not in (
                NodeKind.PED_CROSSING_STOP_AREA,
                NodeKind.STOP_SIGN_AREA,
                NodeKind.TRAFFIC_LIGHT_STOP_AREA,
                NodeKind.TURN_STOP_AREA,
                NodeKind.YIELD_STOP_AREA,
            ):
                continue
            for s in slices:
                if geo.point_in_polygon(area.polygon, s.center):
                    g.add_edge(s.node, anode, EdgeKind.IS_SLICE_ON_STOP_AREA)
            for c in connectors:
                for pnode, pose in zip(c.pose_nodes, c.poses):
                    if geo.point_in_polygon(area.polygon, pose[:2]):
                        g.add_edge(pnode, anode, EdgeKind.IS_POSE_ON_STOP_AREA)
        return layout

    def _emit_switch_edges(self, from_lane: str, to_lane: str, kind: EdgeKind):
        g = self.graph
        from_slices = [s for s in self.slices if s.lane == from_lane]
        to_slices = [s for s in self.slices if s.lane == to_lane]
        if not from_slices or not to_slices:
            return
        to_centers = np.stack([s.center for s in to_slices])
        snippet_pairs = set()
        for s in from_slices:
            d = np.linalg.norm(to_centers - s.center, axis=1)
            j = int(np.argmin(d))
            other = to_slices[j]
            g.add_edge(s.node, other.node, kind)
            pair = (
                self.lane_snippets[from_lane][s.snippet_index],
                self.lane_snippets[to_lane][other.snippet_index],
            )
            snippet_pairs.add(pair)
        for a, b in sorted(snippet_pairs):
            g.add_edge(a, b, kind)

    def lane_of_slice(self, node: int) -> str:
        return self.slice_by_node[node].lane

    def lane_polyline(self, lane_id: str) -> np.ndarray:
        own = [s for s in self.slices if s.lane == lane_id]
        return np.stack([s.center for s in own])


# ---------------------------------------------------------------- projection

def project_is_on(sd: SceneDescription, agent_index: int, layout: Optional[MapLayout] = None):
    """Probability projection of an agent's t=0 pose onto map elements.

    One candidate per lane (its nearest slice) and per connector (its nearest
    ordered pose, keyed to the connector node), gated by distance. Returns a
    list of (node id, probability) summing to 1, or empty when off-road.
    """
    layout = layout or MapLayout.from_scene(sd)
    pos = sd.agents[agent_index].xy[sd.now_index]
    cands = []
    by_lane: dict[str, tuple[int, float]] = {}
    for s in layout.slices:
        d = float(np.linalg.norm(s.center - pos))
        if d <= PROJECTION_GATE and (s.lane not in by_lane or d < by_lane[s.lane][1]):
            by_lane[s.lane] = (s.node, d)
    cands.extend(by_lane[lane.id] for lane in sd.lanes if lane.id in by_lane)
    for c in layout.connectors:
        d = float(np.min(np.linalg.norm(c.poses[:, :2] - pos, axis=1)))
        if d <= PROJECTION_GATE:
            cands.append((c.node, d))
    if not cands:
        return []
    d2 = np.array([d * d for _, d in cands])
    logits = -d2 / (PROJECTION_SIGMA**2)
    w = np.exp(logits - logits.max())
    w /= w.sum()
    return [(node, float(p)) for (node, _), p in zip(cands, w)]


def best_lane_projection(sd: SceneDescription, agent_index: int, layout: MapLayout):
    """Most probable lane for an agent with its arc position, or None."""
    proj = project_is_on(sd, agent_index, layout)
    lane_mass: dict[str, float] = {}
    for node, p in proj:
        if node in layout.slice_by_node:
            lane = layout.slice_by_node[node].lane
            lane_mass[lane] = lane_mass.get(lane, 0.0) + p
    if not lane_mass:
        return None
    lane = max(lane_mass, key=lambda k: (lane_mass[k], k))
    pos = sd.agents[agent_index].xy[sd.now_index]
    _, arc = geo.project_to_polyline(layout.lane_polyline(lane), pos)
    return lane, arc


# ---------------------------------------------------------------- relations

def _lane_adjacency(sd: SceneDescription) -> set[tuple[str, str]]:
    pairs = set()
    for d in sd.dividers:
        pairs.add((d.left, d.right))
        pairs.add((d.right, d.left))
    return pairs


def derive_relations(sd: SceneDescription, layout: Optional[MapLayout] = None):
    """Interaction relations between agent pairs at t=0.

    Returns a list of (src agent index, dst agent index, EdgeKind, attrs).
    relatedLongitudinal/Lateral/Intersecting are mutually exclusive per
    ordered pair, in that precedence order.
    """
    layout = layout or MapLayout.from_scene(sd)
    adjacency = _lane_adjacency(sd)
    out_connectors: dict[str, list[ConnectorInfo]] = {}
    for c in layout.connectors:
        out_connectors.setdefault(c.incoming, []).append(c)

    projections = [best_lane_projection(sd, i, layout) for i in range(len(sd.agents))]
    lane_len = {l.id: geo.cum_arclength(layout.lane_polyline(l.id))[-1] for l in sd.lanes}

    relations = []
    n = len(sd.agents)
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            pi, pj = projections[i], projections[j]
            if pi is not None and pj is not None:
                lane_i, arc_i = pi
                lane_j, arc_j = pj
                if lane_i == lane_j:
                    relations.append(
                        (i, j, EdgeKind.RELATED_LONGITUDINAL,
                         {"path_distance": abs(arc_j - arc_i)})
                    )
                elif (lane_i, lane_j) in adjacency:
                    _, arc_on_i = geo.project_to_polyline(
                        layout.lane_polyline(lane_i), sd.agents[j].xy[sd.now_index]
                    )
                    relations.append(
                        (i, j, EdgeKind.RELATED_LATERAL,
                         {"path_distance": abs(arc_on_i - arc_i)})
                    )
                else:
                    # routes conflict when i's lane connects into j's lane or
                    # both lanes' connectors merge into a common outgoing lane
                    ci = out_connectors.get(lane_i, [])
                    cj = out_connectors.get(lane_j, [])
                    conflict = any(c.outgoing == lane_j for c in ci) or (
                        {c.outgoing for c in ci} & {c.outgoing for c in cj}
                    )
                    if conflict:
                        relations.append(
                            (i, j, EdgeKind.RELATED_INTERSECTING,
                             {"path_distance": max(lane_len[lane_i] - arc_i, 0.0)})
                        )
        if sd.agents[i].type == "pedestrian":
            pos_i = sd.agents[i].xy[sd.now_index]
            for j in range(n):
                if i == j:
                    continue
                dist = float(np.linalg.norm(sd.agents[j].xy[sd.now_index] - pos_i))
                if dist <= PEDESTRIAN_RADIUS:
                    relations.append((i, j, EdgeKind.RELATED_PEDESTRIAN, {"distance": dist}))
    return relations


# ------------------------------------------------------------- scene graph

def distance_to_centerline(sd: SceneDescription, layout: MapLayout, point) -> float:
    best = math.inf
    for lane in sd.lanes:
        d, _ = geo.project_to_polyline(layout.lane_polyline(lane.id), point)
        best = min(best, d)
    return best if math.isfinite(best) else 0.0


def participant_features(agent: AgentTrack):
    one_hot = [1.0 if agent.type == t else 0.0 for t in PARTICIPANT_TYPES]
    return tuple(one_hot) + (agent.size[0], agent.size[1])


def scene_participant_features(agent: AgentTrack, t: int, d_centerline: float):
    state = "moving" if agent.speed[t] > MOVING_SPEED_THRESHOLD else "stopped"
    state_hot = [1.0 if state == s else 0.0 for s in PARTICIPANT_STATES]
    return (
        (float(agent.heading[t]),)
        + tuple(state_hot)
        + (float(agent.xy[t, 0]), float(agent.xy[t, 1]))
        + (float(agent.speed[t]), float(agent.accel[t]), float(agent.heading_change[t]),
           float(d_centerline))
    )


def build_graph(sd: SceneDescription) -> SceneGraph:
    """Construct the full typed scene graph from a normalized scene.

    Only history steps contribute nodes; the future track is the label and
    never enters the graph.
    """
    layout = MapLayout.from_scene(sd)
    g = layout.graph
    h = sd.history_steps

    scene_nodes = [g.add_node(NodeKind.SCENE) for _ in range(h)]
    for t in range(h - 1):
        g.add_edge(scene_nodes[t], scene_nodes[t + 1], EdgeKind.HAS_NEXT_SCENE,
                   {"time_elapsed": sd.dt})
        g.add_edge(scene_nodes[t + 1], scene_nodes[t], EdgeKind.HAS_PREVIOUS_SCENE,
                   {"time_elapsed": sd.dt})

    sp_nodes: list[list[int]] = []
    for agent in sd.agents:
        pnode = g.add_node(NodeKind.PARTICIPANT, participant_features(agent))
        chain = []
        for t in range(h):
            d_cl = distance_to_centerline(sd, layout, agent.xy[t])
            sp = g.add_node(NodeKind.SCENE_PARTICIPANT,
                            scene_participant_features(agent, t, d_cl))
            chain.append(sp)
            g.add_edge(scene_nodes[t], sp, EdgeKind.HAS_SCENE_PARTICIPANT)
            g.add_edge(sp, pnode, EdgeKind.IS_SCENE_PARTICIPANT)
            if t > 0:
                g.add_edge(chain[t - 1], sp, EdgeKind.HAS_NEXT_SCENE, {"time_elapsed": sd.dt})
                g.add_edge(sp, chain[t - 1], EdgeKind.HAS_PREVIOUS_SCENE, {"time_elapsed": sd.dt})
            if t + 1 < h:
                g.add_edge(sp, scene_nodes[t + 1], EdgeKind.IN_NEXT_SCENE, {"time_elapsed": sd.dt})
        sp_nodes.append(chain)

    # probability projection onto map elements (slice / connector level, plus
    # per-snippet aggregates so snippet-level relations are first-class)
    for i in range(len(sd.agents)):
        head = sp_nodes[i][-1]
        proj = project_is_on(sd, i, layout)
        snippet_mass: dict[int, float] = {}
        for node, p in proj:
            g.add_edge(head, node, EdgeKind.IS_ON_MAP_ELEMENT, {"probability": p})
            info = layout.slice_by_node.get(node)
            if info is not None:
                snip = layout.lane_snippets[info.lane][info.snippet_index]
                snippet_mass[snip] = snippet_mass.get(snip, 0.0) + p
        for snip in sorted(snippet_mass):
            g.add_edge(head, snip, EdgeKind.IS_ON_MAP_ELEMENT,
                       {"probability": min(snippet_mass[snip], 1.0)})

    for i, j, kind, attrs in derive_relations(sd, layout):
        g.add_edge(sp_nodes[i][-1], sp_nodes[j][-1], kind, attrs)

    g.target = sp_nodes[sd.target][-1]
    return g
