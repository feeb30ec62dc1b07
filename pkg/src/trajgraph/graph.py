"""Typed heterogeneous scene graph: node/edge kinds, feature schemas, validation.

The graph is directed. Node and edge identifiers are dense integers assigned
at insertion, and serialization preserves insertion order so that identical
construction sequences produce byte-identical output.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Optional


class NodeKind(str, Enum):
    # agent view
    SCENE = "Scene"
    SEQUENCE = "Sequence"
    PARTICIPANT = "Participant"
    SCENE_PARTICIPANT = "SceneParticipant"
    # map view
    LANE = "Lane"
    LANE_SNIPPET = "LaneSnippet"
    LANE_SLICE = "LaneSlice"
    LANE_CONNECTOR = "LaneConnector"
    ORDERED_POSE = "OrderedPose"
    CARPARK_AREA = "CarparkArea"
    WALKWAY = "Walkway"
    INTERSECTION = "Intersection"
    PED_CROSSING_STOP_AREA = "PedCrossingStopArea"
    STOP_SIGN_AREA = "StopSignArea"
    TRAFFIC_LIGHT_STOP_AREA = "TrafficLightStopArea"
    TURN_STOP_AREA = "TurnStopArea"
    YIELD_STOP_AREA = "YieldStopArea"


class EdgeKind(str, Enum):
    # agent view
    HAS_SCENE_PARTICIPANT = "hasSceneParticipant"
    IN_NEXT_SCENE = "inNextScene"
    HAS_NEXT_SCENE = "hasNextScene"
    HAS_PREVIOUS_SCENE = "hasPreviousScene"
    IS_SCENE_PARTICIPANT = "isSceneParticipant"
    # map view
    SWITCH_DOUBLE_DASHED_WHITE = "switchViaDoubleDashedWhite"
    SWITCH_ROAD_DIVIDER = "switchViaRoadDivider"
    SWITCH_SINGLE_ZIGZAG_WHITE = "switchViaSingleZigzagWhite"
    SWITCH_DOUBLE_SOLID_WHITE = "switchViaDoubleSolidWhite"
    SWITCH_SINGLE_SOLID_YELLOW = "switchViaSingleSolidYellow"
    SWITCH_SINGLE_SOLID_WHITE = "switchViaSingleSolidWhite"
    IS_SLICE_ON_STOP_AREA = "isSliceOnStopArea"
    IS_POSE_ON_STOP_AREA = "isPoseOnStopArea"
    CONNECTS_INCOMING = "connectsIncoming"
    CONNECTS_OUTGOING = "connectsOutgoing"
    HAS_NEXT_LANE = "hasNextLane"
    HAS_NEXT_SNIPPET = "hasNextSnippet"
    HAS_NEXT_SLICE = "hasNextSlice"
    # interaction
    IS_ON_MAP_ELEMENT = "isOnMapElement"
    RELATED_LONGITUDINAL = "relatedLongitudinal"
    RELATED_LATERAL = "relatedLateral"
    RELATED_INTERSECTING = "relatedIntersecting"
    RELATED_PEDESTRIAN = "relatedPedestrian"
    # compact mode: the six switchVia* sub-classes merged by crossing permission
    SWITCH_PERMITTED = "switchViaPermitted"
    SWITCH_NON_PERMITTED = "switchViaNonPermitted"
    # fully-connected ablation topology uses this single kind
    CONNECTED = "connected"


AGENT_VIEW_KINDS = frozenset(
    {NodeKind.SCENE, NodeKind.SEQUENCE, NodeKind.PARTICIPANT, NodeKind.SCENE_PARTICIPANT}
)
MAP_VIEW_KINDS = frozenset(set(NodeKind) - AGENT_VIEW_KINDS)
STOP_AREA_KINDS = frozenset(
    {
        NodeKind.PED_CROSSING_STOP_AREA,
        NodeKind.STOP_SIGN_AREA,
        NodeKind.TRAFFIC_LIGHT_STOP_AREA,
        NodeKind.TURN_STOP_AREA,
        NodeKind.YIELD_STOP_AREA,
    }
)

SWITCH_KINDS_ORIGINAL = (
    EdgeKind.SWITCH_DOUBLE_DASHED_WHITE,
    EdgeKind.SWITCH_ROAD_DIVIDER,
    EdgeKind.SWITCH_SINGLE_ZIGZAG_WHITE,
    EdgeKind.SWITCH_DOUBLE_SOLID_WHITE,
    EdgeKind.SWITCH_SINGLE_SOLID_YELLOW,
    EdgeKind.SWITCH_SINGLE_SOLID_WHITE,
)
SWITCH_KINDS_ALL = SWITCH_KINDS_ORIGINAL + (
    EdgeKind.SWITCH_PERMITTED,
    EdgeKind.SWITCH_NON_PERMITTED,
)

# dashed markings may be crossed; solid, zigzag and physical dividers may not
COMPACT_REMAP = {
    EdgeKind.SWITCH_DOUBLE_DASHED_WHITE: EdgeKind.SWITCH_PERMITTED,
    EdgeKind.SWITCH_ROAD_DIVIDER: EdgeKind.SWITCH_NON_PERMITTED,
    EdgeKind.SWITCH_SINGLE_ZIGZAG_WHITE: EdgeKind.SWITCH_NON_PERMITTED,
    EdgeKind.SWITCH_DOUBLE_SOLID_WHITE: EdgeKind.SWITCH_NON_PERMITTED,
    EdgeKind.SWITCH_SINGLE_SOLID_YELLOW: EdgeKind.SWITCH_NON_PERMITTED,
    EdgeKind.SWITCH_SINGLE_SOLID_WHITE: EdgeKind.SWITCH_NON_PERMITTED,
}

PERMITTED_SWITCH_KINDS = frozenset(
    {EdgeKind.SWITCH_DOUBLE_DASHED_WHITE, EdgeKind.SWITCH_PERMITTED}
)

# participant category and motion-state vocabularies (one-hot encoded)
PARTICIPANT_TYPES = ("car", "truck", "bus", "bicycle", "pedestrian")
PARTICIPANT_STATES = ("moving", "stopped")

# fixed feature-vector length per node kind; kinds absent here carry no
# features and are represented downstream by a learned per-kind embedding
FEATURE_LENGTHS = {
    NodeKind.SCENE_PARTICIPANT: 1 + len(PARTICIPANT_STATES) + 2 + 1 + 1 + 1 + 1,  # 9
    NodeKind.PARTICIPANT: len(PARTICIPANT_TYPES) + 2,  # 7
    NodeKind.SEQUENCE: 1,
    NodeKind.LANE_SNIPPET: 1,
    NodeKind.LANE_SLICE: 4,  # width, center x/y/yaw
    NodeKind.ORDERED_POSE: 3,  # center x/y/yaw
}

# attribute schema per edge kind: name -> (lo, hi) closed bounds, None = unbounded
_POS = (0.0, None)
EDGE_ATTR_SCHEMA = {
    EdgeKind.IN_NEXT_SCENE: {"time_elapsed": _POS},
    EdgeKind.HAS_NEXT_SCENE: {"time_elapsed": _POS},
    EdgeKind.HAS_PREVIOUS_SCENE: {"time_elapsed": _POS},
    EdgeKind.IS_ON_MAP_ELEMENT: {"probability": (0.0, 1.0)},
    EdgeKind.RELATED_LONGITUDINAL: {"path_distance": _POS},
    EdgeKind.RELATED_LATERAL: {"path_distance": _POS},
    EdgeKind.RELATED_INTERSECTING: {"path_distance": _POS},
    EdgeKind.RELATED_PEDESTRIAN: {"distance": _POS},
}

# endpoint-compatibility table: edge kind -> set of (src kind, dst kind).
# Chain containment reuses the hasNext* kinds with the parent element as
# chain head (Lane -> first LaneSnippet, LaneSnippet -> first LaneSlice,
# LaneConnector -> first OrderedPose).
_SWITCH_ENDPOINTS = frozenset(
    {
        (NodeKind.LANE_SLICE, NodeKind.LANE_SLICE),
        (NodeKind.LANE_SNIPPET, NodeKind.LANE_SNIPPET),
    }
)
ENDPOINT_TABLE: dict[EdgeKind, frozenset] = {
    EdgeKind.HAS_SCENE_PARTICIPANT: frozenset({(NodeKind.SCENE, NodeKind.SCENE_PARTICIPANT)}),
    EdgeKind.IS_SCENE_PARTICIPANT: frozenset(
        {(NodeKind.SCENE_PARTICIPANT, NodeKind.PARTICIPANT)}
    ),
    EdgeKind.IN_NEXT_SCENE: frozenset({(NodeKind.SCENE_PARTICIPANT, NodeKind.SCENE)}),
    EdgeKind.HAS_NEXT_SCENE: frozenset(
        {
            (NodeKind.SCENE, NodeKind.SCENE),
            (NodeKind.SCENE_PARTICIPANT, NodeKind.SCENE_PARTICIPANT),
        }
    ),
    EdgeKind.HAS_PREVIOUS_SCENE: frozenset(
        {
            (NodeKind.SCENE, NodeKind.SCENE),
            (NodeKind.SCENE_PARTICIPANT, NodeKind.SCENE_PARTICIPANT),
        }
    ),
    EdgeKind.IS_SLICE_ON_STOP_AREA: frozenset(
        (NodeKind.LANE_SLICE, area) for area in STOP_AREA_KINDS
    ),
    EdgeKind.IS_POSE_ON_STOP_AREA: frozenset(
        (NodeKind.ORDERED_POSE, area) for area in STOP_AREA_KINDS
    ),
    EdgeKind.CONNECTS_INCOMING: frozenset({(NodeKind.LANE_SNIPPET, NodeKind.LANE_CONNECTOR)}),
    EdgeKind.CONNECTS_OUTGOING: frozenset({(NodeKind.LANE_CONNECTOR, NodeKind.LANE_SNIPPET)}),
    EdgeKind.HAS_NEXT_LANE: frozenset({(NodeKind.LANE, NodeKind.LANE)}),
    EdgeKind.HAS_NEXT_SNIPPET: frozenset(
        {
            (NodeKind.LANE_SNIPPET, NodeKind.LANE_SNIPPET),
            (NodeKind.LANE, NodeKind.LANE_SNIPPET),
        }
    ),
    EdgeKind.HAS_NEXT_SLICE: frozenset(
        {
            (NodeKind.LANE_SLICE, NodeKind.LANE_SLICE),
            (NodeKind.LANE_SNIPPET, NodeKind.LANE_SLICE),
            (NodeKind.ORDERED_POSE, NodeKind.ORDERED_POSE),
            (NodeKind.LANE_CONNECTOR, NodeKind.ORDERED_POSE),
        }
    ),
    EdgeKind.IS_ON_MAP_ELEMENT: frozenset(
        (NodeKind.SCENE_PARTICIPANT, kind) for kind in MAP_VIEW_KINDS
    ),
    EdgeKind.RELATED_LONGITUDINAL: frozenset(
        {(NodeKind.SCENE_PARTICIPANT, NodeKind.SCENE_PARTICIPANT)}
    ),
    EdgeKind.RELATED_LATERAL: frozenset(
        {(NodeKind.SCENE_PARTICIPANT, NodeKind.SCENE_PARTICIPANT)}
    ),
    EdgeKind.RELATED_INTERSECTING: frozenset(
        {(NodeKind.SCENE_PARTICIPANT, NodeKind.SCENE_PARTICIPANT)}
    ),
    EdgeKind.RELATED_PEDESTRIAN: frozenset(
        {(NodeKind.SCENE_PARTICIPANT, NodeKind.SCENE_PARTICIPANT)}
    ),
    EdgeKind.CONNECTED: None,  # any endpoints
}
for _k in SWITCH_KINDS_ALL:
    ENDPOINT_TABLE[_k] = _SWITCH_ENDPOINTS


@dataclass
class Node:
    id: int
    kind: NodeKind
    features: tuple[float, ...] = ()


@dataclass
class Edge:
    src: int
    dst: int
    kind: EdgeKind
    attrs: dict = field(default_factory=dict)


@dataclass
class Violation:
    code: str
    subject: str
    message: str

    def __str__(self):
        return f"[{self.code}] {self.subject}: {self.message}"


@dataclass
class ValidationReport:
    violations: list[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def add(self, code, subject, message):
        self.violations.append(Violation(code, subject, message))

    def __str__(self):
        if self.ok:
            return "valid"
        return "\n".join(str(v) for v in self.violations)


class SceneGraph:
    """Directed typed graph over map elements and agents.

    Treated as immutable once construction is finished; all reads are safe
    to share across threads.
    """

    def __init__(self, history_steps: int = 4, future_steps: int = 12):
        self.nodes: list[Node] = []
        self.edges: list[Edge] = []
        self.target: Optional[int] = None
        self.history_steps = history_steps
        self.future_steps = future_steps
        self._out: dict[int, list[int]] = {}

    def add_node(self, kind: NodeKind, features: Iterable[float] = ()) -> int:
        nid = len(self.nodes)
        self.nodes.append(Node(nid, NodeKind(kind), tuple(float(f) for f in features)))
        self._out[nid] = []
        return nid

    def add_edge(self, src: int, dst: int, kind: EdgeKind, attrs: Optional[dict] = None) -> None:
        self.edges.append(Edge(src, dst, EdgeKind(kind), dict(attrs or {})))
        if src in self._out:
            self._out[src].append(len(self.edges) - 1)

    def kind_of(self, nid: int) -> NodeKind:
        return self.nodes[nid].kind

    def nodes_of_kind(self, kind: NodeKind) -> list[int]:
        return [n.id for n in self.nodes if n.kind == kind]

    def out_edges(self, v: int) -> list[Edge]:
        if v not in self._out:
            raise KeyError(f"node absent: {v}")
        return [self.edges[i] for i in self._out[v]]

    def neighbors(self, v: int, kind: Optional[EdgeKind] = None) -> list[int]:
        """Out-neighbors of ``v`` whose edge matches ``kind`` (all kinds if None),
        in insertion order."""
        return [e.dst for e in self.out_edges(v) if kind is None or e.kind == kind]

    def edge_kinds_used(self) -> set[EdgeKind]:
        return {e.kind for e in self.edges}

    # -- serialization: line-delimited JSON, insertion order preserved --

    def to_jsonl(self) -> str:
        rows = [
            {
                "record": "header",
                "version": 1,
                "target": self.target,
                "history_steps": self.history_steps,
                "future_steps": self.future_steps,
            }
        ]
        for n in self.nodes:
            rows.append(
                {"record": "node", "id": n.id, "kind": n.kind.value, "features": list(n.features)}
            )
        for e in self.edges:
            rows.append(
                {
                    "record": "edge",
                    "src": e.src,
                    "dst": e.dst,
                    "kind": e.kind.value,
                    "attrs": e.attrs,
                }
            )
        return "\n".join(json.dumps(r, sort_keys=True, separators=(",", ":")) for r in rows) + "\n"

    @classmethod
    def from_jsonl(cls, text: str) -> "SceneGraph":
        g = None
        for line in text.splitlines():
            if not line.strip():
                continue
            row = json.loads(line)
            rec = row.get("record")
            if rec == "header":
                g = cls(row["history_steps"], row["future_steps"])
                g.target = row["target"]
            elif rec == "node":
                assert g is not None, "header record must come first"
                nid = g.add_node(NodeKind(row["kind"]), row["features"])
                assert nid == row["id"], "node ids must be dense and in order"
            elif rec == "edge":
                assert g is not None, "header record must come first"
                g.add_edge(row["src"], row["dst"], EdgeKind(row["kind"]), row["attrs"])
            else:
                raise ValueError(f"unknown record type: {rec!r}")
        if g is None:
            raise ValueError("empty graph document")
        return g


def validate(g: SceneGraph) -> ValidationReport:
    """Check every structural invariant; violations are data, not failures."""
    report = ValidationReport()
    n = len(g.nodes)
    for node in g.nodes:
        expect = FEATURE_LENGTHS.get(node.kind, 0)
        if len(node.features) != expect:
            report.add(
                "feature length",
                f"node {node.id}",
                f"{node.kind.value} expects {expect} features, got {len(node.features)}",
            )
            continue
        if any(not math.isfinite(f) for f in node.features):
            report.add("feature finite", f"node {node.id}", "non-finite feature value")
            continue
        if node.kind == NodeKind.SCENE_PARTICIPANT:
            _check_one_hot(report, node, node.features[1 : 1 + len(PARTICIPANT_STATES)], "state")
        elif node.kind == NodeKind.PARTICIPANT:
            _check_one_hot(report, node, node.features[: len(PARTICIPANT_TYPES)], "type")

    for i, e in enumerate(g.edges):
        subject = f"edge {i} ({e.kind.value})"
        if not (0 <= e.src < n and 0 <= e.dst < n):
            report.add("endpoint absent", subject, f"src={e.src} dst={e.dst}")
            continue
        allowed = ENDPOINT_TABLE[e.kind]
        pair = (g.nodes[e.src].kind, g.nodes[e.dst].kind)
        if allowed is not None and pair not in allowed:
            report.add(
                "endpoint kind", subject, f"{pair[0].value} -> {pair[1].value} not permitted"
            )
        schema = EDGE_ATTR_SCHEMA.get(e.kind, {})
        if set(e.attrs) != set(schema):
            report.add(
                "attribute set",
                subject,
                f"expected {sorted(schema)}, got {sorted(e.attrs)}",
            )
            continue
        for name, (lo, hi) in schema.items():
            val = e.attrs[name]
            if not isinstance(val, (int, float)) or not math.isfinite(val):
                report.add("attribute finite", subject, f"{name}={val!r}")
            elif (lo is not None and val < lo) or (hi is not None and val > hi):
                report.add("attribute out of range", subject, f"{name}={val}")

    # target may be unset on map fragments; the model entry point requires it
    if g.target is not None and not (0 <= g.target < n):
        report.add("target", "graph", f"target id {g.target} absent")
    elif g.target is not None and g.nodes[g.target].kind != NodeKind.SCENE_PARTICIPANT:
        report.add("target", "graph", f"target kind is {g.nodes[g.target].kind.value}")
    if g.history_steps < 2 or g.future_steps < 1:
        report.add("horizon", "graph", f"({g.history_steps}, {g.future_steps})")
    return report


def _check_one_hot(report, node, sub, label):
    if not all(f in (0.0, 1.0) for f in sub) or sum(sub) != 1.0:
        report.add("one-hot", f"node {node.id}", f"{label} vector {list(sub)} is not one-hot")


def compact(g: SceneGraph) -> SceneGraph:
    """Merge the six switchVia* sub-classes into permitted / non-permitted."""
    out = SceneGraph(g.history_steps, g.future_steps)
    for node in g.nodes:
        out.add_node(node.kind, node.features)
    for e in g.edges:
        out.add_edge(e.src, e.dst, COMPACT_REMAP.get(e.kind, e.kind), e.attrs)
    out.target = g.target
    return out


def strip_edge_kinds(g: SceneGraph, kinds: Iterable[EdgeKind]) -> SceneGraph:
    """Copy of ``g`` without any edge whose kind is in ``kinds``; nodes unchanged."""
    drop = set(kinds)
    out = SceneGraph(g.history_steps, g.future_steps)
    for node in g.nodes:
        out.add_node(node.kind, node.features)
    for e in g.edges:
        if e.kind not in drop:
            out.add_edge(e.src, e.dst, e.kind, e.attrs)
    out.target = g.target
    return out


def entity_nodes(g: SceneGraph) -> list[int]:
    """Nodes carrying latent embeddings downstream: the most recent
    SceneParticipant of each agent chain, lane snippets, lane connectors."""
    heads = []
    for nid in g.nodes_of_kind(NodeKind.SCENE_PARTICIPANT):
        succ = [
            d
            for d in g.neighbors(nid, EdgeKind.HAS_NEXT_SCENE)
            if g.kind_of(d) == NodeKind.SCENE_PARTICIPANT
        ]
        if not succ:
            heads.append(nid)
    return heads + g.nodes_of_kind(NodeKind.LANE_SNIPPET) + g.nodes_of_kind(NodeKind.LANE_CONNECTOR)


def to_topology(g: SceneGraph, topology: str) -> SceneGraph:
    """Rebuild the relational structure for the graph-topology ablations.

    ``knowledge`` returns the graph unchanged; ``fully_connected`` keeps the
    nodes and joins every ordered pair of embedding-carrying entities with the
    single generic kind; ``unconnected`` keeps nodes only.
    """
    if topology == "knowledge":
        return g
    out = SceneGraph(g.history_steps, g.future_steps)
    for node in g.nodes:
        out.add_node(node.kind, node.features)
    out.target = g.target
    if topology == "fully_connected":
        ents = entity_nodes(g)
        for a in ents:
            for b in ents:
                if a != b:
                    out.add_edge(a, b, EdgeKind.CONNECTED)
    elif topology != "unconnected":
        raise ValueError(f"unknown topology: {topology!r}")
    return out
