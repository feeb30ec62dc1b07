"""Typed walk templates over the scene graph and anchor-path generation.

Three templates describe the permitted maneuvers around the projected
position: changing lanes, leaving a connector onto a lane, and entering a
connector from a lane. Instances are typed walks (node revisits allowed),
matched only through permitted lateral switches.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import geometry as geo
from .graph import (
    EdgeKind,
    NodeKind,
    PERMITTED_SWITCH_KINDS,
    SceneGraph,
)

ANCHOR_RESAMPLE_M = 1.0
ROUTE_MAX_ELEMENTS = 12  # forward-closure cap per route expansion

# edge-role matchers used by the templates
_MATCHERS = {
    "isOn": lambda kind: kind == EdgeKind.IS_ON_MAP_ELEMENT,
    "switch": lambda kind: kind in PERMITTED_SWITCH_KINDS,
    "connects_out": lambda kind: kind == EdgeKind.CONNECTS_OUTGOING,
    "connects_in": lambda kind: kind == EdgeKind.CONNECTS_INCOMING,
}


@dataclass(frozen=True)
class MetaPathTemplate:
    """Alternating edge-role / node-kind chain starting at a SceneParticipant."""

    id: str
    steps: tuple  # ((edge role, node kind), ...)


TEMPLATES = (
    MetaPathTemplate(
        "lane_change",
        (
            ("isOn", NodeKind.LANE_SNIPPET),
            ("switch", NodeKind.LANE_SNIPPET),
            ("switch", NodeKind.LANE_SNIPPET),
        ),
    ),
    MetaPathTemplate(
        "leave_connector",
        (
            ("isOn", NodeKind.LANE_CONNECTOR),
            ("connects_out", NodeKind.LANE_SNIPPET),
            ("switch", NodeKind.LANE_SNIPPET),
        ),
    ),
    MetaPathTemplate(
        "enter_connector",
        (
            ("isOn", NodeKind.LANE_SNIPPET),
            ("switch", NodeKind.LANE_SNIPPET),
            ("connects_in", NodeKind.LANE_CONNECTOR),
        ),
    ),
)
TEMPLATE_IDS = tuple(t.id for t in TEMPLATES)


@dataclass(frozen=True)
class MetaPathInstance:
    template_id: str
    nodes: tuple  # (participant, element, element, element)
    edges: tuple  # EdgeKind per hop

    @property
    def terminus(self) -> int:
        return self.nodes[-1]


def extract_meta_paths(g: SceneGraph, agent: int) -> list[MetaPathInstance]:
    """All template instances starting at ``agent``, deduplicated, in
    deterministic (template, DFS) order. Agents without projection edges
    yield an empty list."""
    if g.kind_of(agent) != NodeKind.SCENE_PARTICIPANT:
        raise ValueError(f"meta-paths start at a SceneParticipant, got node {agent}")
    out = []
    seen = set()
    for template in TEMPLATES:
        stack = [(agent, (agent,), ())]
        results = []
        while stack:
            node, chain, kinds = stack.pop()
            depth = len(chain) - 1
            if depth == len(template.steps):
                key = (template.id, chain)
                if key not in seen:
                    seen.add(key)
                    results.append(MetaPathInstance(template.id, chain, kinds))
                continue
            role, want_kind = template.steps[depth]
            matcher = _MATCHERS[role]
            # reversed so DFS visits edges in insertion order
            for e in reversed(g.out_edges(node)):
                if matcher(e.kind) and g.kind_of(e.dst) == want_kind:
                    stack.append((e.dst, chain + (e.dst,), kinds + (e.kind,)))
        out.extend(results)
    return out


def meta_path_neighbors(instances, include_intermediate: bool = False):
    """Per template: start node -> set of reachable nodes.

    Default is chain-terminus semantics; ``include_intermediate`` adds every
    element on the chain. The start node itself is excluded (no self loop).
    """
    neighbors: dict[str, dict[int, set]] = {tid: {} for tid in TEMPLATE_IDS}
    for inst in instances:
        per_node = neighbors[inst.template_id].setdefault(inst.nodes[0], set())
        reached = inst.nodes[1:] if include_intermediate else (inst.terminus,)
        per_node.update(n for n in reached if n != inst.nodes[0])
    return neighbors


# ------------------------------------------------------------- anchor paths

@dataclass
class AnchorPath:
    polyline: np.ndarray  # (n, 2), resampled at 1 m arc length
    route: list  # LaneSnippet / LaneConnector node ids, chain-connected
    probability: float
    maneuver: str  # keep / change / branch provenance label
    meta: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "polyline": self.polyline.tolist(),
            "route": list(self.route),
            "probability": self.probability,
            "maneuver": self.maneuver,
        }


def _is_on_elements(g: SceneGraph, agent: int):
    """(node, probability) projection targets of kind snippet/connector."""
    out = []
    for e in g.out_edges(agent):
        if e.kind == EdgeKind.IS_ON_MAP_ELEMENT and g.kind_of(e.dst) in (
            NodeKind.LANE_SNIPPET,
            NodeKind.LANE_CONNECTOR,
        ):
            out.append((e.dst, float(e.attrs.get("probability", 0.0))))
    return out


def _forward_routes(g: SceneGraph, start: int, limit=ROUTE_MAX_ELEMENTS):
    """Chain-connected route expansions from a snippet/connector, branching
    at every connector; ends at dead ends or the element cap."""
    routes = []
    stack = [(start, [start])]
    while stack:
        node, route = stack.pop()
        if len(route) >= limit:
            routes.append(route)
            continue
        succ = []
        kind = g.kind_of(node)
        if kind == NodeKind.LANE_SNIPPET:
            succ = [
                d for d in g.neighbors(node, EdgeKind.HAS_NEXT_SNIPPET)
                if g.kind_of(d) == NodeKind.LANE_SNIPPET
            ]
            succ += g.neighbors(node, EdgeKind.CONNECTS_INCOMING)
        elif kind == NodeKind.LANE_CONNECTOR:
            succ = g.neighbors(node, EdgeKind.CONNECTS_OUTGOING)
        succ = [s for s in succ if s not in route]
        if not succ:
            routes.append(route)
            continue
        for s in reversed(succ):
            stack.append((s, route + [s]))
    return routes


def element_points(g: SceneGraph, node: int) -> np.ndarray:
    """Geometry backing a snippet (slice centers) or connector (pose points)."""
    kind = g.kind_of(node)
    pts = []
    cursor = g.neighbors(node, EdgeKind.HAS_NEXT_SLICE)
    want = NodeKind.LANE_SLICE if kind == NodeKind.LANE_SNIPPET else NodeKind.ORDERED_POSE
    cursor = [c for c in cursor if g.kind_of(c) == want]
    while cursor:
        head = cursor[0]
        feats = g.nodes[head].features
        pts.append(feats[1:3] if want == NodeKind.LANE_SLICE else feats[0:2])
        cursor = [
            c for c in g.neighbors(head, EdgeKind.HAS_NEXT_SLICE) if g.kind_of(c) == want
        ]
    return np.array(pts, dtype=np.float64).reshape(-1, 2)


def _route_polyline(g: SceneGraph, route, start_xy) -> np.ndarray:
    pts = []
    for node in route:
        pts.append(element_points(g, node))
    pts = [p for p in pts if len(p)]
    if not pts:
        return np.zeros((0, 2))
    poly = np.concatenate(pts, axis=0)
    keep = np.concatenate([[True], np.linalg.norm(np.diff(poly, axis=0), axis=1) > 1e-9])
    poly = poly[keep]
    # trim everything behind the agent's projection onto the route
    _, arc = geo.project_to_polyline(poly, start_xy)
    arcs = geo.cum_arclength(poly)
    ahead = poly[arcs >= arc - 1e-9]
    if len(ahead) < 2:
        ahead = poly[-2:]
    return geo.resample_polyline(ahead, ANCHOR_RESAMPLE_M)


def generate_anchor_paths(g: SceneGraph, agent: int, count: int = 5) -> list[AnchorPath]:
    """Up to ``count`` permitted route polylines for the agent: keep-lane with
    every connector branch, plus permitted lateral changes. Ranked by origin
    projection probability, keep before change, then route length."""
    elements = _is_on_elements(g, agent)
    start_xy = np.array(g.nodes[agent].features[3:5])
    candidates = []  # (sort key, AnchorPath)
    seen_routes = set()

    def add_route(route, prob, maneuver):
        key = tuple(route)
        if key in seen_routes:
            return
        seen_routes.add(key)
        poly = _route_polyline(g, route, start_xy)
        if len(poly) < 2:
            return
        arc_len = geo.cum_arclength(poly)[-1]
        rank = (-prob, 0 if maneuver == "keep" else 1, -arc_len, key)
        candidates.append((rank, AnchorPath(poly, list(route), prob, maneuver)))

    for element, prob in elements:
        for route in _forward_routes(g, element):
            add_route(route, prob, "keep")
        if g.kind_of(element) == NodeKind.LANE_SNIPPET:
            for nb in g.out_edges(element):
                if nb.kind in PERMITTED_SWITCH_KINDS and g.kind_of(nb.dst) == NodeKind.LANE_SNIPPET:
                    for route in _forward_routes(g, nb.dst):
                        add_route(route, prob, "change")

    candidates.sort(key=lambda pair: pair[0])
    return [anchor for _, anchor in candidates[:count]]


def route_reachable_lane_nodes(g: SceneGraph, agent: int, instances) -> list[int]:
    """Lane candidates for scoring: projection targets, meta-path chain
    elements, and their forward closure along the lane graph. Deterministic
    order; empty when the agent has no projection."""
    seeds: list[int] = [n for n, _ in _is_on_elements(g, agent)]
    for inst in instances:
        for node in inst.nodes[1:]:
            if node not in seeds:
                seeds.append(node)
    out: list[int] = []
    seen = set()
    frontier = list(seeds)
    hops = 0
    while frontier and hops <= ROUTE_MAX_ELEMENTS:
        nxt = []
        for node in frontier:
            if node in seen:
                continue
            seen.add(node)
            out.append(node)
            kind = g.kind_of(node)
            if kind == NodeKind.LANE_SNIPPET:
                nxt += [
                    d for d in g.neighbors(node, EdgeKind.HAS_NEXT_SNIPPET)
                    if g.kind_of(d) == NodeKind.LANE_SNIPPET
                ]
                nxt += g.neighbors(node, EdgeKind.CONNECTS_INCOMING)
            elif kind == NodeKind.LANE_CONNECTOR:
                nxt += g.neighbors(node, EdgeKind.CONNECTS_OUTGOING)
        frontier = nxt
        hops += 1
    return out
