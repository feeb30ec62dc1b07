import numpy as np
import pytest

from trajgraph.graph import EdgeKind, NodeKind, SceneGraph, compact
from trajgraph.metapath import (
    AnchorPath,
    TEMPLATE_IDS,
    extract_meta_paths,
    generate_anchor_paths,
    meta_path_neighbors,
    route_reachable_lane_nodes,
)
from trajgraph.scene import build_graph, normalize_frame
from trajgraph.geometry import project_to_polyline

from scenes import junction_scene, make_agent, two_lane_scene

SP = NodeKind.SCENE_PARTICIPANT
SNIP = NodeKind.LANE_SNIPPET
CONN = NodeKind.LANE_CONNECTOR

SP_FEATURES = (0.0, 1.0, 0.0, 0.0, 0.0, 5.0, 0.0, 0.0, 0.2)


def add(g, kind):
    feats = {SP: SP_FEATURES, SNIP: (20.0,)}.get(kind, ())
    return g.add_node(kind, feats)


def is_on(g, a, b, p=1.0):
    g.add_edge(a, b, EdgeKind.IS_ON_MAP_ELEMENT, {"probability": p})


# ------------------------------------------------------- template matching

def test_lane_change_instance():
    g = SceneGraph()
    p = add(g, SP)
    s1, s2, s3 = (add(g, SNIP) for _ in range(3))
    is_on(g, p, s1)
    g.add_edge(s1, s2, EdgeKind.SWITCH_PERMITTED)
    g.add_edge(s2, s3, EdgeKind.SWITCH_PERMITTED)
    instances = extract_meta_paths(g, p)
    assert [(i.template_id, i.nodes) for i in instances] == [("lane_change", (p, s1, s2, s3))]


def test_leave_connector_instance():
    g = SceneGraph()
    p = add(g, SP)
    c1 = add(g, CONN)
    s1, s2 = add(g, SNIP), add(g, SNIP)
    is_on(g, p, c1)
    g.add_edge(c1, s1, EdgeKind.CONNECTS_OUTGOING)
    g.add_edge(s1, s2, EdgeKind.SWITCH_PERMITTED)
    instances = extract_meta_paths(g, p)
    assert [(i.template_id, i.nodes) for i in instances] == [
        ("leave_connector", (p, c1, s1, s2))
    ]


def test_enter_connector_instance():
    g = SceneGraph()
    p = add(g, SP)
    s1, s2 = add(g, SNIP), add(g, SNIP)
    c1 = add(g, CONN)
    is_on(g, p, s1)
    g.add_edge(s1, s2, EdgeKind.SWITCH_PERMITTED)
    g.add_edge(s2, c1, EdgeKind.CONNECTS_INCOMING)
    instances = extract_meta_paths(g, p)
    assert [(i.template_id, i.nodes) for i in instances] == [
        ("enter_connector", (p, s1, s2, c1))
    ]


def test_non_permitted_switch_blocks_matching():
    g = SceneGraph()
    p = add(g, SP)
    s1, s2, s3 = (add(g, SNIP) for _ in range(3))
    is_on(g, p, s1)
    g.add_edge(s1, s2, EdgeKind.SWITCH_NON_PERMITTED)
    g.add_edge(s2, s3, EdgeKind.SWITCH_NON_PERMITTED)
    assert extract_meta_paths(g, p) == []


def test_agent_without_projection_yields_empty():
    g = SceneGraph()
    p = add(g, SP)
    add(g, SNIP)
    assert extract_meta_paths(g, p) == []


def test_walks_may_revisit_nodes():
    g = SceneGraph()
    p = add(g, SP)
    s1, s2 = add(g, SNIP), add(g, SNIP)
    is_on(g, p, s1)
    g.add_edge(s1, s2, EdgeKind.SWITCH_PERMITTED)
    g.add_edge(s2, s1, EdgeKind.SWITCH_PERMITTED)
    instances = extract_meta_paths(g, p)
    assert ("lane_change", (p, s1, s2, s1)) in [(i.template_id, i.nodes) for i in instances]


# ------------------------------------------------------------ neighbors map

def test_neighbors_use_chain_terminus():
    g = SceneGraph()
    p = add(g, SP)
    s1, s2, s3 = (add(g, SNIP) for _ in range(3))
    is_on(g, p, s1)
    g.add_edge(s1, s2, EdgeKind.SWITCH_PERMITTED)
    g.add_edge(s2, s3, EdgeKind.SWITCH_PERMITTED)
    nb = meta_path_neighbors(extract_meta_paths(g, p))
    assert nb["lane_change"] == {p: {s3}}
    assert nb["leave_connector"] == {}
    assert nb["enter_connector"] == {}


def test_neighbors_deduplicate_shared_terminus():
    g = SceneGraph()
    p = add(g, SP)
    s1, s1b, s2, s3 = (add(g, SNIP) for _ in range(4))
    is_on(g, p, s1)
    is_on(g, p, s1b)
    for a in (s1, s1b):
        g.add_edge(a, s2, EdgeKind.SWITCH_PERMITTED)
    g.add_edge(s2, s3, EdgeKind.SWITCH_PERMITTED)
    nb = meta_path_neighbors(extract_meta_paths(g, p))
    assert nb["lane_change"][p] == {s3}


def test_neighbors_intermediate_semantics_flag():
    g = SceneGraph()
    p = add(g, SP)
    s1, s2, s3 = (add(g, SNIP) for _ in range(3))
    is_on(g, p, s1)
    g.add_edge(s1, s2, EdgeKind.SWITCH_PERMITTED)
    g.add_edge(s2, s3, EdgeKind.SWITCH_PERMITTED)
    nb = meta_path_neighbors(extract_meta_paths(g, p), include_intermediate=True)
    assert nb["lane_change"][p] == {s1, s2, s3}


# ------------------------------------------------------ brute-force oracle

ORACLE_ROLES = {
    "isOn": lambda k: k == EdgeKind.IS_ON_MAP_ELEMENT,
    "switch": lambda k: k in (EdgeKind.SWITCH_PERMITTED, EdgeKind.SWITCH_DOUBLE_DASHED_WHITE),
    "connects_out": lambda k: k == EdgeKind.CONNECTS_OUTGOING,
    "connects_in": lambda k: k == EdgeKind.CONNECTS_INCOMING,
}
ORACLE_TEMPLATES = {
    "lane_change": (("isOn", SNIP), ("switch", SNIP), ("switch", SNIP)),
    "leave_connector": (("isOn", CONN), ("connects_out", SNIP), ("switch", SNIP)),
    "enter_connector": (("isOn", SNIP), ("switch", SNIP), ("connects_in", CONN)),
}


def oracle_walks(g, agent):
    """Independent nested-loop enumeration of all 3-hop typed walks."""
    found = set()
    for tid, steps in ORACLE_TEMPLATES.items():
        for e1 in g.out_edges(agent):
            if not (ORACLE_ROLES[steps[0][0]](e1.kind) and g.kind_of(e1.dst) == steps[0][1]):
                continue
            for e2 in g.out_edges(e1.dst):
                if not (ORACLE_ROLES[steps[1][0]](e2.kind) and g.kind_of(e2.dst) == steps[1][1]):
                    continue
                for e3 in g.out_edges(e2.dst):
                    if ORACLE_ROLES[steps[2][0]](e3.kind) and g.kind_of(e3.dst) == steps[2][1]:
                        found.add((tid, (agent, e1.dst, e2.dst, e3.dst)))
    return found


def random_typed_graph(rng, max_nodes=50):
    g = SceneGraph()
    n = int(rng.integers(6, max_nodes + 1))
    kinds = [SP, SNIP, SNIP, SNIP, CONN]  # lane elements dominate
    nodes = [add(g, kinds[int(rng.integers(0, len(kinds)))]) for _ in range(n)]
    sps = [v for v in nodes if g.kind_of(v) == SP] or [add(g, SP)]
    snippets = [v for v in nodes if g.kind_of(v) == SNIP]
    connectors = [v for v in nodes if g.kind_of(v) == CONN]
    n_edges = int(rng.integers(n, 3 * n))
    for _ in range(n_edges):
        choice = rng.integers(0, 5)
        if choice == 0 and snippets:
            is_on(g, sps[int(rng.integers(0, len(sps)))],
                  snippets[int(rng.integers(0, len(snippets)))], float(rng.random()))
        elif choice == 1 and connectors:
            is_on(g, sps[int(rng.integers(0, len(sps)))],
                  connectors[int(rng.integers(0, len(connectors)))], float(rng.random()))
        elif choice == 2 and len(snippets) >= 2:
            a, b = rng.choice(len(snippets), size=2, replace=False)
            kind = (
                EdgeKind.SWITCH_PERMITTED,
                EdgeKind.SWITCH_DOUBLE_DASHED_WHITE,
                EdgeKind.SWITCH_NON_PERMITTED,
            )[int(rng.integers(0, 3))]
            g.add_edge(snippets[a], snippets[b], kind)
        elif choice == 3 and snippets and connectors:
            g.add_edge(snippets[int(rng.integers(0, len(snippets)))],
                       connectors[int(rng.integers(0, len(connectors)))],
                       EdgeKind.CONNECTS_INCOMING)
        elif choice == 4 and snippets and connectors:
            g.add_edge(connectors[int(rng.integers(0, len(connectors)))],
                       snippets[int(rng.integers(0, len(snippets)))],
                       EdgeKind.CONNECTS_OUTGOING)
    return g, sps[0]


def test_extraction_matches_oracle_on_random_graphs():
    rng = np.random.default_rng(0)
    for _ in range(100):
        g, agent = random_typed_graph(rng)
        got = {(i.template_id, i.nodes) for i in extract_meta_paths(g, agent)}
        assert got == oracle_walks(g, agent)


def test_extraction_is_deterministic():
    rng = np.random.default_rng(4)
    g, agent = random_typed_graph(rng)
    a = extract_meta_paths(g, agent)
    b = extract_meta_paths(g, agent)
    assert a == b


# -------------------------------------------------------------- anchor paths

def lane_scene_graph(**kwargs):
    sd = normalize_frame(two_lane_scene(**kwargs))
    return compact(build_graph(sd))


def test_single_lane_yields_one_anchor():
    agent = make_agent("a0", (10.0, 0.0), (1.0, 0.0), 4.0)
    sd = two_lane_scene(agents=[agent])
    sd.lanes = sd.lanes[:1]
    sd.dividers = []
    g = compact(build_graph(normalize_frame(sd)))
    anchors = generate_anchor_paths(g, g.target)
    assert len(anchors) == 1
    assert anchors[0].maneuver == "keep"
    # polyline tracks the (normalized) lane centerline: target-lane y stays 0
    assert np.max(np.abs(anchors[0].polyline[:, 1])) < 0.2


def test_permitted_neighbor_adds_change_anchor():
    g = lane_scene_graph()
    anchors = generate_anchor_paths(g, g.target)
    maneuvers = {a.maneuver for a in anchors}
    assert "keep" in maneuvers and "change" in maneuvers
    assert len(anchors) >= 2


def test_junction_anchors_cover_both_branches():
    sd = normalize_frame(junction_scene())
    g = compact(build_graph(sd))
    anchors = generate_anchor_paths(g, g.target)
    # branch coverage: final polyline points diverge into both outgoing lanes
    finals = np.stack([a.polyline[-1] for a in anchors])
    spread = np.max(np.linalg.norm(finals - finals[0], axis=1))
    assert len(anchors) >= 2
    assert spread > 10.0


def test_anchor_routes_are_chain_connected():
    sd = normalize_frame(junction_scene())
    g = compact(build_graph(sd))
    for anchor in generate_anchor_paths(g, g.target):
        for a, b in zip(anchor.route, anchor.route[1:]):
            kinds = {
                e.kind for e in g.out_edges(a) if e.dst == b
            }
            assert kinds & {
                EdgeKind.HAS_NEXT_SNIPPET,
                EdgeKind.CONNECTS_INCOMING,
                EdgeKind.CONNECTS_OUTGOING,
            }, f"route hop {a}->{b} is not chain-connected"


def test_anchor_resampling_spacing():
    g = lane_scene_graph()
    for anchor in generate_anchor_paths(g, g.target):
        seg = np.linalg.norm(np.diff(anchor.polyline, axis=0), axis=1)
        assert np.all(seg <= 1.0 + 1e-6)


def test_anchor_determinism_and_cap():
    g = lane_scene_graph()
    a = [x.to_json() for x in generate_anchor_paths(g, g.target)]
    b = [x.to_json() for x in generate_anchor_paths(g, g.target)]
    assert a == b
    assert len(a) <= 5


def test_route_reachable_candidates_include_forward_closure():
    sd = normalize_frame(junction_scene())
    g = compact(build_graph(sd))
    instances = extract_meta_paths(g, g.target)
    cands = route_reachable_lane_nodes(g, g.target, instances)
    kinds = {g.kind_of(c) for c in cands}
    assert NodeKind.LANE_CONNECTOR in kinds  # both junction branches reachable
    connectors = [c for c in cands if g.kind_of(c) == NodeKind.LANE_CONNECTOR]
    assert len(connectors) == 2
