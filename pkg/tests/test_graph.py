import pytest

from trajgraph.graph import (
    EdgeKind,
    NodeKind,
    SceneGraph,
    SWITCH_KINDS_ORIGINAL,
    compact,
    strip_edge_kinds,
    to_topology,
    validate,
)


def slice_features(width=3.5, x=0.0, y=0.0, yaw=0.0):
    return (width, x, y, yaw)


def sp_features(x=0.0, y=0.0):
    # orientation, state one-hot (moving), position, vel, acc, dheading, d_centerline
    return (0.0, 1.0, 0.0, x, y, 5.0, 0.0, 0.0, 0.2)


def two_slice_graph(kind=EdgeKind.SWITCH_DOUBLE_DASHED_WHITE):
    g = SceneGraph()
    a = g.add_node(NodeKind.LANE_SLICE, slice_features())
    b = g.add_node(NodeKind.LANE_SLICE, slice_features(x=3.5))
    g.add_edge(a, b, kind)
    return g, a, b


def test_kind_enumerations_are_closed():
    assert len(NodeKind) == 17
    # 23 declared relations + 2 compact merges + 1 fully-connected pseudo-kind
    assert len(EdgeKind) == 26
    with pytest.raises(ValueError):
        NodeKind("Roundabout")
    with pytest.raises(ValueError):
        EdgeKind("hasVibes")


def test_validate_schema_conformant_switch_edge():
    g, _, _ = two_slice_graph()
    assert validate(g).ok


def test_validate_probability_out_of_range():
    g = SceneGraph()
    p = g.add_node(NodeKind.SCENE_PARTICIPANT, sp_features())
    s = g.add_node(NodeKind.LANE_SLICE, slice_features())
    g.add_edge(p, s, EdgeKind.IS_ON_MAP_ELEMENT, {"probability": 1.3})
    report = validate(g)
    assert [v.code for v in report.violations] == ["attribute out of range"]


def test_validate_related_edge_endpoint_kind():
    g, a, b = two_slice_graph()
    g.add_edge(a, b, EdgeKind.RELATED_LATERAL, {"path_distance": 1.0})
    report = validate(g)
    assert [v.code for v in report.violations] == ["endpoint kind"]


def test_validate_feature_length_and_finiteness():
    g = SceneGraph()
    g.add_node(NodeKind.LANE_SLICE, (3.5,))  # wrong length
    g.add_node(NodeKind.LANE_SLICE, (3.5, float("nan"), 0.0, 0.0))
    codes = {v.code for v in validate(g).violations}
    assert codes == {"feature length", "feature finite"}


def test_validate_target_kind():
    g, a, _ = two_slice_graph()
    g.target = a
    assert any(v.code == "target" for v in validate(g).violations)


@pytest.mark.parametrize(
    "kind,merged",
    [
        (EdgeKind.SWITCH_DOUBLE_DASHED_WHITE, EdgeKind.SWITCH_PERMITTED),
        (EdgeKind.SWITCH_SINGLE_SOLID_YELLOW, EdgeKind.SWITCH_NON_PERMITTED),
        (EdgeKind.SWITCH_ROAD_DIVIDER, EdgeKind.SWITCH_NON_PERMITTED),
        (EdgeKind.SWITCH_SINGLE_ZIGZAG_WHITE, EdgeKind.SWITCH_NON_PERMITTED),
        (EdgeKind.SWITCH_DOUBLE_SOLID_WHITE, EdgeKind.SWITCH_NON_PERMITTED),
        (EdgeKind.SWITCH_SINGLE_SOLID_WHITE, EdgeKind.SWITCH_NON_PERMITTED),
    ],
)
def test_compact_remaps_switch_kinds(kind, merged):
    g, _, _ = two_slice_graph(kind)
    assert compact(g).edges[0].kind == merged


def test_compact_is_identity_without_switch_edges():
    g = SceneGraph()
    a = g.add_node(NodeKind.LANE_SLICE, slice_features())
    b = g.add_node(NodeKind.LANE_SLICE, slice_features(x=2.0))
    g.add_edge(a, b, EdgeKind.HAS_NEXT_SLICE)
    assert compact(g).to_jsonl() == g.to_jsonl()


def test_validate_after_compact_stays_clean():
    for kind in SWITCH_KINDS_ORIGINAL:
        g, _, _ = two_slice_graph(kind)
        assert validate(g).ok
        assert validate(compact(g)).ok


def test_neighbors_isolated_and_filtered():
    g = SceneGraph()
    a = g.add_node(NodeKind.LANE_SLICE, slice_features())
    b = g.add_node(NodeKind.LANE_SLICE, slice_features(x=2.0))
    c = g.add_node(NodeKind.LANE_SLICE, slice_features(x=3.5))
    assert g.neighbors(a) == []
    g.add_edge(a, b, EdgeKind.HAS_NEXT_SLICE)
    g.add_edge(a, c, EdgeKind.SWITCH_DOUBLE_DASHED_WHITE)
    assert g.neighbors(a, EdgeKind.HAS_NEXT_SLICE) == [b]
    assert g.neighbors(a, EdgeKind.SWITCH_DOUBLE_DASHED_WHITE) == [c]
    assert g.neighbors(a) == [b, c]


def test_neighbors_unknown_node():
    g = SceneGraph()
    with pytest.raises(KeyError, match="node absent"):
        g.neighbors(7)


def test_serialization_roundtrip_and_determinism():
    g, a, b = two_slice_graph()
    p = g.add_node(NodeKind.SCENE_PARTICIPANT, sp_features())
    g.add_edge(p, a, EdgeKind.IS_ON_MAP_ELEMENT, {"probability": 0.75})
    g.target = p
    text = g.to_jsonl()
    assert text == g.to_jsonl()
    back = SceneGraph.from_jsonl(text)
    assert back.to_jsonl() == text
    assert back.target == p
    assert back.nodes[a].kind == NodeKind.LANE_SLICE
    assert back.edges[-1].attrs == {"probability": 0.75}


def test_strip_edge_kinds_touches_only_listed_kinds():
    g, a, b = two_slice_graph()
    g.add_edge(a, b, EdgeKind.HAS_NEXT_SLICE)
    out = strip_edge_kinds(g, [EdgeKind.SWITCH_DOUBLE_DASHED_WHITE])
    assert out.edge_kinds_used() == {EdgeKind.HAS_NEXT_SLICE}
    assert len(out.nodes) == len(g.nodes)


def test_topology_edge_kind_cardinality():
    g = SceneGraph()
    p = g.add_node(NodeKind.SCENE_PARTICIPANT, sp_features())
    s = g.add_node(NodeKind.LANE_SNIPPET, (20.0,))
    c = g.add_node(NodeKind.LANE_CONNECTOR)
    g.add_edge(p, s, EdgeKind.IS_ON_MAP_ELEMENT, {"probability": 1.0})
    g.target = p

    fc = to_topology(g, "fully_connected")
    assert fc.edge_kinds_used() == {EdgeKind.CONNECTED}
    assert len(fc.edges) == 6  # ordered pairs over 3 entities
    assert validate(fc).ok

    unc = to_topology(g, "unconnected")
    assert unc.edge_kinds_used() == set()
    assert validate(unc).ok

    assert to_topology(g, "knowledge") is g
    with pytest.raises(ValueError):
        to_topology(g, "ring")
