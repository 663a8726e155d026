import math
import random

import pytest
from hypothesis import given, settings, strategies as st

from gridforge.geo import GeoPoint, PlanarPoint, StreetFeature, unproject
from gridforge.graph import (
    EdgeIndex, Graph, attach, build_graph, graph_to_geojson, nearest_edge, nearest_edge_bruteforce, simplify,
)

from cases import line_graph

ORIGIN = GeoPoint(49.0, 8.4)


def feature(fid, pts):
    return StreetFeature(fid, [unproject(PlanarPoint(x, y), ORIGIN) for x, y in pts])


def random_street_graph(rng: random.Random, n_edges: int) -> Graph:
    """Random polylines between random nodes; some edges bend."""
    g = Graph()
    ids = [g.add_node((rng.uniform(0, 200), rng.uniform(0, 200))) for _ in range(max(3, n_edges // 2 + 1))]
    for _ in range(n_edges):
        a, b = rng.sample(ids, 2)
        pa, pb = g.nodes[a].point, g.nodes[b].point
        pts = [pa]
        for _ in range(rng.randint(0, 3)):
            t = rng.random()
            pts.append((pa[0] + t * (pb[0] - pa[0]) + rng.uniform(-20, 20), pa[1] + t * (pb[1] - pa[1]) + rng.uniform(-20, 20)))
        pts.append(pb)
        g.add_edge(a, b, pts)
    return g


def test_shared_endpoint_merges():
    g = build_graph([feature("a", [(0, 0), (50, 0)]), feature("b", [(50, 0), (50, 40)])], ORIGIN)
    assert len(g.nodes) == 3 and len(g.edges) == 2


def test_one_edge_per_vertex_pair():
    g = build_graph([feature("a", [(0, 0), (30, 0), (30, 30)])], ORIGIN)
    assert len(g.nodes) == 3 and len(g.edges) == 2
    assert all(n.kind == "junction" for n in g.nodes.values())


def test_duplicate_linestrings_deduplicated():
    g = build_graph([feature("a", [(0, 0), (30, 0)]), feature("b", [(0, 0), (30, 0)]),
                     feature("c", [(30, 0), (0, 0)])], ORIGIN)
    assert len(g.edges) == 1


def test_near_vertices_merge_within_tolerance():
    g = build_graph([feature("a", [(0, 0), (30, 0)]), feature("b", [(30.004, 0.0), (30, 30)])], ORIGIN)
    assert len(g.nodes) == 3


def test_empty_input_gives_empty_graph():
    assert len(build_graph([], ORIGIN).edges) == 0


def test_edge_endpoints_match_nodes():
    g = build_graph([feature("a", [(0, 0), (10, 5), (20, 0)])], ORIGIN)
    for e in g.edges.values():
        assert e.geometry[0] == g.nodes[e.u].point and e.geometry[-1] == g.nodes[e.v].point
        assert e.length > 0


def test_nearest_on_interior_point():
    g, _ = line_graph([(0, 0), (10, 0), (10, 10)], ["junction"] * 3)
    eid, foot, d = nearest_edge(EdgeIndex(g), PlanarPoint(4.0, 0.0))
    assert eid == 0 and d == 0.0 and foot == PlanarPoint(4.0, 0.0)


def test_nearest_tie_goes_to_smaller_id():
    g = Graph()
    a, b, c, d = (g.add_node(p) for p in [(0, 10), (20, 10), (0, -10), (20, -10)])
    e_top = g.add_edge(a, b, [(0, 10), (20, 10)])
    e_bottom = g.add_edge(c, d, [(0, -10), (20, -10)])
    eid, _, dist = nearest_edge(EdgeIndex(g), PlanarPoint(10.0, 0.0))
    assert eid == min(e_top, e_bottom) and dist == pytest.approx(10.0)


def test_nearest_on_empty_graph_errors():
    with pytest.raises(ValueError):
        nearest_edge(EdgeIndex(Graph()), PlanarPoint(0, 0))


def test_index_has_endpoint_samples():
    g, _ = line_graph([(0, 0), (1, 0)], ["junction"] * 2)
    assert len(EdgeIndex(g)) >= 2


def test_nearest_clamps_past_segment_end():
    g, _ = line_graph([(0, 0), (10, 0)], ["junction"] * 2)
    _, foot, d = nearest_edge(EdgeIndex(g), PlanarPoint(13.0, 4.0))
    assert foot == PlanarPoint(10.0, 0.0) and d == pytest.approx(5.0)


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 10**6), qx=st.floats(-50, 250), qy=st.floats(-50, 250))
def test_nearest_matches_bruteforce(seed, qx, qy):
    g = random_street_graph(random.Random(seed), 1 + seed % 49)
    p = PlanarPoint(qx, qy)
    e1, _, d1 = nearest_edge(EdgeIndex(g), p)
    e2, _, d2 = nearest_edge_bruteforce(g, p)
    assert e1 == e2 and abs(d1 - d2) <= 1e-9


def test_attach_mid_edge_splits():
    g, _ = line_graph([(0, 0), (40, 0)], ["junction"] * 2)
    n0, e0 = len(g.nodes), len(g.edges)
    nid = attach(g, PlanarPoint(20.0, 7.0), "building", "B")
    assert len(g.nodes) == n0 + 2 and len(g.edges) == e0 + 2
    (stub,) = [g.edges[e] for e in g.adj[nid]]
    assert stub.kind == "connection" and stub.length == pytest.approx(7.0)


def test_attach_at_endpoint_does_not_split():
    g, _ = line_graph([(0, 0), (40, 0)], ["junction"] * 2)
    attach(g, PlanarPoint(45.0, 0.0), "building", "B")
    assert len(g.nodes) == 3 and len(g.edges) == 2


def test_shared_foot_point():
    g, _ = line_graph([(0, 0), (40, 0)], ["junction"] * 2)
    b1 = attach(g, PlanarPoint(20.0, 5.0), "building", "B1")
    b2 = attach(g, PlanarPoint(20.0, -6.0), "building", "B2")
    assert len(g.nodes) == 5 and len(g.edges) == 4
    (f1,) = g.neighbors(b1)
    (f2,) = g.neighbors(b2)
    assert f1 == f2 and g.degree(f1) == 4


def test_entity_on_street_relabels_junction():
    g, _ = line_graph([(0, 0), (40, 0)], ["junction"] * 2)
    nid = attach(g, PlanarPoint(10.0, 0.0), "substation", "S")
    assert g.nodes[nid].kind == "substation" and g.degree(nid) == 2
    with pytest.raises(ValueError, match="coincides"):
        attach(g, PlanarPoint(10.0, 0.0), "building", "B")


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10**6))
def test_stub_length_equals_projection_distance(seed):
    rng = random.Random(seed)
    g = random_street_graph(rng, 8)
    p = PlanarPoint(rng.uniform(0, 200), rng.uniform(0, 200))
    _, _, d = nearest_edge_bruteforce(g, p)
    nid = attach(g, p, "building", "B")
    if d > 0.01:
        (stub,) = [g.edges[e] for e in g.adj[nid]]
        assert stub.length == pytest.approx(d, rel=1e-12, abs=1e-12)
    assert g.degree(nid) >= 1


def test_simplify_path():
    g, (a, b, c) = line_graph([(0, 0), (3, 4), (3, 10)], ["junction"] * 3)
    simplify(g)
    assert len(g.edges) == 1 and b not in g.nodes
    (e,) = g.edges.values()
    assert e.length == pytest.approx(11.0) and len(e.geometry) == 3


def square():
    g = Graph()
    ids = [g.add_node(p) for p in [(0, 0), (50, 0), (50, 50), (0, 50)]]
    for a, b in zip(ids, ids[1:] + ids[:1]):
        g.add_edge(a, b, [g.nodes[a].point, g.nodes[b].point])
    return g


def test_simplify_cycle_with_building():
    g = square()
    attach(g, PlanarPoint(25.0, -8.0), "building", "B")
    total = g.total_length()
    assert total == pytest.approx(208.0)
    simplify(g)
    assert g.total_length() == pytest.approx(total, rel=1e-12)
    # the loop collapses onto the foot; one corner must stay as a self-loop guard
    for n in g.nodes:
        if g.nodes[n].kind == "junction" and g.degree(n) == 2:
            assert len(set(g.neighbors(n))) == 1
    assert all(e.u != e.v for e in g.edges.values())
    assert len(g.edges) == 3


def test_simplify_keeps_entities():
    g, ids = line_graph([(0, 0), (10, 0), (20, 0)], ["junction", "building", "junction"], [None, "B", None])
    simplify(g)
    assert ids[1] in g.nodes and len(g.edges) == 2


def test_simplify_fixed_point():
    g = Graph()
    c = g.add_node((0, 0))
    for p in [(10, 0), (0, 10), (-10, 0)]:
        n = g.add_node(p)
        g.add_edge(c, n, [(0, 0), p])
    before = g.signature()
    assert simplify(g).signature() == before


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 10**6))
def test_simplify_preserves_length_and_is_idempotent(seed):
    g = random_street_graph(random.Random(seed), 3 + seed % 20)
    total = g.total_length()
    once = simplify(g.copy())
    assert abs(once.total_length() - total) <= 1e-9 * total
    twice = simplify(once.copy())
    assert twice.signature() == once.signature()


def test_geojson_debug_export():
    g, _ = line_graph([(0, 0), (10, 0)], ["substation", "building"], ["S", "B"])
    doc = graph_to_geojson(g, ORIGIN)
    kinds = sorted(f["geometry"]["type"] for f in doc["features"])
    assert kinds == ["LineString", "Point", "Point"]
    line = next(f for f in doc["features"] if f["geometry"]["type"] == "LineString")
    assert line["properties"]["length_m"] == pytest.approx(10.0)
    assert math.isclose(doc["features"][0]["geometry"]["coordinates"][1], 49.0)
