"""Street graph: construction, nearest-edge queries, entity attachment, simplification."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .geo import GeoPoint, PlanarPoint, project, unproject

MERGE_TOL = 0.01
SAMPLE_SPACING = 5.0
K_CANDIDATES = 8
TIE_TOL = 1e-9

Point = tuple[float, float]


@dataclass
class Node:
    point: Point
    kind: str = "junction"  # junction | building | substation
    ref: str | None = None


@dataclass
class Edge:
    u: int
    v: int
    geometry: list[Point]
    kind: str = "street"  # street | connection
    length: float = field(init=False)

    def __post_init__(self):
        self.length = polyline_length(self.geometry)

    def other(self, n: int) -> int:
        return self.v if n == self.u else self.u


def polyline_length(pts) -> float:
    return sum(math.hypot(b[0] - a[0], b[1] - a[1]) for a, b in zip(pts, pts[1:]))


def _dedupe(pts: list[Point], eps: float = 1e-12) -> list[Point]:
    out = [pts[0]]
    for p in pts[1:]:
        if math.hypot(p[0] - out[-1][0], p[1] - out[-1][1]) > eps:
            out.append(p)
    return out


class Graph:
    """Undirected multigraph with stable integer node and edge ids."""

    def __init__(self):
        self.nodes: dict[int, Node] = {}
        self.edges: dict[int, Edge] = {}
        self.adj: dict[int, set[int]] = {}
        self._next_node = 0
        self._next_edge = 0

    def add_node(self, point: Point, kind: str = "junction", ref: str | None = None) -> int:
        nid = self._next_node
        self._next_node += 1
        self.nodes[nid] = Node((float(point[0]), float(point[1])), kind, ref)
        self.adj[nid] = set()
        return nid

    def add_edge(self, u: int, v: int, geometry, kind: str = "street", eid: int | None = None) -> int:
        if u == v:
            raise ValueError("self-loops are not allowed")
        geometry = [tuple(map(float, p)) for p in geometry]
        geometry[0], geometry[-1] = self.nodes[u].point, self.nodes[v].point
        edge = Edge(u, v, geometry, kind)
        if edge.length <= 0:
            raise ValueError(f"zero-length edge between nodes {u} and {v}")
        if eid is None:
            eid = self._next_edge
            self._next_edge += 1
        elif eid in self.edges:
            raise ValueError(f"edge id {eid} already in use")
        self.edges[eid] = edge
        self.adj[u].add(eid)
        self.adj[v].add(eid)
        return eid

    def remove_edge(self, eid: int) -> Edge:
        e = self.edges.pop(eid)
        self.adj[e.u].discard(eid)
        self.adj[e.v].discard(eid)
        return e

    def remove_node(self, nid: int):
        if self.adj[nid]:
            raise ValueError(f"node {nid} still has incident edges")
        del self.adj[nid]
        del self.nodes[nid]

    def degree(self, nid: int) -> int:
        return len(self.adj[nid])

    def neighbors(self, nid: int):
        return sorted({self.edges[e].other(nid) for e in self.adj[nid]})

    def total_length(self) -> float:
        return math.fsum(e.length for e in self.edges.values())

    def nodes_of_kind(self, kind: str) -> list[int]:
        return sorted(n for n, d in self.nodes.items() if d.kind == kind)

    def node_by_ref(self, ref: str) -> int:
        for n, d in self.nodes.items():
            if d.ref == ref:
                return n
        raise KeyError(ref)

    def copy(self) -> "Graph":
        g = Graph()
        g.nodes = {k: Node(v.point, v.kind, v.ref) for k, v in self.nodes.items()}
        g.edges = {}
        for k, e in self.edges.items():
            ne = Edge(e.u, e.v, list(e.geometry), e.kind)
            g.edges[k] = ne
        g.adj = {k: set(v) for k, v in self.adj.items()}
        g._next_node, g._next_edge = self._next_node, self._next_edge
        return g

    def signature(self):
        """Hashable structural snapshot, used to compare graphs in tests."""
        return (
            tuple(sorted((k, v.point, v.kind, v.ref) for k, v in self.nodes.items())),
            tuple(sorted((k, e.u, e.v, tuple(e.geometry), e.kind) for k, e in self.edges.items())),
        )


def build_graph(features, origin: GeoPoint, merge_tol: float = MERGE_TOL) -> Graph:
    """One junction per distinct vertex, one edge per consecutive vertex pair."""
    g = Graph()
    cells: dict[tuple[int, int], list[int]] = {}
    seen_pairs: set[tuple[int, int]] = set()

    def node_for(p: Point) -> int:
        cx, cy = math.floor(p[0] / merge_tol), math.floor(p[1] / merge_tol)
        best, best_d = None, merge_tol
        for dx in (-1, 0, 1):
            for dy in (-1, 0, 1):
                for nid in cells.get((cx + dx, cy + dy), ()):
                    q = g.nodes[nid].point
                    d = math.hypot(p[0] - q[0], p[1] - q[1])
                    if d < best_d or (d == best_d and best is not None and nid < best):
                        best, best_d = nid, d
        if best is not None:
            return best
        nid = g.add_node(p)
        cells.setdefault((cx, cy), []).append(nid)
        return nid

    for feat in features:
        ids = []
        for gp in feat.points:
            q = project(gp, origin)
            ids.append(node_for((q.x, q.y)))
        for a, b in zip(ids, ids[1:]):
            if a == b:
                continue
            key = (min(a, b), max(a, b))
            if key in seen_pairs:
                continue
            seen_pairs.add(key)
            g.add_edge(a, b, [g.nodes[a].point, g.nodes[b].point])
    return g


def project_on_segment(p: Point, a: Point, b: Point) -> tuple[float, Point, float]:
    """Distance, clamped foot point and segment parameter t in [0, 1]."""
    dx, dy = b[0] - a[0], b[1] - a[1]
    L2 = dx * dx + dy * dy
    t = 0.0 if L2 == 0 else ((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / L2
    t = min(1.0, max(0.0, t))
    f = (a[0] + t * dx, a[1] + t * dy)
    return math.hypot(p[0] - f[0], p[1] - f[1]), f, t


def project_on_polyline(p: Point, geom) -> tuple[float, Point, int, float]:
    """Closest point on a polyline: (distance, foot, segment index, t); first segment wins ties."""
    best = None
    for i in range(len(geom) - 1):
        d, f, t = project_on_segment(p, geom[i], geom[i + 1])
        if best is None or d < best[0]:
            best = (d, f, i, t)
    return best


class EdgeIndex:
    """k-d tree over points sampled along edge geometries, each tagged with its edge id."""

    def __init__(self, graph: Graph, spacing: float = SAMPLE_SPACING, kinds=("street", "connection")):
        self.graph = graph
        self.spacing = spacing
        pts, owner = [], []
        self.max_gap = 0.0
        self.edge_ids = sorted(e for e, d in graph.edges.items() if d.kind in kinds)
        for eid in self.edge_ids:
            geom = graph.edges[eid].geometry
            for i in range(len(geom) - 1):
                a, b = geom[i], geom[i + 1]
                seg = math.hypot(b[0] - a[0], b[1] - a[1])
                n = max(1, math.ceil(seg / spacing))
                self.max_gap = max(self.max_gap, seg / n)
                for j in range(n + (1 if i == len(geom) - 2 else 0)):
                    t = j / n
                    pts.append((a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])))
                    owner.append(eid)
        self.owner = np.asarray(owner, dtype=np.int64)
        self.tree = cKDTree(np.asarray(pts, dtype=float)) if pts else None

    def __len__(self):
        return len(self.owner)


def _pick(cands: dict[int, tuple]) -> tuple[int, tuple]:
    dmin = min(v[0] for v in cands.values())
    eid = min(e for e, v in cands.items() if v[0] <= dmin + TIE_TOL)
    return eid, cands[eid]


def nearest_edge(index: EdgeIndex, p: PlanarPoint, k: int = K_CANDIDATES) -> tuple[int, PlanarPoint, float]:
    """Nearest edge by exact point-to-polyline distance.

    The k nearest samples give a candidate distance; every edge with a sample
    inside that distance widened by half the sample gap is then re-checked
    exactly, which makes the answer identical to a scan over all edges.
    """
    eid, (d, foot, _, _) = _nearest(index, (p.x, p.y), k)
    return eid, PlanarPoint(*foot), d


def _nearest(index: EdgeIndex, q: Point, k: int = K_CANDIDATES):
    if index.tree is None:
        raise ValueError("nearest_edge on an empty graph")
    g = index.graph
    _, idx = index.tree.query(q, k=min(k, len(index)))
    idx = np.atleast_1d(idx)
    cands = {int(e): project_on_polyline(q, g.edges[int(e)].geometry) for e in set(index.owner[idx].tolist())}
    _, best = _pick(cands)
    radius = math.hypot(best[0], index.max_gap / 2.0) + 1e-9
    for e in set(index.owner[index.tree.query_ball_point(q, radius)].tolist()):
        if e not in cands:
            cands[e] = project_on_polyline(q, g.edges[e].geometry)
    return _pick(cands)


def nearest_edge_bruteforce(graph: Graph, p: PlanarPoint, kinds=("street", "connection")):
    q = (p.x, p.y)
    cands = {
        eid: project_on_polyline(q, e.geometry) for eid, e in graph.edges.items() if e.kind in kinds
    }
    if not cands:
        raise ValueError("nearest_edge on an empty graph")
    eid, (d, foot, _, _) = _pick(cands)
    return eid, PlanarPoint(*foot), d


def split_edge(graph: Graph, eid: int, seg: int, foot: Point, tol: float = MERGE_TOL) -> int:
    """Split edge `eid` at `foot` (lying on segment `seg`); returns the node at the foot."""
    e = graph.edges[eid]
    geom = e.geometry
    head = _dedupe(geom[: seg + 1] + [foot])
    if polyline_length(head) <= tol:
        return e.u
    tail = _dedupe([foot] + geom[seg + 1 :])
    if polyline_length(tail) <= tol:
        return e.v
    graph.remove_edge(eid)
    mid = graph.add_node(foot)
    graph.add_edge(e.u, mid, head, e.kind)
    graph.add_edge(mid, e.v, tail, e.kind)
    return mid


def attach(graph: Graph, p: PlanarPoint, kind: str, ref: str, index: EdgeIndex | None = None,
           tol: float = MERGE_TOL) -> int:
    """Connect an entity to its nearest street edge by orthogonal projection.

    The street edge is split at the foot point (unless the foot is within
    `tol` of an endpoint) and a connection edge joins the new entity node to
    the foot. Returns the entity's node id.
    """
    if kind not in ("building", "substation"):
        raise ValueError(f"cannot attach entity of kind {kind!r}")
    if index is None:
        index = EdgeIndex(graph, kinds=("street",))
    q = (p.x, p.y)
    eid, (d, foot, seg, _) = _nearest(index, q)
    foot_node = split_edge(graph, eid, seg, foot, tol)
    if d <= tol:
        node = graph.nodes[foot_node]
        if node.kind != "junction":
            raise ValueError(f"{kind} {ref!r} coincides with {node.kind} {node.ref!r}")
        node.kind, node.ref = kind, ref
        return foot_node
    nid = graph.add_node(q, kind, ref)
    graph.add_edge(nid, foot_node, [q, graph.nodes[foot_node].point], "connection")
    return nid


def attach_all(graph: Graph, entities) -> dict[str, int]:
    """Attach (PlanarPoint, kind, ref) triples in order; returns ref -> node id."""
    out = {}
    for p, kind, ref in entities:
        out[ref] = attach(graph, p, kind, ref)
    return out


def simplify(graph: Graph) -> Graph:
    """Contract degree-2 junctions into single edges that keep the full geometry.

    Works in place and returns the graph. Entity nodes are never removed; a
    contraction that would create a self-loop is skipped. The merged edge keeps
    the smaller of the two edge ids.
    """
    changed = True
    while changed:
        changed = False
        for n in sorted(graph.nodes):
            node = graph.nodes[n]
            if node.kind != "junction" or graph.degree(n) != 2:
                continue
            e1, e2 = sorted(graph.adj[n])
            E1, E2 = graph.edges[e1], graph.edges[e2]
            a, b = E1.other(n), E2.other(n)
            if a == b:
                continue
            g1 = E1.geometry if E1.v == n else E1.geometry[::-1]
            g2 = E2.geometry if E2.u == n else E2.geometry[::-1]
            kind = "street" if E1.kind == E2.kind == "street" else "connection"
            graph.remove_edge(e1)
            graph.remove_edge(e2)
            graph.remove_node(n)
            graph.add_edge(a, b, g1 + g2[1:], kind, eid=min(e1, e2))
            changed = True
    return graph


def graph_to_geojson(graph: Graph, origin: GeoPoint) -> dict:
    def ll(pt):
        g = unproject(PlanarPoint(*pt), origin)
        return [g.lon, g.lat]

    feats = []
    for nid in sorted(graph.nodes):
        nd = graph.nodes[nid]
        feats.append({
            "type": "Feature",
            "id": f"n{nid}",
            "geometry": {"type": "Point", "coordinates": ll(nd.point)},
            "properties": {"kind": nd.kind, "ref": nd.ref},
        })
    for eid in sorted(graph.edges):
        e = graph.edges[eid]
        feats.append({
            "type": "Feature",
            "id": f"e{eid}",
            "geometry": {"type": "LineString", "coordinates": [ll(p) for p in e.geometry]},
            "properties": {"kind": e.kind, "length_m": e.length, "u": e.u, "v": e.v},
        })
    return {"type": "FeatureCollection", "features": feats}


def planar(graph_point: Point) -> PlanarPoint:
    return PlanarPoint(*graph_point)


def project_entity(entity, origin: GeoPoint) -> PlanarPoint:
    return project(entity.location, origin)
