"""Independent reference implementations used to check the production code."""

from __future__ import annotations

import cmath
import math
import random
from fractions import Fraction

from gridforge.graph import Graph


def radial_bruteforce(graph: Graph, demands: dict[int, int], substations, s_max: int):
    """Enumerate every forest of the undirected graph and keep the radial ones.

    A forest qualifies when each of its trees holds exactly one substation,
    every demand node lies in such a tree, every edge carries positive flow
    and no edge flow exceeds s_max. Returns (cost_mm, installed arc ids) of the
    best one by (cost, sorted arc ids), or None when nothing qualifies.
    Arc numbering follows the documented convention: edge k in ascending id
    order gives arcs 2k (u->v) and 2k+1 (v->u), root arcs come last.
    """
    return _enumerate(graph, demands, substations, s_max, lambda cost, arcs, peak: (cost, arcs))


def min_capacity_bruteforce(graph: Graph, demands: dict[int, int], substations):
    """Smallest peak arc flow over every radial forest (None if there is none)."""
    r = _enumerate(graph, demands, substations, sum(demands.values()), lambda cost, arcs, peak: (peak,))
    return None if r is None else r[0]


def _enumerate(graph, demands, substations, s_max, rank):
    eids = sorted(graph.edges)
    subs = sorted(substations)
    nodes = sorted(graph.nodes)
    cost = {e: max(1, int(round(graph.edges[e].length * 1000))) for e in eids}
    root_arc = {s: 2 * len(eids) + i for i, s in enumerate(subs)}
    best = None

    def evaluate(chosen):
        adj = {v: [] for v in nodes}
        for e in chosen:
            ed = graph.edges[e]
            adj[ed.u].append((ed.v, e))
            adj[ed.v].append((ed.u, e))
        arcs, seen, peak = [], set(), 0
        for s in subs:
            if not adj[s]:
                continue
            stack, order, parent = [s], [], {s: None}
            seen.add(s)
            while stack:
                v = stack.pop()
                order.append(v)
                for w, e in adj[v]:
                    if w in parent:
                        continue
                    if w in subs:
                        return None
                    parent[w] = (v, e)
                    seen.add(w)
                    stack.append(w)
            load = {v: demands.get(v, 0) for v in order}
            for v in reversed(order[1:]):
                p, e = parent[v]
                if load[v] <= 0 or load[v] > s_max:
                    return None
                load[p] += load[v]
                peak = max(peak, load[v])
                k = eids.index(e)
                arcs.append(2 * k if graph.edges[e].u == p else 2 * k + 1)
            arcs.append(root_arc[s])
        if any(v not in seen for v in demands):
            return None
        if any(graph.edges[e].u not in seen for e in chosen):
            return None
        return rank(sum(cost[e] for e in chosen), tuple(sorted(arcs)), peak)

    parent = {v: v for v in nodes}

    def find(v):
        while parent[v] != v:
            v = parent[v]
        return v

    def rec(i, chosen):
        nonlocal best
        if i == len(eids):
            r = evaluate(chosen)
            if r is not None and (best is None or r < best):
                best = r
            return
        rec(i + 1, chosen)
        e = graph.edges[eids[i]]
        ru, rv = find(e.u), find(e.v)
        if ru != rv:
            parent[ru] = rv
            chosen.append(eids[i])
            rec(i + 1, chosen)
            chosen.pop()
            parent[ru] = ru

    if not demands:
        return rank(0, (), 0)
    rec(0, [])
    return best


def random_connected_graph(rng: random.Random, n_nodes: int, n_edges: int, n_subs: int,
                           n_buildings: int, max_demand: int = 20) -> tuple[Graph, dict, list]:
    """Random connected planar-ish graph with random coordinates."""
    g = Graph()
    for _ in range(n_nodes):
        g.add_node((rng.uniform(0, 100), rng.uniform(0, 100)))
    ids = list(g.nodes)
    pairs = set()
    order = ids[:]
    rng.shuffle(order)
    for i in range(1, len(order)):
        j = order[rng.randrange(i)]
        pairs.add((min(order[i], j), max(order[i], j)))
    all_pairs = [(a, b) for a in ids for b in ids if a < b and (a, b) not in pairs]
    rng.shuffle(all_pairs)
    for p in all_pairs[: max(0, n_edges - len(pairs))]:
        pairs.add(p)
    for a, b in sorted(pairs):
        g.add_edge(a, b, [g.nodes[a].point, g.nodes[b].point])
    kinds = ids[:]
    rng.shuffle(kinds)
    subs = sorted(kinds[:n_subs])
    blds = sorted(kinds[n_subs : n_subs + n_buildings])
    for s in subs:
        g.nodes[s].kind = "substation"
    for b in blds:
        g.nodes[b].kind = "building"
    demands = {b: rng.randint(1, max_demand) for b in blds}
    return g, demands, subs


def eq5_spreadsheet(households, footprint, use_mix):
    """Row-by-row recomputation of the annual consumption with exact decimals."""
    total = Fraction(0)
    for residents, area in households:
        row = Fraction(residents) * 200 + Fraction(str(area)) * 9 + Fraction("8.4") * 200
        total += row
    rates = {"childcare": Fraction(22), "school": Fraction(20), "office": Fraction("45.41")}
    for cat, frac in use_mix.items():
        if cat in rates:
            total += Fraction(str(footprint)) * Fraction(str(frac)) * rates[cat]
    return total


def two_bus_voltage(v1: complex, z: complex, s_load: complex) -> complex:
    """Closed-form receiving-end voltage for a single line feeding a PQ load.

    With V1 as angle reference, |V2|^2 solves
        |V2|^4 + (2(P R + Q X) - |V1|^2) |V2|^2 + |Z|^2 |S|^2 = 0
    (high-voltage root); the angle follows from V2 = V1 - Z conj(S / V2).
    """
    P, Q = s_load.real, s_load.imag
    R, X = z.real, z.imag
    a = abs(v1) ** 2
    b = 2 * (P * R + Q * X) - a
    c = (R * R + X * X) * (P * P + Q * Q)
    u = (-b + math.sqrt(b * b - 4 * c)) / 2
    vm = math.sqrt(u)
    # V1 = V2 + Z I, I = conj(S)/conj(V2); with V2 = vm e^{j d}:
    # V1 e^{-j d} = vm + Z conj(S) / vm
    w = vm + z * s_load.conjugate() / vm
    d = cmath.phase(v1) - cmath.phase(w)
    return vm * cmath.exp(1j * d)


def noaa_sun(t_utc, lat: float, lon: float) -> tuple[float, float]:
    """(elevation, azimuth) in degrees after the NOAA solar calculator
    spreadsheet (Meeus series in Julian centuries), no refraction."""
    jd = t_utc.toordinal() + 1721424.5 + (t_utc.hour + t_utc.minute / 60 + t_utc.second / 3600) / 24
    T = (jd - 2451545.0) / 36525.0
    L0 = (280.46646 + T * (36000.76983 + 0.0003032 * T)) % 360
    M = 357.52911 + T * (35999.05029 - 0.0001537 * T)
    e = 0.016708634 - T * (0.000042037 + 0.0000001267 * T)
    Mr = math.radians(M)
    C = (math.sin(Mr) * (1.914602 - T * (0.004817 + 0.000014 * T))
         + math.sin(2 * Mr) * (0.019993 - 0.000101 * T) + math.sin(3 * Mr) * 0.000289)
    true_long = L0 + C
    omega = 125.04 - 1934.136 * T
    app_long = true_long - 0.00569 - 0.00478 * math.sin(math.radians(omega))
    eps0 = 23 + (26 + (21.448 - T * (46.815 + T * (0.00059 - T * 0.001813))) / 60) / 60
    eps = eps0 + 0.00256 * math.cos(math.radians(omega))
    decl = math.degrees(math.asin(math.sin(math.radians(eps)) * math.sin(math.radians(app_long))))
    y = math.tan(math.radians(eps / 2)) ** 2
    L0r = math.radians(L0)
    eot = 4 * math.degrees(
        y * math.sin(2 * L0r) - 2 * e * math.sin(Mr) + 4 * e * y * math.sin(Mr) * math.cos(2 * L0r)
        - 0.5 * y * y * math.sin(4 * L0r) - 1.25 * e * e * math.sin(2 * Mr)
    )
    minutes = t_utc.hour * 60 + t_utc.minute + t_utc.second / 60
    tst = (minutes + eot + 4 * lon) % 1440
    ha = tst / 4 - 180 if tst / 4 >= 0 else tst / 4 + 180
    phi, d, h = math.radians(lat), math.radians(decl), math.radians(ha)
    cos_z = math.sin(phi) * math.sin(d) + math.cos(phi) * math.cos(d) * math.cos(h)
    zen = math.degrees(math.acos(max(-1.0, min(1.0, cos_z))))
    az_den = math.cos(phi) * math.sin(math.radians(zen))
    if abs(az_den) < 1e-12:
        az = 180.0 if lat > 0 else 0.0
    else:
        c = (math.sin(phi) * math.cos(math.radians(zen)) - math.sin(d)) / az_den
        c = max(-1.0, min(1.0, c))
        az = (math.degrees(math.acos(c)) + 180) % 360 if ha > 0 else (540 - math.degrees(math.acos(c))) % 360
    return 90 - zen, az


def nearest_segment_scan(graph: Graph, x: float, y: float):
    """(edge id, distance) by scanning every segment; lowest id wins exact ties."""
    best = None
    for eid in sorted(graph.edges):
        e = graph.edges[eid]
        if e.kind not in ("street", "connection"):
            continue
        for (ax, ay), (bx, by) in zip(e.geometry, e.geometry[1:]):
            vx, vy = bx - ax, by - ay
            den = vx * vx + vy * vy
            t = 0.0 if den == 0 else max(0.0, min(1.0, ((x - ax) * vx + (y - ay) * vy) / den))
            d = math.dist((x, y), (ax + t * vx, ay + t * vy))
            if best is None or d < best[1] - 1e-12:
                best = (eid, d)
    return best


def flow_violations(problem, sol) -> list[str]:
    """Integer check of conservation, single supply arc per node, capacity and reachability."""
    out = []
    inflow = {v: 0 for v in problem.nodes}
    outflow = dict(inflow)
    n_in = dict(inflow)
    children = {}
    for a, arc in enumerate(problem.arcs):
        f, x = sol.flow.get(a, 0), sol.install.get(a, 0)
        if not (isinstance(f, int) and isinstance(x, int)) or x not in (0, 1) or f < 0:
            out.append(f"arc {a}: bad values f={f!r} x={x!r}")
            continue
        if not problem.is_root_arc(a) and f > problem.s_max * x:
            out.append(f"arc {a}: flow {f} > {problem.s_max}*{x}")
        if problem.is_root_arc(a) and f > 0 and x == 0:
            out.append(f"root arc {a}: flow without install")
        if arc.head in inflow:
            inflow[arc.head] += f
            n_in[arc.head] += x
        if arc.tail in outflow:
            outflow[arc.tail] += f
        if x:
            children.setdefault(arc.tail, []).append(arc.head)
    for v in problem.nodes:
        if inflow[v] - outflow[v] != problem.demand.get(v, 0):
            out.append(f"node {v}: in-out {inflow[v] - outflow[v]} != demand {problem.demand.get(v, 0)}")
        if n_in[v] > 1:
            out.append(f"node {v}: {n_in[v]} supply arcs")
    seen, stack = set(), [problem.root]
    while stack:
        v = stack.pop()
        for w in children.get(v, []):
            if w in seen:
                out.append(f"node {w} reached twice")
                continue
            seen.add(w)
            stack.append(w)
    if any(v not in seen for v in problem.demand):
        out.append("a demand node is not reachable from the root")
    return out
