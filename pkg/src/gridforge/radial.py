"""Radial topology from a meshed street graph.

The meshed graph is turned into a minimum-length radial supply network by a
capacitated minimum-cost flow model with an in-degree (radiality) limit:

    minimise    sum_a  cost_a * install_a
    subject to  out-flow - in-flow = balance_v          for every node v
                sum_{a into v} install_a <= 1           for every node v != root
                0 <= flow_a <= s_max * install_a        for every graph arc a

A virtual root feeds every secondary substation over zero-cost, uncapacitated
arcs. Flows are integer volt-amperes and costs integer millimetres, so every
check on a solution is exact.

`solve` is a depth-first branch-and-bound over the install variables. Bounds
come from an LP relaxation warm-started with HiGHS after each bound change:
by default the aggregated single-commodity flow strengthened with
f_a >= d_head * install_a; a tighter but much slower multi-commodity variant
(one unit commodity per demand node) is kept for cross-checking.
"""

from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import dataclass, field

import highspy
import numpy as np
from scipy import sparse

from .graph import Graph

logger = logging.getLogger(__name__)

ROOT = -1
INT_TOL = 1e-6


class RadialError(RuntimeError):
    pass


@dataclass(frozen=True)
class Arc:
    tail: int
    head: int
    cost: int  # millimetres
    edge: int | None = None  # graph edge id; None for root arcs


@dataclass
class FlowProblem:
    nodes: list[int]
    arcs: list[Arc]
    demand: dict[int, int]
    substations: list[int]
    s_max: int
    root: int = ROOT

    def balance(self, v: int) -> int:
        """Right-hand side of flow conservation (out - in) at node v."""
        if v == self.root:
            return self.total_demand
        return -self.demand.get(v, 0)

    @property
    def total_demand(self) -> int:
        return sum(self.demand.values())

    def is_root_arc(self, a: int) -> bool:
        return self.arcs[a].tail == self.root

    def with_capacity(self, s_max: int) -> "FlowProblem":
        return FlowProblem(self.nodes, self.arcs, self.demand, self.substations, int(s_max), self.root)

    def to_json(self) -> dict:
        return {
            "root": self.root,
            "nodes": self.nodes,
            "arcs": [[a.tail, a.head, a.cost, a.edge] for a in self.arcs],
            "demand": {str(k): v for k, v in sorted(self.demand.items())},
            "substations": self.substations,
            "s_max": self.s_max,
        }

    @classmethod
    def from_json(cls, d: dict) -> "FlowProblem":
        return cls(
            nodes=list(d["nodes"]),
            arcs=[Arc(t, h, c, e) for t, h, c, e in d["arcs"]],
            demand={int(k): int(v) for k, v in d["demand"].items()},
            substations=list(d["substations"]),
            s_max=int(d["s_max"]),
            root=int(d["root"]),
        )


@dataclass
class FlowSolution:
    status: str  # optimal | heuristic | infeasible | unknown
    install: dict[int, int] = field(default_factory=dict)
    flow: dict[int, int] = field(default_factory=dict)
    objective: int = 0  # millimetres
    nodes_explored: int = 0
    lp_solves: int = 0

    @property
    def installed(self) -> list[int]:
        return sorted(a for a, v in self.install.items() if v)

    @property
    def objective_m(self) -> float:
        return self.objective / 1000.0

    def to_json(self) -> dict:
        return {
            "status": self.status,
            "installed": self.installed,
            "flow": {str(a): f for a, f in sorted(self.flow.items()) if f},
            "objective_mm": self.objective,
        }

    @classmethod
    def from_json(cls, d: dict, n_arcs: int) -> "FlowSolution":
        inst = set(d["installed"])
        flow = {a: 0 for a in range(n_arcs)}
        flow.update({int(k): int(v) for k, v in d["flow"].items()})
        return cls(d["status"], {a: int(a in inst) for a in range(n_arcs)}, flow, int(d["objective_mm"]))


def length_to_mm(length_m: float) -> int:
    return max(1, int(round(length_m * 1000.0)))


def build_flow_problem(graph: Graph, demands: dict[int, int], substations, s_max: int) -> FlowProblem:
    """Double every undirected edge into two arcs and add the virtual root.

    Arc ids: edge k in ascending edge-id order yields arcs 2k (u->v) and
    2k+1 (v->u); root arcs follow in ascending substation order.
    """
    subs = sorted(int(s) for s in substations)
    if not subs:
        raise ValueError("at least one secondary substation is required")
    for s in subs:
        if s not in graph.nodes:
            raise ValueError(f"substation node {s} is not in the graph")
    clean = {}
    for n, d in sorted(demands.items()):
        if n not in graph.nodes:
            raise ValueError(f"demand node {n} is not in the graph")
        if int(d) != d or d <= 0:
            raise ValueError(f"node {n}: demand must be a positive integer VA value, got {d!r}")
        if n in subs:
            raise ValueError(f"node {n} is a substation and cannot carry demand")
        clean[n] = int(d)
    arcs = []
    for eid in sorted(graph.edges):
        e = graph.edges[eid]
        c = length_to_mm(e.length)
        arcs.append(Arc(e.u, e.v, c, eid))
        arcs.append(Arc(e.v, e.u, c, eid))
    for s in subs:
        arcs.append(Arc(ROOT, s, 0, None))
    return FlowProblem(sorted(graph.nodes), arcs, clean, subs, int(s_max))


# ---------------------------------------------------------------------------
# solution helpers


def tree_flows(problem: FlowProblem, installed) -> dict[int, int] | None:
    """Flows implied by an installed arc set, or None if it is not radial.

    Installed arcs not reachable from the root are ignored by the caller's
    choice; here they make the set invalid unless they carry no demand.
    """
    installed = sorted(installed)
    parent_arc = {}
    for a in installed:
        h = problem.arcs[a].head
        if h in parent_arc or h == problem.root:
            return None
        parent_arc[h] = a
    children: dict[int, list[int]] = {}
    for a in installed:
        children.setdefault(problem.arcs[a].tail, []).append(a)
    order, stack, seen = [], [problem.root], {problem.root}
    while stack:
        v = stack.pop()
        order.append(v)
        for a in children.get(v, ()):
            h = problem.arcs[a].head
            if h in seen:
                return None
            seen.add(h)
            stack.append(h)
    if len(seen) - 1 != len(installed):
        return None  # cycle or component detached from the root
    if any(v not in seen for v in problem.demand):
        return None
    sub = {v: problem.demand.get(v, 0) for v in seen}
    flow = {}
    for v in reversed(order):
        if v == problem.root:
            continue
        a = parent_arc[v]
        flow[a] = sub[v]
        sub[problem.arcs[a].tail] += sub[v]
    return flow


def check_solution(problem: FlowProblem, sol: FlowSolution) -> list[str]:
    """Exact check of conservation, in-degree, capacity and acyclicity."""
    issues = []
    arcs = problem.arcs
    net = {v: 0 for v in problem.nodes}
    net[problem.root] = 0
    indeg = {v: 0 for v in net}
    for a, arc in enumerate(arcs):
        f, x = sol.flow.get(a, 0), sol.install.get(a, 0)
        if x not in (0, 1):
            issues.append(f"arc {a}: install={x} not binary")
        if f < 0:
            issues.append(f"arc {a}: negative flow {f}")
        cap = math.inf if problem.is_root_arc(a) else problem.s_max
        if f > cap * x:
            issues.append(f"arc {a}: flow {f} exceeds {cap} * install {x}")
        net[arc.tail] += f
        net[arc.head] -= f
        indeg[arc.head] += x
    for v in net:
        if net[v] != problem.balance(v):
            issues.append(f"node {v}: out-in = {net[v]} != balance {problem.balance(v)}")
        if v != problem.root and indeg[v] > 1:
            issues.append(f"node {v}: {indeg[v]} installed incoming arcs")
    if tree_flows(problem, sol.installed) is None:
        issues.append("installed arcs do not form an arborescence rooted at the virtual root")
    return issues


def _objective(problem: FlowProblem, installed) -> int:
    return sum(problem.arcs[a].cost for a in installed)


def _make_solution(problem, installed, status, flow=None) -> FlowSolution:
    installed = sorted(installed)
    if flow is None:
        flow = tree_flows(problem, installed)
    full = {a: 0 for a in range(len(problem.arcs))}
    full.update(flow)
    inst = {a: 0 for a in range(len(problem.arcs))}
    for a in installed:
        inst[a] = 1
    return FlowSolution(status, inst, full, _objective(problem, installed))


def prune_dangling(problem: FlowProblem, installed) -> list[int]:
    """Drop installed arcs that carry no demand (they only add cost)."""
    flow = tree_flows(problem, installed)
    keep = [a for a in installed if flow[a] > 0 or problem.is_root_arc(a)]
    # root arcs to substations that feed nothing carry zero flow as well
    fed = {problem.arcs[a].tail for a in keep if not problem.is_root_arc(a)}
    return sorted(a for a in keep if not problem.is_root_arc(a) or problem.arcs[a].head in fed)


# ---------------------------------------------------------------------------
# LP relaxation


class _Relaxation:
    """LP relaxation held in a warm-startable HiGHS instance.

    kind="single" keeps one aggregated flow per arc. kind="multi" adds one unit
    commodity per demand node (f^k_a <= install_a): a tighter bound, but each
    LP is two orders of magnitude slower, so B&B is faster with "single".
    """

    def __init__(self, problem: FlowProblem, active_arcs: list[int], kind: str = "single"):
        self.p = problem
        self.kind = kind
        arcs = problem.arcs
        A = len(arcs)
        self.A = A
        active = sorted(set(active_arcs))
        nodes = sorted({arcs[a].tail for a in active} | {arcs[a].head for a in active} | {problem.root})
        inner = [v for v in nodes if v != problem.root]
        rows, cols, vals, rlo, rhi = [], [], [], [], []
        inf = highspy.kHighsInf

        def add_row(entries, lo, hi):
            r = len(rlo)
            for c, v in entries:
                rows.append(r); cols.append(c); vals.append(v)
            rlo.append(lo); rhi.append(hi)
            return r

        self.cap_rows = {}
        if kind == "multi":
            terminals = sorted(problem.demand)
            fcols = [(k, a) for k in terminals for a in active if arcs[a].tail != k]
            ncol = A + len(fcols)
            per_node: dict[tuple[int, int], list] = {}
            by_a: dict[int, list[int]] = {}
            for j, (k, a) in enumerate(fcols):
                c = A + j
                per_node.setdefault((k, arcs[a].head), []).append((c, 1.0))
                per_node.setdefault((k, arcs[a].tail), []).append((c, -1.0))
                by_a.setdefault(a, []).append(j)
            for k in terminals:
                for v in inner:
                    rhs = 1.0 if v == k else 0.0
                    add_row(per_node.get((k, v), []), rhs, rhs)
            for j, (k, a) in enumerate(fcols):
                add_row([(A + j, 1.0), (a, -1.0)], -inf, 0.0)
            for a in active:
                if problem.is_root_arc(a) or a not in by_a:
                    continue
                ent = [(A + j, float(problem.demand[fcols[j][0]])) for j in by_a[a]]
                self.cap_rows[a] = add_row(ent + [(a, -float(problem.s_max))], -inf, 0.0)
        else:
            fcol = {a: A + i for i, a in enumerate(active)}
            ncol = A + len(active)
            per_node = {}
            for a in active:
                per_node.setdefault(arcs[a].head, []).append((fcol[a], 1.0))
                per_node.setdefault(arcs[a].tail, []).append((fcol[a], -1.0))
            for v in inner:
                d = float(problem.demand.get(v, 0))
                add_row(per_node.get(v, []), d, d)
            total = float(problem.total_demand)
            for a in active:
                if problem.is_root_arc(a):
                    add_row([(fcol[a], 1.0), (a, -total)], -inf, 0.0)
                else:
                    self.cap_rows[a] = add_row([(fcol[a], 1.0), (a, -float(problem.s_max))], -inf, 0.0)
                dh = problem.demand.get(arcs[a].head, 0)
                if dh:
                    add_row([(fcol[a], 1.0), (a, -float(dh))], 0.0, inf)
        # in-degree <= 1 (root exempt); demand nodes need exactly one supply arc
        ins: dict[int, list[int]] = {}
        outs: dict[int, list[int]] = {}
        for a in active:
            ins.setdefault(arcs[a].head, []).append(a)
            outs.setdefault(arcs[a].tail, []).append(a)
        for v in inner:
            add_row([(a, 1.0) for a in ins.get(v, ())], 1.0 if v in problem.demand else 0.0, 1.0)
            # an arc can only leave v if v is supplied itself
            for b in outs.get(v, ()):
                add_row([(a, 1.0) for a in ins.get(v, ())] + [(b, -1.0)], 0.0, inf)
        # antiparallel pair: at most one direction
        act = set(active)
        for a in range(0, A - len(problem.substations), 2):
            if a in act and a + 1 in act:
                add_row([(a, 1.0), (a + 1, 1.0)], -inf, 1.0)
        r = len(rlo)
        M = sparse.csc_matrix((vals, (rows, cols)), shape=(r, ncol))
        M.sort_indices()
        lp = highspy.HighsLp()
        lp.num_col_ = ncol
        lp.num_row_ = r
        lp.col_cost_ = np.concatenate([[float(a.cost) for a in arcs], np.zeros(ncol - A)])
        xhi = np.array([1.0 if a in act else 0.0 for a in range(A)])
        lp.col_lower_ = np.zeros(ncol)
        fhi = np.ones(ncol - A) if kind == "multi" else np.full(ncol - A, inf)
        lp.col_upper_ = np.concatenate([xhi, fhi])
        lp.row_lower_ = np.asarray(rlo, dtype=float)
        lp.row_upper_ = np.asarray(rhi, dtype=float)
        lp.a_matrix_.format_ = highspy.MatrixFormat.kColwise
        lp.a_matrix_.start_ = M.indptr.astype(np.int32)
        lp.a_matrix_.index_ = M.indices.astype(np.int32)
        lp.a_matrix_.value_ = M.data.astype(float)
        self.h = highspy.Highs()
        self.h.setOptionValue("output_flag", False)
        self.h.setOptionValue("threads", 1)
        self.h.passModel(lp)
        self.lo = [0.0] * A
        self.hi = list(xhi)
        self.solves = 0

    def set_capacity(self, s_max: int):
        for a, r in self.cap_rows.items():
            self.h.changeCoeff(r, a, -float(s_max))

    def set_bounds(self, a: int, lo: float, hi: float):
        self.lo[a], self.hi[a] = lo, hi
        self.h.changeColBounds(a, lo, hi)

    def solve(self):
        """Returns (objective, x values, reduced costs) or None when infeasible."""
        self.solves += 1
        self.h.run()
        st = self.h.getModelStatus()
        if st != highspy.HighsModelStatus.kOptimal:
            if st in (highspy.HighsModelStatus.kInfeasible,):
                return None
            # numerical trouble: retry from scratch once
            self.h.clearSolver()
            self.h.run()
            st = self.h.getModelStatus()
            if st != highspy.HighsModelStatus.kOptimal:
                return None
        sol = self.h.getSolution()
        x = np.asarray(sol.col_value[: self.A])
        rc = np.asarray(sol.col_dual[: self.A])
        return self.h.getInfo().objective_function_value, x, rc


# ---------------------------------------------------------------------------
# branch and bound


def _ceil(z: float) -> int:
    return math.ceil(z - INT_TOL)


class _Budget:
    def __init__(self, time_limit, node_limit):
        self.t_end = None if time_limit is None else time.monotonic() + time_limit
        self.node_limit = node_limit
        self.nodes = 0
        self.hit = False

    def tick(self) -> bool:
        self.nodes += 1
        if self.node_limit is not None and self.nodes > self.node_limit:
            self.hit = True
        elif self.t_end is not None and time.monotonic() > self.t_end:
            self.hit = True
        return not self.hit


def _reachable(problem: FlowProblem) -> tuple[set[int], list[int]]:
    """Nodes reachable from the root and the arcs among them."""
    out: dict[int, list[int]] = {}
    for a, arc in enumerate(problem.arcs):
        out.setdefault(arc.tail, []).append(a)
    seen, stack = {problem.root}, [problem.root]
    while stack:
        v = stack.pop()
        for a in out.get(v, ()):
            h = problem.arcs[a].head
            if h not in seen:
                seen.add(h)
                stack.append(h)
    active = [a for a, arc in enumerate(problem.arcs) if arc.tail in seen and arc.head in seen]
    return seen, active


def shortest_path_forest(problem: FlowProblem) -> list[int] | None:
    """Dijkstra tree from the root (ties by arc id) restricted to demand paths."""
    import heapq

    out: dict[int, list[int]] = {}
    for a, arc in enumerate(problem.arcs):
        out.setdefault(arc.tail, []).append(a)
    dist = {problem.root: 0}
    pred = {}
    heap = [(0, -2, problem.root)]
    done = set()
    while heap:
        d, _, v = heapq.heappop(heap)
        if v in done:
            continue
        done.add(v)
        for a in out.get(v, ()):
            h = problem.arcs[a].head
            nd = d + problem.arcs[a].cost
            if h not in dist or nd < dist[h] or (nd == dist[h] and a < pred[h]):
                dist[h] = nd
                pred[h] = a
                heapq.heappush(heap, (nd, a, h))
    used = set()
    for v in problem.demand:
        if v not in pred:
            return None
        while v != problem.root:
            a = pred[v]
            if a in used:
                break
            used.add(a)
            v = problem.arcs[a].tail
    return sorted(used)


class _Search:
    def __init__(self, problem: FlowProblem, budget: _Budget, relax: _Relaxation | None = None,
                 kind: str = "single"):
        self.p = problem
        self.budget = budget
        _, self.active = _reachable(problem)
        self.relax = relax if relax is not None else _Relaxation(problem, self.active, kind)
        self.relax.set_capacity(problem.s_max)
        self.free = [a for a in self.active]
        self.best: list[int] | None = None
        self.best_cost = math.inf

    def _integral(self, x) -> list[int] | None:
        vals = x[self.active]
        if np.all((np.abs(vals) < INT_TOL) | (np.abs(vals - 1) < INT_TOL)):
            inst = [a for a in self.active if x[a] > 0.5]
            flow = tree_flows(self.p, inst)
            if flow is None:
                return None
            if all(f <= self.p.s_max for a, f in flow.items() if not self.p.is_root_arc(a)):
                return prune_dangling(self.p, inst)
        return None

    def _offer(self, inst) -> bool:
        c = _objective(self.p, inst)
        if c < self.best_cost:
            self.best, self.best_cost = inst, c
            return True
        return False

    # Phase 1: find the optimal cost (or any feasible point when first_only)
    def optimise(self, first_only=False):
        if not first_only:
            spf = shortest_path_forest(self.p)
            if spf is not None:
                fl = tree_flows(self.p, spf)
                if fl is not None and all(f <= self.p.s_max for a, f in fl.items() if not self.p.is_root_arc(a)):
                    self._offer(spf)
        root = self.relax.solve()
        if root is None:
            return
        self._dfs(root, first_only)

    def _dfs(self, res, first_only) -> bool:
        if not self.budget.tick():
            return True
        z, x, rc = res
        if _ceil(z) >= self.best_cost:
            return False
        inst = self._integral(x)
        if inst is not None:
            self._offer(inst)
            return first_only
        # branch on the most fractional install variable (ties: lowest id)
        frac = np.abs(x[self.active] - 0.5)
        order = np.lexsort((np.asarray(self.active), frac))
        a = None
        for i in order:
            cand = self.active[i]
            if self.relax.lo[cand] != self.relax.hi[cand] and INT_TOL < x[cand] < 1 - INT_TOL:
                a = cand
                break
        if a is None:
            # integral install vector but infeasible flow extraction (numerical); fix first free arc
            for cand in self.active:
                if self.relax.lo[cand] != self.relax.hi[cand]:
                    a = cand
                    break
            if a is None:
                return False
        first = 1 if x[a] >= 0.5 else 0
        for val in (first, 1 - first):
            self.relax.set_bounds(a, float(val), float(val))
            child = self.relax.solve()
            stop = False
            if child is not None:
                stop = self._dfs(child, first_only)
            self.relax.set_bounds(a, 0.0, 1.0)
            if stop:
                return True
        return False

    # Phase 2: lexicographically smallest installed set among optimal ones
    def canonical(self, target: int) -> list[int] | None:
        res = self.relax.solve()
        if res is None:
            return None
        self._lex_found = None
        self._lex(0, res, target)
        return self._lex_found

    def _lex(self, pos, res, target) -> bool:
        if not self.budget.tick():
            return True
        z, x, rc = res
        if _ceil(z) > target:
            return False
        act = self.active
        while pos < len(act):
            a = act[pos]
            if self.relax.lo[a] == self.relax.hi[a]:
                pos += 1
                continue
            break
        if pos == len(act):
            inst = self._integral(x)
            if inst is not None and _objective(self.p, inst) <= target:
                self._lex_found = inst
                return True
            return False
        a = act[pos]
        tried = []
        for val in (1, 0):
            if val == 1 and x[a] < INT_TOL and _ceil(z + max(rc[a], 0.0)) > target:
                continue  # reduced-cost fixing
            self.relax.set_bounds(a, float(val), float(val))
            if abs(x[a] - val) < INT_TOL:
                child = res
            else:
                child = self.relax.solve()
            found = child is not None and self._lex(pos + 1, child, target)
            self.relax.set_bounds(a, 0.0, 1.0)
            if found:
                return True
            tried.append(val)
        return False


def _presolve_status(problem: FlowProblem) -> str | None:
    if not problem.demand:
        return "trivial"
    seen, _ = _reachable(problem)
    if any(v not in seen for v in problem.demand):
        return "infeasible"
    if max(problem.demand.values()) > problem.s_max:
        return "infeasible"
    return None


def solve(problem: FlowProblem, time_limit: float | None = 60.0, node_limit: int | None = None,
          exact_arc_limit: int = 200) -> FlowSolution:
    """Optimal radial install/flow assignment.

    Returns status "optimal" with the lexicographically smallest installed
    arc-id set among all cost-minimal ones, "infeasible" when no assignment
    exists at the given s_max, "heuristic" when the budget ran out with a
    feasible point in hand, and "unknown" when it ran out without one.
    """
    pre = _presolve_status(problem)
    if pre == "trivial":
        return _make_solution(problem, [], "optimal", {})
    if pre == "infeasible":
        return FlowSolution("infeasible", {a: 0 for a in range(len(problem.arcs))},
                            {a: 0 for a in range(len(problem.arcs))}, 0)
    budget = _Budget(time_limit, node_limit)
    search = _Search(problem, budget)
    search.optimise()
    if budget.hit:
        if search.best is None:
            sol = FlowSolution("unknown")
        else:
            sol = _make_solution(problem, search.best, "heuristic")
    elif search.best is None:
        sol = FlowSolution("infeasible", {a: 0 for a in range(len(problem.arcs))},
                           {a: 0 for a in range(len(problem.arcs))}, 0)
    else:
        canon = search.canonical(int(search.best_cost))
        if canon is None or budget.hit:
            if not budget.hit:
                raise RadialError("lexicographic pass lost the optimum; LP tolerance problem")
            sol = _make_solution(problem, search.best, "heuristic")
        else:
            sol = _make_solution(problem, canon, "optimal")
    sol.nodes_explored = budget.nodes
    sol.lp_solves = search.relax.solves
    if sol.status == "heuristic" and len(search.active) <= exact_arc_limit:
        logger.warning("exactness budget exhausted on a %d-arc instance", len(search.active))
    return sol


def _max_graph_flow(problem: FlowProblem, inst) -> int:
    flow = tree_flows(problem, inst)
    return max((f for a, f in flow.items() if not problem.is_root_arc(a)), default=0)


def _probe(problem: FlowProblem, time_limit, node_limit, relax) -> tuple[bool | None, int | None]:
    """(feasible?, largest graph-arc flow of the witness found)."""
    pre = _presolve_status(problem)
    if pre == "trivial":
        return True, 0
    if pre == "infeasible":
        return False, None
    spf = shortest_path_forest(problem)
    if spf is not None:
        m = _max_graph_flow(problem, spf)
        if m <= problem.s_max:
            return True, m
    budget = _Budget(time_limit, node_limit)
    search = _Search(problem, budget, relax)
    search.optimise(first_only=True)
    if search.best is not None:
        return True, _max_graph_flow(problem, search.best)
    return (None if budget.hit else False), None


def is_feasible(problem: FlowProblem, time_limit=None, node_limit=None) -> bool | None:
    """Feasibility probe at problem.s_max; None if the budget ran out undecided."""
    return _probe(problem, time_limit, node_limit, None)[0]


def min_feasible_capacity(problem: FlowProblem, lo: int | None = None, hi: int | None = None,
                          time_limit: float | None = 60.0, node_limit: int | None = None):
    """Smallest integer s_max in [lo, hi] admitting a feasible radial supply.

    Feasibility is monotone in s_max, so integer bisection is exact. A feasible
    probe also proves feasibility at the largest flow its witness carries,
    which tightens the upper end faster than halving alone.
    Returns (s_max*, optimal solution at s_max*).
    """
    if not problem.demand:
        return 0, solve(problem)
    lo = max(problem.demand.values()) if lo is None else int(lo)
    hi = problem.total_demand if hi is None else int(hi)
    if lo > hi:
        raise ValueError(f"empty capacity interval [{lo}, {hi}]")
    top, witness = _probe(problem.with_capacity(hi), time_limit, node_limit, None)
    if not top:
        raise RadialError("grid cannot supply demand at any capacity (disconnected buildings?)")
    _, active = _reachable(problem)
    relax = _Relaxation(problem.with_capacity(hi), active, kind="single")
    lo_bad = lo - 1  # largest capacity known to be infeasible
    hi_ok = max(lo, min(hi, witness))  # smallest capacity known to be feasible
    while hi_ok - lo_bad > 1:
        mid = (lo_bad + hi_ok) // 2
        ok, witness = _probe(problem.with_capacity(mid), time_limit, node_limit, relax)
        if ok is None:
            logger.warning("capacity probe at %d VA undecided within budget; treated as infeasible", mid)
            ok = False
        logger.debug("capacity probe %d VA -> %s", mid, ok)
        if ok:
            hi_ok = max(lo, witness)
        else:
            lo_bad = mid
    return hi_ok, solve(problem.with_capacity(hi_ok), time_limit, node_limit)


# ---------------------------------------------------------------------------
# radial grid extraction


@dataclass
class Feeder:
    substation: int
    parent: dict[int, int]  # node -> parent node (substation maps to itself)
    edges: list[int]  # graph edge ids used by this feeder

    @property
    def nodes(self) -> list[int]:
        return sorted(self.parent)


@dataclass
class RadialGrid:
    feeders: dict[int, Feeder]
    assignment: dict[int, int]  # building node -> substation node
    s_max: int | None = None

    def used_edges(self) -> list[int]:
        return sorted(e for f in self.feeders.values() for e in f.edges)


def extract_radial(solution: FlowSolution, problem: FlowProblem, graph: Graph) -> RadialGrid:
    if solution.status not in ("optimal", "heuristic"):
        raise RadialError(f"cannot extract a radial grid from a {solution.status} solution")
    issues = check_solution(problem, solution)
    if issues:
        raise RadialError("solution violates radiality: " + "; ".join(issues[:5]))
    children: dict[int, list[int]] = {}
    for a in solution.installed:
        children.setdefault(problem.arcs[a].tail, []).append(a)
    feeders = {}
    assignment = {}
    for ra in children.get(problem.root, []):
        s = problem.arcs[ra].head
        parent, edges, stack = {s: s}, [], [s]
        while stack:
            v = stack.pop()
            for a in sorted(children.get(v, ())):
                arc = problem.arcs[a]
                parent[arc.head] = v
                edges.append(arc.edge)
                stack.append(arc.head)
                if arc.head in problem.demand:
                    assignment[arc.head] = s
        feeders[s] = Feeder(s, parent, sorted(edges))
    for v in problem.demand:
        if v not in assignment:
            raise RadialError(f"building node {v} not supplied by any feeder")
    for s, f in feeders.items():
        if len(f.edges) != len(f.parent) - 1:
            raise RadialError(f"feeder {s} is not a tree")
    return RadialGrid(feeders, assignment, problem.s_max)


def dump_json(obj: dict, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, sort_keys=True, indent=1)
