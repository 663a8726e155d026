"""End-to-end build: input files to a validated GridModel."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

from . import geo, graph as G, radial
from .loads import LoadParams, LoadProfile, peak_demand_va
from .model import EquipmentCatalog, GridModel, assemble

logger = logging.getLogger(__name__)


class StageError(RuntimeError):
    def __init__(self, stage: str, cause: Exception | str):
        super().__init__(f"{stage}: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass
class BuildResult:
    model: GridModel
    s_max_va: int
    objective_m: float
    status: str
    warnings: list[str] = field(default_factory=list)
    graph_stats: dict = field(default_factory=dict)

    def report(self) -> dict:
        return {
            "s_max_va": self.s_max_va,
            "radial_status": self.status,
            "radial_length_m": self.objective_m,
            "inventory": self.model.inventory(),
            "graph": self.graph_stats,
            "warnings": list(self.warnings),
        }


def street_graph(features, buildings, substations, origin) -> G.Graph:
    g = G.build_graph(features, origin)
    if not g.edges:
        raise ValueError("street network is empty")
    for s in sorted(substations, key=lambda s: s.id):
        if s.kind == "secondary":
            G.attach(g, geo.project(s.location, origin), "substation", s.id)
    for b in sorted(buildings, key=lambda b: b.id):
        G.attach(g, geo.project(b.location, origin), "building", b.id)
    return G.simplify(g)


def build(streets_path, buildings_path, substations_path, catalog: EquipmentCatalog | None = None,
          profile: LoadProfile | None = None, params: LoadParams = LoadParams(),
          capacity_bounds: tuple[int | None, int | None] = (None, None),
          time_limit: float | None = 60.0, node_limit: int | None = None, hv_tap: int = 0) -> BuildResult:
    """ingest -> street graph -> radialise (minimal capacity) -> assemble."""
    warnings: list[str] = []
    try:
        features, w1 = geo.parse_streets(streets_path)
        buildings, w2 = geo.parse_buildings(buildings_path)
        substations = geo.parse_substations(substations_path)
    except (OSError, ValueError) as exc:
        raise StageError("ingest", exc) from exc
    warnings += w1 + w2
    if not buildings:
        raise StageError("ingest", "no addressed buildings in input")
    catalog = catalog or EquipmentCatalog.load()
    profile = profile or LoadProfile.synthetic()
    origin = geo.origin_of(substations)
    try:
        g = street_graph(features, buildings, substations, origin)
    except ValueError as exc:
        raise StageError("street_graph", exc) from exc
    try:
        demands = {g.node_by_ref(b.id): peak_demand_va(b, profile, params) for b in buildings}
        subs = [g.node_by_ref(s.id) for s in substations if s.kind == "secondary"]
        problem = radial.build_flow_problem(g, demands, subs, sum(demands.values()))
        lo, hi = capacity_bounds
        s_star, sol = radial.min_feasible_capacity(problem, lo, hi, time_limit, node_limit)
        if sol.status not in ("optimal", "heuristic"):
            raise radial.RadialError(f"no radial supply found (status {sol.status})")
        if sol.status == "heuristic":
            warnings.append("radial topology is not proven optimal within the time budget")
        grid = radial.extract_radial(sol, problem.with_capacity(s_star), g)
    except (ValueError, radial.RadialError) as exc:
        raise StageError("radializer", exc) from exc
    try:
        model = assemble(grid, g, buildings, substations, catalog, origin, params, hv_tap=hv_tap)
    except ValueError as exc:
        raise StageError("electrical_model", exc) from exc
    for w in warnings:
        logger.warning(w)
    stats = {"nodes": len(g.nodes), "edges": len(g.edges), "length_m": g.total_length()}
    return BuildResult(model, s_star, sol.objective_m, sol.status, warnings, stats)
