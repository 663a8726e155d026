"""Electrical network model: equipment catalog, assembly from a radial grid, export."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path

from .geo import Building, GeoPoint, PlanarPoint, Substation, project, unproject
from .graph import Graph
from .loads import LoadParams, annual_consumption, future_modules
from .radial import RadialGrid
from .solar import PvPanelSpec

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

SCHEMA = "gridforge-model/1"
TAP_STEP_PERCENT = 1.25
TAP_MIN, TAP_MAX = -2, 2
PARALLEL_COUNTS = (1, 2, 4)
BUS_KINDS = ("hv", "mv", "substation", "junction", "building")


class ModelError(ValueError):
    pass


# ---------------------------------------------------------------------------
# catalog


@dataclass(frozen=True)
class CableType:
    name: str
    r_ohm_per_km: float
    x_ohm_per_km: float
    rated_current_ka: float
    voltage_class: str = ""


@dataclass(frozen=True)
class TransformerType:
    name: str
    sn_mva: float
    vn_hv_kv: float
    vn_lv_kv: float
    uk_percent: float
    copper_loss_kw: float

    @property
    def ur_percent(self) -> float:
        return self.copper_loss_kw / (self.sn_mva * 1000.0) * 100.0


@dataclass(frozen=True)
class EquipmentCatalog:
    cables: dict[str, CableType]
    transformers: dict[str, TransformerType]
    pv_panels: dict[str, PvPanelSpec]
    defaults: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        for c in self.cables.values():
            if min(c.r_ohm_per_km, c.x_ohm_per_km, c.rated_current_ka) <= 0:
                raise ModelError(f"cable type {c.name!r}: parameters must be > 0")
        for t in self.transformers.values():
            if min(t.sn_mva, t.vn_hv_kv, t.vn_lv_kv, t.uk_percent, t.copper_loss_kw) <= 0:
                raise ModelError(f"transformer type {t.name!r}: parameters must be > 0")
            if t.ur_percent >= t.uk_percent:
                raise ModelError(f"transformer type {t.name!r}: copper losses exceed short-circuit voltage")

    def cable(self, name: str) -> CableType:
        if name not in self.cables:
            raise ModelError(f"cable type {name!r} not in catalog")
        return self.cables[name]

    def transformer(self, name: str) -> TransformerType:
        if name not in self.transformers:
            raise ModelError(f"transformer type {name!r} not in catalog")
        return self.transformers[name]

    def pv_panel(self, name: str) -> PvPanelSpec:
        if name not in self.pv_panels:
            raise ModelError(f"PV panel type {name!r} not in catalog")
        return self.pv_panels[name]

    def default(self, role: str) -> str:
        if role not in self.defaults:
            raise ModelError(f"catalog has no default for {role!r}")
        return self.defaults[role]

    @classmethod
    def from_dict(cls, data: dict) -> "EquipmentCatalog":
        try:
            cables = {n: CableType(n, **v) for n, v in data.get("cables", {}).items()}
            trafos = {n: TransformerType(n, **v) for n, v in data.get("transformers", {}).items()}
            panels = {n: PvPanelSpec(n, v["rated_power_w"], v["area_m2"])
                      for n, v in data.get("pv_panels", {}).items()}
        except (TypeError, KeyError) as exc:
            raise ModelError(f"malformed catalog entry: {exc}") from exc
        return cls(cables, trafos, panels, dict(data.get("defaults", {})))

    @classmethod
    def load(cls, path=None) -> "EquipmentCatalog":
        """Read a catalog TOML file; without a path the bundled defaults are used."""
        if path is None:
            text = resources.files("gridforge").joinpath("data/catalog.toml").read_text(encoding="utf-8")
            return cls.from_dict(tomllib.loads(text))
        path = Path(path)
        try:
            with open(path, "rb") as fh:
                data = tomllib.load(fh)
        except OSError as exc:
            raise ModelError(f"{path}: cannot read catalog ({exc.strerror})") from exc
        except tomllib.TOMLDecodeError as exc:
            raise ModelError(f"{path}: {exc}") from exc
        return cls.from_dict(data)


def tap_ratio(position: int, step_percent: float = TAP_STEP_PERCENT) -> float:
    """Voltage ratio multiplier on the LV side for a tap position."""
    if not TAP_MIN <= position <= TAP_MAX:
        raise ModelError(f"tap position {position} outside [{TAP_MIN}, {TAP_MAX}]")
    return 1.0 + position * step_percent / 100.0


# ---------------------------------------------------------------------------
# model


@dataclass(frozen=True)
class Bus:
    id: str
    vn_kv: float
    kind: str
    lat: float
    lon: float


@dataclass(frozen=True)
class Line:
    id: str
    from_bus: str
    to_bus: str
    cable: str
    r_ohm_per_km: float
    x_ohm_per_km: float
    rated_current_ka: float
    length_m: float
    parallel: int
    geometry: tuple[tuple[float, float], ...] = ()  # (lon, lat)


@dataclass(frozen=True)
class Transformer:
    id: str
    type: str
    hv_bus: str
    lv_bus: str
    sn_mva: float
    vn_hv_kv: float
    vn_lv_kv: float
    uk_percent: float
    copper_loss_kw: float
    tap_position: int = 0
    tap_step_percent: float = TAP_STEP_PERCENT

    @property
    def ratio(self) -> float:
        return tap_ratio(self.tap_position, self.tap_step_percent)


@dataclass(frozen=True)
class Load:
    id: str
    bus: str
    building_id: str
    annual_kwh: float


@dataclass(frozen=True)
class PvUnit:
    id: str
    bus: str
    building_id: str
    modules_present: int
    modules_full: int
    tilt_deg: float
    azimuth_deg: float


@dataclass(frozen=True)
class GridModel:
    buses: tuple[Bus, ...]
    lines: tuple[Line, ...]
    transformers: tuple[Transformer, ...]
    loads: tuple[Load, ...]
    pv_units: tuple[PvUnit, ...]
    slack_bus: str
    origin: GeoPoint
    power_factor: float = 0.97
    pv_panel: PvPanelSpec = PvPanelSpec()
    slack_voltage_pu: float = 1.0
    s_max_va: int | None = None

    def bus_index(self) -> dict[str, int]:
        return {b.id: i for i, b in enumerate(self.buses)}

    def problems(self) -> list[str]:
        out = []
        ids = [b.id for b in self.buses]
        known = set(ids)
        if len(known) != len(ids):
            out.append("duplicate bus ids")
        for b in self.buses:
            if b.kind not in BUS_KINDS:
                out.append(f"bus {b.id}: unknown kind {b.kind!r}")
            if not b.vn_kv > 0:
                out.append(f"bus {b.id}: nominal voltage must be > 0")
        if self.slack_bus not in known:
            out.append(f"slack bus {self.slack_bus!r} does not exist")
        branch_ids = [ln.id for ln in self.lines] + [t.id for t in self.transformers]
        if len(set(branch_ids)) != len(branch_ids):
            out.append("duplicate branch ids")
        for ln in self.lines:
            for end in (ln.from_bus, ln.to_bus):
                if end not in known:
                    out.append(f"line {ln.id}: unknown bus {end!r}")
            if ln.parallel not in PARALLEL_COUNTS:
                out.append(f"line {ln.id}: parallel count {ln.parallel} not in {PARALLEL_COUNTS}")
            if not ln.length_m > 0:
                out.append(f"line {ln.id}: length must be > 0")
            if min(ln.r_ohm_per_km, ln.x_ohm_per_km, ln.rated_current_ka) <= 0:
                out.append(f"line {ln.id}: electrical parameters must be > 0")
        for t in self.transformers:
            for end in (t.hv_bus, t.lv_bus):
                if end not in known:
                    out.append(f"transformer {t.id}: unknown bus {end!r}")
            if not TAP_MIN <= t.tap_position <= TAP_MAX:
                out.append(f"transformer {t.id}: tap position {t.tap_position} outside [{TAP_MIN}, {TAP_MAX}]")
        for ld in self.loads:
            if ld.bus not in known:
                out.append(f"load {ld.id}: unknown bus {ld.bus!r}")
            if ld.annual_kwh < 0:
                out.append(f"load {ld.id}: negative annual consumption")
        for pv in self.pv_units:
            if pv.bus not in known:
                out.append(f"pv unit {pv.id}: unknown bus {pv.bus!r}")
            if not 0 <= pv.modules_present <= pv.modules_full:
                out.append(f"pv unit {pv.id}: module counts must satisfy 0 <= present <= full")
        if not out:
            out.extend(_tree_problems(self))
        return out

    def validate(self) -> "GridModel":
        issues = self.problems()
        if issues:
            raise ModelError("invalid grid model: " + "; ".join(issues[:8]))
        return self

    def inventory(self) -> dict[str, int]:
        kinds = {k: 0 for k in BUS_KINDS}
        for b in self.buses:
            kinds[b.kind] += 1
        return {
            "buses": len(self.buses),
            "lines": len(self.lines),
            "lv_lines": sum(1 for ln in self.lines if not ln.id.startswith("MV")),
            "mv_lines": sum(1 for ln in self.lines if ln.id.startswith("MV")),
            "transformers": len(self.transformers),
            "loads": len(self.loads),
            "pv_units": len(self.pv_units),
            "secondary_substations": kinds["substation"],
            "junctions": kinds["junction"],
            "building_buses": kinds["building"],
        }


def _tree_problems(model: GridModel) -> list[str]:
    """The whole network (HV, MV and every LV feeder) must form one tree."""
    parent = {b.id: b.id for b in model.buses}

    def find(v):
        while parent[v] != v:
            parent[v] = parent[parent[v]]
            v = parent[v]
        return v

    out = []
    branches = [(ln.id, ln.from_bus, ln.to_bus) for ln in model.lines]
    branches += [(t.id, t.hv_bus, t.lv_bus) for t in model.transformers]
    for bid, a, b in branches:
        ra, rb = find(a), find(b)
        if ra == rb:
            out.append(f"branch {bid} closes a loop; the network must be radial")
            return out
        parent[ra] = rb
    roots = {find(b.id) for b in model.buses}
    if len(roots) > 1:
        out.append(f"network has {len(roots)} islands; every bus must connect to the slack")
    return out


# ---------------------------------------------------------------------------
# assembly


def parallel_count(kind_a: str, kind_b: str) -> int:
    """Cables touching a secondary substation are laid 4-fold, building stubs
    single, every other street cable 2-fold. The substation rule takes
    precedence for a direct substation-building connection."""
    kinds = {kind_a, kind_b}
    if "substation" in kinds:
        return 4
    if "building" in kinds:
        return 1
    return 2


def _bus_id(node_kind: str, node_id: int, ref: str | None) -> str:
    if node_kind == "building":
        return f"bld:{ref}"
    if node_kind == "substation":
        return f"sub:{ref}"
    return f"J{node_id}"


def assemble(radial: RadialGrid, graph: Graph, buildings: list[Building], substations: list[Substation],
             catalog: EquipmentCatalog, origin: GeoPoint, params: LoadParams = LoadParams(),
             hv_tap: int = 0, roof_share: str = "0.4") -> GridModel:
    """Turn an optimised radial grid into a parametrised electrical network.

    MV side: one HV/MV transformer at the primary substation feeding a star of
    MV cables (straight-line length) to every secondary substation, each with
    an MV/LV transformer onto its LV busbar. Without a primary substation in
    the input the star centre is the centroid of the secondaries.
    """
    lv_cable = catalog.cable(catalog.default("lv_cable"))
    mv_cable = catalog.cable(catalog.default("mv_cable"))
    mv_lv = catalog.transformer(catalog.default("mv_lv_transformer"))
    hv_mv = catalog.transformer(catalog.default("hv_mv_transformer"))
    panel = catalog.pv_panel(catalog.default("pv_panel"))
    tap_ratio(hv_tap)

    def geo(pt) -> tuple[float, float]:
        g = unproject(PlanarPoint(*pt), origin)
        return (g.lon, g.lat)

    secondaries = [s for s in substations if s.kind == "secondary"]
    primaries = [s for s in substations if s.kind == "primary"]
    if primaries:
        primary_id = primaries[0].id
        primary_xy = project(primaries[0].location, origin)
    else:
        primary_id = "primary"
        pts = [project(s.location, origin) for s in secondaries]
        primary_xy = PlanarPoint(sum(p.x for p in pts) / len(pts), sum(p.y for p in pts) / len(pts))
    p_lon, p_lat = geo((primary_xy.x, primary_xy.y))

    buses: dict[str, Bus] = {}
    lines: list[Line] = []
    trafos: list[Transformer] = []
    hv_bus, mv_main = f"hv:{primary_id}", f"mv:{primary_id}"
    buses[hv_bus] = Bus(hv_bus, hv_mv.vn_hv_kv, "hv", p_lat, p_lon)
    buses[mv_main] = Bus(mv_main, hv_mv.vn_lv_kv, "mv", p_lat, p_lon)
    trafos.append(_transformer(f"T-{primary_id}", hv_mv, hv_bus, mv_main, hv_tap))

    used_subs = set()
    for s_node in sorted(radial.feeders):
        node = graph.nodes[s_node]
        used_subs.add(node.ref)
    for s in sorted(secondaries, key=lambda s: s.id):
        if s.id not in used_subs:
            continue
        xy = project(s.location, origin)
        lon, lat = geo((xy.x, xy.y))
        mv_bus, lv_bus = f"mv:{s.id}", f"sub:{s.id}"
        buses[mv_bus] = Bus(mv_bus, mv_lv.vn_hv_kv, "mv", lat, lon)
        buses[lv_bus] = Bus(lv_bus, mv_lv.vn_lv_kv, "substation", lat, lon)
        length = max(1.0, math.hypot(xy.x - primary_xy.x, xy.y - primary_xy.y))
        lines.append(Line(f"MV-{s.id}", mv_main, mv_bus, mv_cable.name, mv_cable.r_ohm_per_km,
                          mv_cable.x_ohm_per_km, mv_cable.rated_current_ka, length, 1,
                          ((p_lon, p_lat), (lon, lat))))
        trafos.append(_transformer(f"T-{s.id}", mv_lv, mv_bus, lv_bus, 0))

    for feeder in radial.feeders.values():
        for nid in feeder.nodes:
            node = graph.nodes[nid]
            bid = _bus_id(node.kind, nid, node.ref)
            if bid not in buses:
                lon, lat = geo(node.point)
                buses[bid] = Bus(bid, mv_lv.vn_lv_kv, node.kind, lat, lon)
        for eid in feeder.edges:
            e = graph.edges[eid]
            nu, nv = graph.nodes[e.u], graph.nodes[e.v]
            lines.append(Line(
                f"L{eid}", _bus_id(nu.kind, e.u, nu.ref), _bus_id(nv.kind, e.v, nv.ref), lv_cable.name,
                lv_cable.r_ohm_per_km, lv_cable.x_ohm_per_km, lv_cable.rated_current_ka, e.length,
                parallel_count(nu.kind, nv.kind), tuple(geo(p) for p in e.geometry),
            ))

    loads, pvs = [], []
    for b in sorted(buildings, key=lambda b: b.id):
        bus = f"bld:{b.id}"
        if bus not in buses:
            raise ModelError(f"building {b.id} is not part of the radial grid")
        loads.append(Load(f"load:{b.id}", bus, b.id, float(annual_consumption(b, params))))
        full = future_modules(b, panel, roof_share)
        if full > 0:
            pvs.append(PvUnit(f"pv:{b.id}", bus, b.id, b.pv_modules_installed, full, b.roof_tilt, b.roof_azimuth))

    model = GridModel(
        buses=tuple(sorted(buses.values(), key=lambda b: b.id)),
        lines=tuple(sorted(lines, key=lambda ln: ln.id)),
        transformers=tuple(sorted(trafos, key=lambda t: t.id)),
        loads=tuple(loads),
        pv_units=tuple(pvs),
        slack_bus=hv_bus,
        origin=origin,
        power_factor=params.power_factor,
        pv_panel=panel,
        s_max_va=radial.s_max,
    )
    return model.validate()


def _transformer(tid: str, t: TransformerType, hv: str, lv: str, tap: int) -> Transformer:
    return Transformer(tid, t.name, hv, lv, t.sn_mva, t.vn_hv_kv, t.vn_lv_kv, t.uk_percent,
                       t.copper_loss_kw, tap)


# ---------------------------------------------------------------------------
# serialisation


def model_to_dict(model: GridModel) -> dict:
    return {
        "schema": SCHEMA,
        "origin": {"lat": model.origin.lat, "lon": model.origin.lon},
        "slack_bus": model.slack_bus,
        "slack_voltage_pu": model.slack_voltage_pu,
        "power_factor": model.power_factor,
        "s_max_va": model.s_max_va,
        "pv_panel": {"name": model.pv_panel.name, "rated_power_w": model.pv_panel.rated_power,
                     "area_m2": model.pv_panel.area},
        "buses": [asdict(b) for b in model.buses],
        "lines": [{**asdict(ln), "geometry": [list(p) for p in ln.geometry]} for ln in model.lines],
        "transformers": [asdict(t) for t in model.transformers],
        "loads": [asdict(ld) for ld in model.loads],
        "pv_units": [asdict(pv) for pv in model.pv_units],
    }


def model_from_dict(data: dict) -> GridModel:
    if data.get("schema") != SCHEMA:
        raise ModelError(f"unsupported model schema {data.get('schema')!r}, expected {SCHEMA!r}")
    try:
        panel = data["pv_panel"]
        return GridModel(
            buses=tuple(Bus(**b) for b in data["buses"]),
            lines=tuple(Line(**{**ln, "geometry": tuple(tuple(p) for p in ln["geometry"])})
                        for ln in data["lines"]),
            transformers=tuple(Transformer(**t) for t in data["transformers"]),
            loads=tuple(Load(**ld) for ld in data["loads"]),
            pv_units=tuple(PvUnit(**pv) for pv in data["pv_units"]),
            slack_bus=data["slack_bus"],
            origin=GeoPoint(**data["origin"]),
            power_factor=data["power_factor"],
            pv_panel=PvPanelSpec(panel["name"], panel["rated_power_w"], panel["area_m2"]),
            slack_voltage_pu=data["slack_voltage_pu"],
            s_max_va=data["s_max_va"],
        )
    except (KeyError, TypeError) as exc:
        raise ModelError(f"malformed model document: {exc}") from exc


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=1, allow_nan=False) + "\n"


def export_model(model: GridModel, path) -> Path:
    """Write the model as canonical JSON; refuses invalid models."""
    model.validate()
    path = Path(path)
    text = canonical_json(model_to_dict(model))
    try:
        path.write_text(text, encoding="utf-8")
    except OSError as exc:
        raise OSError(f"{path}: cannot write model ({exc.strerror})") from exc
    return path


def import_model(path) -> GridModel:
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ModelError(f"{path}: cannot read model ({exc.strerror})") from exc
    except json.JSONDecodeError as exc:
        raise ModelError(f"{path}: invalid JSON at line {exc.lineno} column {exc.colno}") from exc
    return model_from_dict(data).validate()


def model_geojson(model: GridModel, line_loading: dict[str, float] | None = None,
                  bus_voltage: dict[str, float] | None = None) -> dict:
    """Lines, buses and buildings as a GeoJSON FeatureCollection (lon/lat).

    With results, line features carry "loading_pct" and bus features
    "voltage_pu"; missing entries (e.g. a non-converged snapshot) are null.
    """
    feats = []
    bus_pos = {b.id: (b.lon, b.lat) for b in model.buses}
    for ln in model.lines:
        coords = ln.geometry or (bus_pos[ln.from_bus], bus_pos[ln.to_bus])
        props = {"id": ln.id, "feature": "line", "from_bus": ln.from_bus, "to_bus": ln.to_bus,
                 "cable": ln.cable, "parallel": ln.parallel, "length_m": ln.length_m}
        if line_loading is not None:
            props["loading_pct"] = line_loading.get(ln.id)
        feats.append({"type": "Feature", "geometry": {"type": "LineString", "coordinates": [list(c) for c in coords]},
                      "properties": props})
    for b in model.buses:
        props = {"id": b.id, "feature": "bus", "kind": b.kind, "vn_kv": b.vn_kv}
        if bus_voltage is not None:
            props["voltage_pu"] = bus_voltage.get(b.id)
        feats.append({"type": "Feature", "geometry": {"type": "Point", "coordinates": [b.lon, b.lat]},
                      "properties": props})
    pv_of = {pv.building_id: pv for pv in model.pv_units}
    for ld in model.loads:
        pv = pv_of.get(ld.building_id)
        props = {"id": ld.building_id, "feature": "building", "bus": ld.bus, "annual_kwh": ld.annual_kwh,
                 "pv_modules_present": pv.modules_present if pv else 0,
                 "pv_modules_full": pv.modules_full if pv else 0}
        feats.append({"type": "Feature", "geometry": {"type": "Point", "coordinates": list(bus_pos[ld.bus])},
                      "properties": props})
    return {"type": "FeatureCollection", "features": feats}


def export_geojson(model: GridModel, path, results=None) -> Path:
    """GeoJSON for GIS viewers; `results` is anything exposing `line_loading`
    and `bus_voltage` mappings (a snapshot or a series envelope)."""
    ll = bv = None
    if results is not None:
        ll, bv = results.line_loading, results.bus_voltage
    path = Path(path)
    path.write_text(canonical_json(model_geojson(model, ll, bv)), encoding="utf-8")
    return path
