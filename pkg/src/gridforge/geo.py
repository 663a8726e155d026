"""Input parsing for streets, buildings and substations, plus a local planar projection."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

logger = logging.getLogger(__name__)

EARTH_RADIUS_M = 6_371_000.0
USE_CATEGORIES = ("residential", "childcare", "school", "office")
MIX_TOL = 1e-9


class InputError(ValueError):
    """Raised when an input file cannot be read or has the wrong overall shape."""


@dataclass(frozen=True)
class GeoPoint:
    lat: float
    lon: float

    def __post_init__(self):
        if not (math.isfinite(self.lat) and -90.0 <= self.lat <= 90.0):
            raise ValueError(f"latitude out of range: {self.lat}")
        if not (math.isfinite(self.lon) and -180.0 <= self.lon <= 180.0):
            raise ValueError(f"longitude out of range: {self.lon}")


@dataclass(frozen=True)
class PlanarPoint:
    x: float
    y: float


@dataclass(frozen=True)
class Household:
    residents: int
    area: float


@dataclass(frozen=True)
class Building:
    id: str
    location: GeoPoint
    footprint_area: float
    households: tuple[Household, ...] = ()
    use_mix: dict[str, float] = field(default_factory=lambda: {"residential": 1.0})
    pv_modules_installed: int = 0
    pv_modules_potential: int = 0
    roof_tilt: float = 30.0
    roof_azimuth: float = 180.0

    def __post_init__(self):
        problems = building_problems(self)
        if problems:
            raise ValueError(f"building {self.id!r}: " + "; ".join(problems))


@dataclass(frozen=True)
class Substation:
    id: str
    location: GeoPoint
    kind: str = "secondary"

    def __post_init__(self):
        if self.kind not in ("secondary", "primary"):
            raise ValueError(f"substation {self.id!r}: unknown kind {self.kind!r}")


@dataclass
class StreetFeature:
    id: str
    points: list[GeoPoint]
    highway: str | None = None


def building_problems(b: Building) -> list[str]:
    out = []
    if not b.footprint_area > 0:
        out.append(f"footprint_area must be > 0, got {b.footprint_area}")
    for h in b.households:
        if h.residents < 0:
            out.append("negative resident count")
        if h.area < 0:
            out.append("negative household area")
    if b.pv_modules_installed < 0 or b.pv_modules_potential < 0:
        out.append("negative PV module count")
    if b.pv_modules_installed > b.pv_modules_potential:
        out.append(
            f"pv_modules_installed={b.pv_modules_installed} exceeds "
            f"pv_modules_potential={b.pv_modules_potential}"
        )
    unknown = sorted(set(b.use_mix) - set(USE_CATEGORIES))
    if unknown:
        out.append(f"unknown use categories {unknown}")
    if any(not (0.0 <= v <= 1.0) for v in b.use_mix.values()):
        out.append("use_mix fractions must lie in [0, 1]")
    elif abs(sum(b.use_mix.values()) - 1.0) > MIX_TOL:
        out.append(f"use_mix sums to {sum(b.use_mix.values())}, expected 1")
    return out


def _load_json(path: Path):
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(
            f"{path}: malformed JSON at line {exc.lineno}, column {exc.colno} "
            f"(offset {exc.pos}): {exc.msg}"
        ) from exc


def parse_streets(path) -> tuple[list[StreetFeature], list[str]]:
    """Read a GeoJSON FeatureCollection of LineStrings.

    Returns the accepted features in file order and a list of feature-level
    error messages for rejected ones (wrong geometry type, too few vertices).
    """
    doc = _load_json(path)
    if not isinstance(doc, dict) or doc.get("type") != "FeatureCollection":
        raise InputError(f"{path}: expected a GeoJSON FeatureCollection")
    features, errors = [], []
    raw = doc.get("features") or []
    if not raw:
        logger.warning("%s: street FeatureCollection is empty", path)
    for i, feat in enumerate(raw):
        fid = str(feat.get("id", (feat.get("properties") or {}).get("id", f"#{i}")))
        geom = feat.get("geometry") or {}
        if geom.get("type") != "LineString":
            errors.append(f"feature {fid}: geometry type {geom.get('type')!r} is not LineString")
            continue
        coords = geom.get("coordinates") or []
        if len(coords) < 2:
            errors.append(f"feature {fid}: LineString needs at least 2 vertices, got {len(coords)}")
            continue
        try:
            pts = [GeoPoint(lat=float(c[1]), lon=float(c[0])) for c in coords]
        except (ValueError, TypeError, IndexError) as exc:
            errors.append(f"feature {fid}: bad coordinate ({exc})")
            continue
        props = feat.get("properties") or {}
        features.append(StreetFeature(id=fid, points=pts, highway=props.get("highway")))
    for msg in errors:
        logger.warning("%s: %s", path, msg)
    return features, errors


def building_from_record(rec: dict) -> Building:
    households = tuple(
        Household(residents=int(h["residents"]), area=float(h["area_m2"]))
        for h in rec.get("households", [])
    )
    mix = {str(k): float(v) for k, v in (rec.get("use_mix") or {"residential": 1.0}).items()}
    return Building(
        id=str(rec["id"]),
        location=GeoPoint(float(rec["lat"]), float(rec["lon"])),
        footprint_area=float(rec["footprint_m2"]),
        households=households,
        use_mix=mix,
        pv_modules_installed=int(rec.get("pv_modules_installed", 0)),
        pv_modules_potential=int(rec.get("pv_modules_potential", 0)),
        roof_tilt=float(rec.get("roof_tilt_deg", 30.0)),
        roof_azimuth=float(rec.get("roof_azimuth_deg", 180.0)),
    )


def building_to_record(b: Building) -> dict:
    return {
        "id": b.id,
        "lat": b.location.lat,
        "lon": b.location.lon,
        "footprint_m2": b.footprint_area,
        "has_address": True,
        "households": [{"residents": h.residents, "area_m2": h.area} for h in b.households],
        "use_mix": dict(b.use_mix),
        "pv_modules_installed": b.pv_modules_installed,
        "pv_modules_potential": b.pv_modules_potential,
        "roof_tilt_deg": b.roof_tilt,
        "roof_azimuth_deg": b.roof_azimuth,
    }


def parse_buildings(path) -> tuple[list[Building], list[str]]:
    """Read building records; returns (accepted buildings, rejection messages).

    Records without an address are skipped with a warning, mirroring the
    address/house-number filter used when harvesting buildings.
    """
    doc = _load_json(path)
    if not isinstance(doc, list):
        raise InputError(f"{path}: expected a JSON array of building records")
    out, errors = [], []
    for i, rec in enumerate(doc):
        bid = str(rec.get("id", f"#{i}"))
        if not rec.get("has_address", False):
            logger.warning("%s: building %s has no address, skipped", path, bid)
            continue
        try:
            out.append(building_from_record(rec))
        except (KeyError, TypeError, ValueError) as exc:
            msg = f"building {bid} rejected: {exc}"
            logger.warning("%s: %s", path, msg)
            errors.append(msg)
    return out, errors


def parse_substations(path) -> list[Substation]:
    doc = _load_json(path)
    if not isinstance(doc, list):
        raise InputError(f"{path}: expected a JSON array of substation records")
    subs = []
    for rec in doc:
        try:
            subs.append(
                Substation(
                    id=str(rec["id"]),
                    location=GeoPoint(float(rec["lat"]), float(rec["lon"])),
                    kind=str(rec.get("kind", "secondary")),
                )
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise InputError(f"{path}: bad substation record {rec!r}: {exc}") from exc
    if not any(s.kind == "secondary" for s in subs):
        raise InputError(f"{path}: at least one secondary substation is required")
    return subs


def origin_of(substations) -> GeoPoint:
    """Centroid of all substation locations; used as the projection origin."""
    subs = list(substations)
    if not subs:
        raise ValueError("no substations to take an origin from")
    return GeoPoint(
        sum(s.location.lat for s in subs) / len(subs),
        sum(s.location.lon for s in subs) / len(subs),
    )


def _check_district(p: GeoPoint, origin: GeoPoint):
    if abs(p.lat - origin.lat) >= 1.0 or abs(p.lon - origin.lon) >= 1.0:
        raise ValueError(
            f"point ({p.lat}, {p.lon}) is more than 1 degree from origin "
            f"({origin.lat}, {origin.lon}); the local equirectangular projection is only "
            "meant for district-scale inputs, use a UTM-based projection for larger areas"
        )


def project(p: GeoPoint, origin: GeoPoint) -> PlanarPoint:
    _check_district(p, origin)
    k = math.pi / 180.0
    x = EARTH_RADIUS_M * (p.lon - origin.lon) * k * math.cos(origin.lat * k)
    y = EARTH_RADIUS_M * (p.lat - origin.lat) * k
    return PlanarPoint(x, y)


def unproject(q: PlanarPoint, origin: GeoPoint) -> GeoPoint:
    k = math.pi / 180.0
    lat = origin.lat + q.y / (EARTH_RADIUS_M * k)
    lon = origin.lon + q.x / (EARTH_RADIUS_M * k * math.cos(origin.lat * k))
    return GeoPoint(lat, lon)
