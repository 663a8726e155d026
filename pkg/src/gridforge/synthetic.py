"""Bundled synthetic input districts (street GeoJSON, building and substation JSON).

The layouts are hand-drawn in a local metric frame and converted to WGS84
around a suburban site at 49.0 N / 8.4 E. Building attributes come from a
seeded RNG, so the files are identical on every run.
"""

from __future__ import annotations

import json
import math
import random
from pathlib import Path

from .geo import GeoPoint, PlanarPoint, unproject

SITE = GeoPoint(49.0, 8.4)
MODULE_AREA = 1.6434


def _ll(x, y):
    g = unproject(PlanarPoint(x, y), SITE)
    return [round(g.lon, 9), round(g.lat, 9)]


def _street(fid, pts, highway="residential"):
    return {
        "type": "Feature",
        "id": fid,
        "properties": {"highway": highway},
        "geometry": {"type": "LineString", "coordinates": [_ll(x, y) for x, y in pts]},
    }


def _building(bid, x, y, footprint, households, mix=None, tilt=30.0, azimuth=180.0, installed=0,
              potential=None, has_address=True):
    lon, lat = _ll(x, y)
    if potential is None:
        potential = math.floor(0.42 * footprint / MODULE_AREA)
    return {
        "id": bid,
        "lat": lat,
        "lon": lon,
        "footprint_m2": round(footprint, 1),
        "has_address": has_address,
        "households": [{"residents": r, "area_m2": a} for r, a in households],
        "use_mix": mix or {"residential": 1.0},
        "pv_modules_installed": installed,
        "pv_modules_potential": potential,
        "roof_tilt_deg": round(tilt, 1),
        "roof_azimuth_deg": round(azimuth, 1),
    }


def district(seed: int = 7):
    """Linear suburban village: 40 addressed buildings, two secondary substations.

    A 840 m main street is closed into two loops by a back street and three
    cross streets; the secondary substations sit at the two ends of the main
    street and the primary substation 900 m to the north.
    """
    rng = random.Random(seed)
    streets = [
        _street("w1", [(-420, 0), (-300, 0), (-150, 0), (0, 0), (150, 0), (300, 0), (420, 0)], "secondary"),
        _street("w2", [(-300, 120), (-150, 121), (0, 120), (150, 119), (300, 120)]),
        _street("w3", [(-300, 0), (-300, 60), (-300, 120)]),
        _street("w4", [(0, 0), (0, 120)]),
        _street("w5", [(300, 0), (301, 60), (300, 120)]),
        _street("w6", [(0, 120), (0, 150)], "footway"),
    ]
    spots = []
    for i in range(16):
        x = -390 + 52 * i + rng.uniform(-6, 6)
        spots.append((x, 16 + rng.uniform(-2, 3)))
        spots.append((x + rng.uniform(-8, 8), -16 - rng.uniform(-2, 3)))
    for x in (-240, -120, 80, 210):
        spots.append((x + rng.uniform(-5, 5), 136 + rng.uniform(-2, 2)))
        spots.append((x + 20 + rng.uniform(-5, 5), 104 + rng.uniform(-2, 2)))
    buildings = []
    for i, (x, y) in enumerate(spots):
        bid = f"B{i + 1:02d}"
        tilt = rng.uniform(20, 40)
        az = 180 + rng.uniform(-50, 50)
        footprint = rng.uniform(320, 560)
        if i == 5:
            rec = _building(bid, x, y, 820.0, [], {"school": 1.0}, tilt, az)
        elif i == 17:
            rec = _building(bid, x, y, 300.0, [], {"childcare": 1.0}, tilt, az)
        elif i == 23:
            rec = _building(bid, x, y, footprint, [(2, 95.0), (3, 110.0)],
                            {"residential": 0.7, "office": 0.3}, tilt, az)
        else:
            n_h = rng.choice([2, 2, 3, 3, 4])
            hh = [(rng.randint(1, 4), round(rng.uniform(70, 130), 1)) for _ in range(n_h)]
            rec = _building(bid, x, y, footprint, hh, None, tilt, az)
        buildings.append(rec)
    for idx in rng.sample(range(len(buildings)), 8):
        if buildings[idx]["use_mix"] == {"residential": 1.0}:
            buildings[idx]["pv_modules_installed"] = rng.randint(8, 20)
    # a shed without an address: must be filtered out on ingest
    buildings.append(_building("B99", 120, 40, 60.0, [(1, 40.0)], has_address=False))
    substations = [
        {"id": "SS-W", "lat": _ll(-432, 14)[1], "lon": _ll(-432, 14)[0], "kind": "secondary"},
        {"id": "SS-E", "lat": _ll(432, -14)[1], "lon": _ll(432, -14)[0], "kind": "secondary"},
        {"id": "UW-N", "lat": _ll(0, 900)[1], "lon": _ll(0, 900)[0], "kind": "primary"},
    ]
    return {"type": "FeatureCollection", "features": streets}, buildings, substations


def tiny():
    """Six houses around one street block with a single secondary substation."""
    streets = [
        _street("a", [(0, 0), (100, 0), (100, 60), (0, 60), (0, 0)]),
        _street("b", [(0, 0), (-40, 0)]),
    ]
    spots = [(20, 12), (60, -12), (88, 30), (70, 72), (30, 48), (-12, 40)]
    buildings = [
        _building(f"H{i + 1}", x, y, 140.0 + 10 * i, [(2 + i % 3, 90.0 + 5 * i)], installed=6 if i % 2 else 0)
        for i, (x, y) in enumerate(spots)
    ]
    substations = [
        {"id": "SS-1", "lat": _ll(-48, 10)[1], "lon": _ll(-48, 10)[0], "kind": "secondary"},
        {"id": "UW-1", "lat": _ll(-300, 400)[1], "lon": _ll(-300, 400)[0], "kind": "primary"},
    ]
    return {"type": "FeatureCollection", "features": streets}, buildings, substations


def write_inputs(directory, which: str = "district", seed: int = 7) -> dict[str, Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    streets, buildings, subs = district(seed) if which == "district" else tiny()
    paths = {
        "streets": directory / "streets.geojson",
        "buildings": directory / "buildings.json",
        "substations": directory / "substations.json",
    }
    for key, obj in (("streets", streets), ("buildings", buildings), ("substations", subs)):
        paths[key].write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    return paths
