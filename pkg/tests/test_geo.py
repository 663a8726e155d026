import json
import math

import pytest
from hypothesis import given, strategies as st

from gridforge.geo import (
    Building, GeoPoint, Household, InputError, PlanarPoint, Substation, building_from_record,
    origin_of, parse_buildings, parse_streets, parse_substations, project, unproject,
)


def _write(tmp_path, name, obj):
    p = tmp_path / name
    p.write_text(obj if isinstance(obj, str) else json.dumps(obj))
    return p


def _line(fid, coords):
    return {"type": "Feature", "id": fid, "properties": {"highway": "residential"},
            "geometry": {"type": "LineString", "coordinates": coords}}


def _rec(**kw):
    rec = {"id": "b1", "lat": 49.0, "lon": 8.4, "footprint_m2": 120.0, "has_address": True,
           "households": [{"residents": 3, "area_m2": 100.0}], "use_mix": {"residential": 1.0},
           "pv_modules_installed": 0, "pv_modules_potential": 10, "roof_tilt_deg": 30, "roof_azimuth_deg": 180}
    rec.update(kw)
    return rec


def test_minimal_linestring(tmp_path):
    p = _write(tmp_path, "s.geojson", {"type": "FeatureCollection", "features": [_line("w", [[8.4, 49.0], [8.401, 49.0]])]})
    feats, errors = parse_streets(p)
    assert len(feats) == 1 and len(feats[0].points) == 2 and errors == []
    assert feats[0].highway == "residential"


def test_empty_collection_warns(tmp_path, caplog):
    p = _write(tmp_path, "s.geojson", {"type": "FeatureCollection", "features": []})
    feats, errors = parse_streets(p)
    assert feats == [] and errors == []
    assert "empty" in caplog.text


def test_point_feature_rejected_by_id(tmp_path):
    coords = [[8.4 + i * 1e-4, 49.0] for i in range(5)]
    point = {"type": "Feature", "id": "node-17", "properties": {}, "geometry": {"type": "Point", "coordinates": [8.4, 49.0]}}
    p = _write(tmp_path, "s.geojson", {"type": "FeatureCollection", "features": [_line("w", coords), point]})
    feats, errors = parse_streets(p)
    assert len(feats) == 1 and len(feats[0].points) == 5
    assert len(errors) == 1 and "node-17" in errors[0]


def test_single_vertex_rejected(tmp_path):
    p = _write(tmp_path, "s.geojson", {"type": "FeatureCollection", "features": [_line("w9", [[8.4, 49.0]])]})
    feats, errors = parse_streets(p)
    assert feats == [] and "w9" in errors[0]


def test_malformed_json_reports_position(tmp_path):
    p = _write(tmp_path, "s.geojson", '{"type": "FeatureCollection",\n "features": [,]}')
    with pytest.raises(InputError, match=r"line 2, column 15"):
        parse_streets(p)


def test_building_roundtrip(tmp_path):
    p = _write(tmp_path, "b.json", [_rec()])
    (b,), errors = parse_buildings(p)
    assert errors == []
    assert b.households == (Household(3, 100.0),)
    assert b.use_mix == {"residential": 1.0}


def test_mixed_use_preserved(tmp_path):
    p = _write(tmp_path, "b.json", [_rec(use_mix={"residential": 0.5, "office": 0.5})])
    (b,), _ = parse_buildings(p)
    assert b.use_mix == {"residential": 0.5, "office": 0.5}


@pytest.mark.parametrize("bad, needle", [
    (dict(pv_modules_installed=5, pv_modules_potential=3), "pv_modules_installed"),
    (dict(use_mix={"residential": 0.5, "office": 0.4}), "use_mix"),
    (dict(footprint_m2=-3.0), "footprint"),
    (dict(households=[{"residents": 2, "area_m2": -10}]), "negative household area"),
    (dict(use_mix={"garage": 1.0}), "garage"),
])
def test_invalid_building_rejected_with_id(tmp_path, bad, needle):
    p = _write(tmp_path, "b.json", [_rec(id="bad-1", **bad), _rec(id="ok")])
    blds, errors = parse_buildings(p)
    assert [b.id for b in blds] == ["ok"]
    assert len(errors) == 1 and "bad-1" in errors[0] and needle in errors[0]


def test_missing_address_skipped(tmp_path, caplog):
    p = _write(tmp_path, "b.json", [_rec(id="shed", has_address=False)])
    blds, errors = parse_buildings(p)
    assert blds == [] and errors == []
    assert "shed" in caplog.text


def test_school_without_households_accepted():
    b = building_from_record(_rec(households=[], use_mix={"school": 1.0}))
    assert b.households == ()


def test_substations_need_a_secondary(tmp_path):
    p = _write(tmp_path, "s.json", [{"id": "UW", "lat": 49.0, "lon": 8.4, "kind": "primary"}])
    with pytest.raises(InputError, match="secondary"):
        parse_substations(p)
    p = _write(tmp_path, "s2.json", [{"id": "S", "lat": 49.0, "lon": 8.4, "kind": "secondary"}])
    assert parse_substations(p) == [Substation("S", GeoPoint(49.0, 8.4))]


def test_geopoint_range():
    with pytest.raises(ValueError):
        GeoPoint(91.0, 0.0)
    with pytest.raises(ValueError):
        GeoPoint(0.0, 181.0)


def test_origin_is_centroid():
    subs = [Substation("a", GeoPoint(49.0, 8.0)), Substation("b", GeoPoint(49.2, 8.4), "primary")]
    o = origin_of(subs)
    assert o.lat == pytest.approx(49.1) and o.lon == pytest.approx(8.2)


def test_project_identity():
    o = GeoPoint(49.0, 8.4)
    assert project(o, o) == PlanarPoint(0.0, 0.0)


def test_project_north_offset():
    o = GeoPoint(49.0, 8.4)
    q = project(GeoPoint(49.001, 8.4), o)
    assert q.x == 0.0
    assert q.y == pytest.approx(111.1949, abs=1e-3)


def test_project_east_offset_at_equator():
    q = project(GeoPoint(0.0, 10.001), GeoPoint(0.0, 10.0))
    assert q.x == pytest.approx(111.1949, abs=1e-3)


def test_project_outside_district_advises_utm():
    with pytest.raises(ValueError, match="UTM"):
        project(GeoPoint(50.5, 8.4), GeoPoint(49.0, 8.4))


@given(
    lat0=st.floats(-70, 70), lon0=st.floats(-170, 170),
    dlat=st.floats(-0.09, 0.09), dlon=st.floats(-0.09, 0.09),
)
def test_roundtrip_within_a_millimetre(lat0, lon0, dlat, dlon):
    o = GeoPoint(lat0, lon0)
    p = GeoPoint(lat0 + dlat, lon0 + dlon)
    back = unproject(project(p, o), o)
    q1, q2 = project(p, o), project(back, o)
    assert math.hypot(q1.x - q2.x, q1.y - q2.y) < 1e-3
    assert abs(back.lat - p.lat) < 1e-8 and abs(back.lon - p.lon) < 1e-8


def test_parsing_is_deterministic(tmp_path):
    p = _write(tmp_path, "b.json", [_rec(id=f"b{i}", footprint_m2=100 + i) for i in range(5)])
    assert parse_buildings(p) == parse_buildings(p)


def test_building_invariant_direct():
    with pytest.raises(ValueError, match="footprint"):
        Building("x", GeoPoint(0, 0), 0.0)
