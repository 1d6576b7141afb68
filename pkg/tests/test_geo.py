import math

import pytest
from hypothesis import given, strategies as st

from fogrune.geo import (
    GLOBAL,
    Circle,
    GeoError,
    GeohashPrefix,
    GeoPoint,
    common_prefix_len,
    geohash_bbox,
    geohash_center,
    geohash_encode,
    haversine_m,
    is_geohash,
    scope_contains,
    scope_from_json,
    scope_to_json,
)
from oracles import ref_bbox, ref_geohash, ref_haversine

lats = st.floats(-90, 90, allow_nan=False)
lons = st.floats(-180, 180, allow_nan=False)
points = st.builds(GeoPoint, lats, lons)


def test_origin_precision_one_is_s():
    assert geohash_encode(GeoPoint(0, 0), 1) == "s"
    assert ref_geohash(0.0, 0.0, 1) == "s"


def test_well_known_vector():
    assert geohash_encode(GeoPoint(57.64911, 10.40744), 11) == "u4pruydqqvj"


@pytest.mark.parametrize("precision", [0, 13, -1])
def test_precision_out_of_range(precision):
    with pytest.raises(GeoError):
        geohash_encode(GeoPoint(1, 1), precision)


@pytest.mark.parametrize("lat,lon", [(91, 0), (0, 181), (float("nan"), 0)])
def test_invalid_points_rejected(lat, lon):
    with pytest.raises(GeoError):
        GeoPoint(lat, lon)


@given(points, st.integers(1, 11))
def test_refinement(p, k):
    assert geohash_encode(p, 12).startswith(geohash_encode(p, k))
    assert geohash_encode(p, k + 1)[:k] == geohash_encode(p, k)


@given(points)
def test_center_of_precision_nine_within_ten_metres(p):
    c = geohash_center(geohash_encode(p, 9))
    assert ref_haversine(c.lat, c.lon, p.lat, p.lon) <= 10.0


@given(points, st.integers(1, 12))
def test_bbox_matches_reference_and_contains_point(p, k):
    cell = geohash_encode(p, k)
    lo, hi, wlo, whi = geohash_bbox(cell)
    assert (lo, hi, wlo, whi) == pytest.approx(ref_bbox(cell), abs=1e-12)
    assert lo <= p.lat <= hi and wlo <= p.lon <= whi


def test_circle_contains_its_center():
    c = GeoPoint(48.1, 11.5)
    assert scope_contains(Circle(c, 100.0), c)


def test_prefix_scope_near_origin():
    assert ref_geohash(0.1, 0.1, 1) == "s"
    assert scope_contains(GeohashPrefix("s"), GeoPoint(0.1, 0.1))


def test_locationless_only_global():
    assert scope_contains(GLOBAL, None)
    assert not scope_contains(GeohashPrefix("s"), None)
    assert not scope_contains(Circle(GeoPoint(0, 0), 1e7), None)


@given(points, points, st.floats(1.0, 2e7))
def test_circle_agrees_with_haversine_oracle(c, p, r):
    assert scope_contains(Circle(c, r), p) == (ref_haversine(c.lat, c.lon, p.lat, p.lon) <= r)


@given(points, st.text(alphabet="0123456789bcdefghjkmnpqrstuvwxyz", min_size=1, max_size=6))
def test_prefix_agrees_with_reference(p, prefix):
    expect = ref_geohash(p.lat, p.lon, len(prefix)) == prefix
    assert scope_contains(GeohashPrefix(prefix), p) == expect


def test_haversine_quarter_meridian():
    d = haversine_m(GeoPoint(0, 0), GeoPoint(90, 0))
    assert d == pytest.approx(math.pi / 2 * 6_371_000.0)


@pytest.mark.parametrize("bad", ["", "a", "ilo", "x" * 13, "U4"])
def test_invalid_prefix_rejected(bad):
    assert not is_geohash(bad)
    with pytest.raises(GeoError):
        GeohashPrefix(bad)


def test_circle_needs_positive_radius():
    with pytest.raises(GeoError):
        Circle(GeoPoint(0, 0), 0)


@pytest.mark.parametrize("scope", [GLOBAL, Circle(GeoPoint(1, 2), 30.0), GeohashPrefix("u0y")])
def test_scope_json_roundtrip(scope):
    assert scope_from_json(scope_to_json(scope)) == scope


def test_common_prefix_len():
    assert common_prefix_len("u0yj0", "u0yj1") == 4
    assert common_prefix_len("", "abc") == 0
