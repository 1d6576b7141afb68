"""Geographic primitives: points, geohash cells and geoscopes."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

BASE32 = "0123456789bcdefghjkmnpqrstuvwxyz"
_DECODE = {c: i for i, c in enumerate(BASE32)}
EARTH_RADIUS_M = 6_371_000.0
MAX_PRECISION = 12


class GeoError(ValueError):
    pass


@dataclass(frozen=True)
class GeoPoint:
    lat: float
    lon: float

    def __post_init__(self) -> None:
        lat, lon = float(self.lat), float(self.lon)
        if math.isnan(lat) or math.isnan(lon):
            raise GeoError("NaN coordinate")
        if not -90.0 <= lat <= 90.0:
            raise GeoError(f"latitude out of range: {lat}")
        if not -180.0 <= lon <= 180.0:
            raise GeoError(f"longitude out of range: {lon}")
        object.__setattr__(self, "lat", lat)
        object.__setattr__(self, "lon", lon)


def haversine_m(a: GeoPoint, b: GeoPoint) -> float:
    """Great-circle distance in meters."""
    p1, p2 = math.radians(a.lat), math.radians(b.lat)
    dp = p2 - p1
    dl = math.radians(b.lon - a.lon)
    h = math.sin(dp / 2) ** 2 + math.cos(p1) * math.cos(p2) * math.sin(dl / 2) ** 2
    return 2 * EARTH_RADIUS_M * math.asin(min(1.0, math.sqrt(h)))


def geohash_encode(p: GeoPoint, precision: int) -> str:
    if not 1 <= precision <= MAX_PRECISION:
        raise GeoError(f"precision must be in 1..{MAX_PRECISION}, got {precision}")
    lat_lo, lat_hi = -90.0, 90.0
    lon_lo, lon_hi = -180.0, 180.0
    out = []
    even = True
    ch = 0
    bit = 0
    while len(out) < precision:
        if even:
            mid = (lon_lo + lon_hi) / 2
            if p.lon >= mid:
                ch = (ch << 1) | 1
                lon_lo = mid
            else:
                ch <<= 1
                lon_hi = mid
        else:
            mid = (lat_lo + lat_hi) / 2
            if p.lat >= mid:
                ch = (ch << 1) | 1
                lat_lo = mid
            else:
                ch <<= 1
                lat_hi = mid
        even = not even
        bit += 1
        if bit == 5:
            out.append(BASE32[ch])
            ch = 0
            bit = 0
    return "".join(out)


def is_geohash(s: str) -> bool:
    return 1 <= len(s) <= MAX_PRECISION and all(c in _DECODE for c in s)


@lru_cache(maxsize=65536)
def geohash_bbox(cell: str) -> tuple[float, float, float, float]:
    """Return (lat_lo, lat_hi, lon_lo, lon_hi) of a geohash cell."""
    if not is_geohash(cell):
        raise GeoError(f"invalid geohash: {cell!r}")
    lat_lo, lat_hi = -90.0, 90.0
    lon_lo, lon_hi = -180.0, 180.0
    even = True
    for c in cell:
        v = _DECODE[c]
        for shift in range(4, -1, -1):
            b = (v >> shift) & 1
            if even:
                mid = (lon_lo + lon_hi) / 2
                if b:
                    lon_lo = mid
                else:
                    lon_hi = mid
            else:
                mid = (lat_lo + lat_hi) / 2
                if b:
                    lat_lo = mid
                else:
                    lat_hi = mid
            even = not even
    return lat_lo, lat_hi, lon_lo, lon_hi


@lru_cache(maxsize=65536)
def geohash_center(cell: str) -> GeoPoint:
    lat_lo, lat_hi, lon_lo, lon_hi = geohash_bbox(cell)
    return GeoPoint((lat_lo + lat_hi) / 2, (lon_lo + lon_hi) / 2)


def common_prefix_len(a: str, b: str) -> int:
    n = 0
    for x, y in zip(a, b):
        if x != y:
            break
        n += 1
    return n


# -- scopes ---------------------------------------------------------------


@dataclass(frozen=True)
class Global:
    pass


@dataclass(frozen=True)
class Circle:
    center: GeoPoint
    radius_m: float

    def __post_init__(self) -> None:
        if not self.radius_m > 0:
            raise GeoError("circle radius must be > 0")


@dataclass(frozen=True)
class GeohashPrefix:
    prefix: str

    def __post_init__(self) -> None:
        if not is_geohash(self.prefix):
            raise GeoError(f"invalid geohash prefix: {self.prefix!r}")


GeoScope = Global | Circle | GeohashPrefix
GLOBAL = Global()


def scope_contains(scope: GeoScope, p: GeoPoint | None) -> bool:
    """Locationless points only fall inside the global scope."""
    if isinstance(scope, Global):
        return True
    if p is None:
        return False
    if isinstance(scope, Circle):
        return haversine_m(scope.center, p) <= scope.radius_m
    return geohash_encode(p, len(scope.prefix)) == scope.prefix


def scope_to_json(scope: GeoScope) -> object:
    if isinstance(scope, Global):
        return "global"
    if isinstance(scope, Circle):
        return {"circle": {"lat": scope.center.lat, "lon": scope.center.lon,
                           "radius_m": scope.radius_m}}
    return {"geohash_prefix": scope.prefix}


def scope_from_json(obj: object) -> GeoScope:
    if obj is None or obj == "global":
        return GLOBAL
    if isinstance(obj, dict) and len(obj) == 1:
        if "circle" in obj:
            c = obj["circle"]
            return Circle(GeoPoint(c["lat"], c["lon"]), float(c["radius_m"]))
        if "geohash_prefix" in obj:
            return GeohashPrefix(str(obj["geohash_prefix"]))
    raise GeoError(f"unrecognised geoscope: {obj!r}")
