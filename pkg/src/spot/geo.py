"""Geodesic primitives, exact spatial index, and named-area resolution.

All coordinates are WGS84 degrees, stored as (lat, lon) internally.
Serialized formats (snapshot, GeoJSON, area files) use [lon, lat] order.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple

# IUGG mean Earth radius. PostGIS geography uses an ellipsoid instead;
# divergence stays below 0.5% which is accepted and documented.
EARTH_RADIUS_M = 6371008.8

# Degrees of latitude per meter along a meridian.
_M_PER_DEG = EARTH_RADIUS_M * math.pi / 180.0

# Polar caps are unsupported; ingest validation rejects features beyond this.
MAX_SUPPORTED_LAT = 85.0


class GeoPoint(NamedTuple):
    lat: float
    lon: float


class BBox(NamedTuple):
    min_lon: float
    min_lat: float
    max_lon: float
    max_lat: float

    def contains(self, p: GeoPoint) -> bool:
        """Inclusive containment test."""
        return (self.min_lon <= p.lon <= self.max_lon
                and self.min_lat <= p.lat <= self.max_lat)

    def degree_area(self) -> float:
        return (self.max_lon - self.min_lon) * (self.max_lat - self.min_lat)


class AreaNotFound(KeyError):
    """No polygon matches the requested area name."""

    def __init__(self, name: str):
        super().__init__(name)
        self.name = name

    def __str__(self) -> str:
        return f"unknown area: {self.name!r}"


def valid_point(p: GeoPoint) -> bool:
    return -90.0 <= p.lat <= 90.0 and -180.0 <= p.lon <= 180.0


def valid_bbox(b: BBox) -> bool:
    return (b.min_lon <= b.max_lon and b.min_lat <= b.max_lat
            and -180.0 <= b.min_lon and b.max_lon <= 180.0
            and -90.0 <= b.min_lat and b.max_lat <= 90.0)


def haversine_m(a: GeoPoint, b: GeoPoint) -> float:
    """Great-circle distance in meters between two points.

    Symmetric, non-negative, zero iff the points coincide.
    """
    phi1 = math.radians(a.lat)
    phi2 = math.radians(b.lat)
    dphi = math.radians(b.lat - a.lat)
    dlam = math.radians(b.lon - a.lon)
    h = (math.sin(dphi / 2.0) ** 2
         + math.cos(phi1) * math.cos(phi2) * math.sin(dlam / 2.0) ** 2)
    return 2.0 * EARTH_RADIUS_M * math.asin(min(1.0, math.sqrt(h)))


def bbox_of(points: Iterable[GeoPoint]) -> BBox:
    lats = []
    lons = []
    for p in points:
        lats.append(p.lat)
        lons.append(p.lon)
    if not lats:
        return BBox(0.0, 0.0, 0.0, 0.0)
    return BBox(min(lons), min(lats), max(lons), max(lats))


def point_in_polygon(p: GeoPoint, ring: list[GeoPoint]) -> bool:
    """Even-odd ray casting in the lon/lat plane; boundary counts as inside.

    `ring` must be closed (first == last).
    """
    n = len(ring) - 1
    if n < 3:
        return False
    inside = False
    for i in range(n):
        a = ring[i]
        b = ring[i + 1]
        if _on_segment(p, a, b):
            return True
        # Cast a ray eastward (+lon) and count crossings.
        if (a.lat > p.lat) != (b.lat > p.lat):
            lon_cross = a.lon + (p.lat - a.lat) * (b.lon - a.lon) / (b.lat - a.lat)
            if p.lon < lon_cross:
                inside = not inside
    return inside


def _on_segment(p: GeoPoint, a: GeoPoint, b: GeoPoint, eps: float = 1e-12) -> bool:
    cross = (p.lon - a.lon) * (b.lat - a.lat) - (p.lat - a.lat) * (b.lon - a.lon)
    if abs(cross) > eps:
        return False
    dot = (p.lon - a.lon) * (p.lon - b.lon) + (p.lat - a.lat) * (p.lat - b.lat)
    return dot <= eps


@dataclass(frozen=True)
class AreaGeometry:
    """A named search area: closed polygon ring plus derived bbox."""

    name: str
    polygon: tuple[GeoPoint, ...]
    bbox: BBox = field(init=False)

    def __post_init__(self):
        ring = list(self.polygon)
        if len(ring) < 4 or ring[0] != ring[-1]:
            raise ValueError(f"area {self.name!r}: ring must be closed with >= 4 points")
        object.__setattr__(self, "bbox", bbox_of(ring))

    def contains(self, p: GeoPoint) -> bool:
        return self.bbox.contains(p) and point_in_polygon(p, list(self.polygon))


def close_ring(points: list[GeoPoint]) -> list[GeoPoint]:
    if points and points[0] != points[-1]:
        return points + [points[0]]
    return points


class SpatialIndex:
    """Uniform lat/lon grid over point locations.

    The grid only prunes candidates; every query refines with haversine or
    exact bounds comparison, so results are exact and independent of
    insertion order.
    """

    def __init__(self, items: Iterable[tuple[str, GeoPoint]]):
        self._points: dict[str, GeoPoint] = dict(items)
        self._cells: dict[tuple[int, int], list[str]] = {}
        pts = self._points.values()
        self._extent = bbox_of(pts)
        n = max(1, len(self._points))
        span = max(self._extent.max_lat - self._extent.min_lat,
                   self._extent.max_lon - self._extent.min_lon)
        # Aim for roughly sqrt(n) cells per axis over the data extent.
        self._cell_deg = max(span / max(1.0, math.isqrt(n)), 1e-7)
        for uid, p in self._points.items():
            self._cells.setdefault(self._cell(p), []).append(uid)

    def __len__(self) -> int:
        return len(self._points)

    def _cell(self, p: GeoPoint) -> tuple[int, int]:
        return (int(math.floor(p.lat / self._cell_deg)),
                int(math.floor(p.lon / self._cell_deg)))

    def _scan_cells(self, lat_lo, lat_hi, lon_lo, lon_hi) -> Iterable[str]:
        ci_lo = int(math.floor(lat_lo / self._cell_deg))
        ci_hi = int(math.floor(lat_hi / self._cell_deg))
        cj_lo = int(math.floor(lon_lo / self._cell_deg))
        cj_hi = int(math.floor(lon_hi / self._cell_deg))
        # Guard against degenerate radii blowing up the cell range.
        if (ci_hi - ci_lo + 1) * (cj_hi - cj_lo + 1) > 4 * len(self._points) + 64:
            yield from self._points.keys()
            return
        for ci in range(ci_lo, ci_hi + 1):
            for cj in range(cj_lo, cj_hi + 1):
                yield from self._cells.get((ci, cj), ())

    def radius(self, center: GeoPoint, r_m: float) -> set[str]:
        """Exactly {uid : haversine_m(point(uid), center) <= r_m}."""
        if r_m < 0:
            return set()
        rho = r_m / EARTH_RADIUS_M  # angular radius
        dlat = math.degrees(rho) + 1e-9
        lat_lo = center.lat - dlat
        lat_hi = center.lat + dlat
        max_abs_lat = max(abs(lat_lo), abs(lat_hi))
        if max_abs_lat >= 89.999999 or rho >= math.pi / 2:
            dlon = 180.0
        else:
            # Exact max longitude deviation of a spherical circle.
            s = min(1.0, math.sin(rho) / math.cos(math.radians(center.lat)))
            dlon = math.degrees(math.asin(s)) + 1e-9
        out = set()
        for uid in self._scan_cells(lat_lo, lat_hi, center.lon - dlon, center.lon + dlon):
            if haversine_m(self._points[uid], center) <= r_m:
                out.add(uid)
        return out

    def bbox(self, box: BBox) -> set[str]:
        """Exactly {uid : point(uid) inside box, inclusive bounds}."""
        out = set()
        for uid in self._scan_cells(box.min_lat, box.max_lat, box.min_lon, box.max_lon):
            if box.contains(self._points[uid]):
                out.add(uid)
        return out


def load_area_file(path: str) -> list[AreaGeometry]:
    """Read a JSON-lines area file: {"name": ..., "polygon": [[lon,lat], ...]}."""
    areas = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
                name = rec["name"]
                ring = close_ring([GeoPoint(lat, lon) for lon, lat in rec["polygon"]])
                areas.append(AreaGeometry(name=name, polygon=tuple(ring)))
            except (KeyError, TypeError, ValueError) as exc:
                raise ValueError(f"{path}:{lineno}: bad area record: {exc}") from exc
    return areas


def _polygon_features_with_names(features) -> Iterable[tuple[str, AreaGeometry]]:
    for f in features:
        if f.geometry.type != "Polygon":
            continue
        name = f.tags.get("name")
        if not name:
            continue
        if f.tags.get("boundary") != "administrative" and "place" not in f.tags:
            continue
        try:
            yield name, AreaGeometry(name=name, polygon=f.geometry.coords)
        except ValueError:
            continue


def resolve_area(name: str, features=(), area_file_areas: Iterable[AreaGeometry] = ()) -> AreaGeometry:
    """Case-insensitive area lookup; user-supplied areas win over the snapshot.

    Among several snapshot polygons with the same name, the one with the
    largest bbox area is chosen.
    """
    if not name:
        raise AreaNotFound(name)
    wanted = name.casefold()
    for area in area_file_areas:
        if area.name.casefold() == wanted:
            return area
    best: AreaGeometry | None = None
    for fname, area in _polygon_features_with_names(features):
        if fname.casefold() != wanted:
            continue
        if best is None or area.bbox.degree_area() > best.bbox.degree_area():
            best = area
    if best is None:
        raise AreaNotFound(name)
    return best


def list_area_names(features=(), area_file_areas: Iterable[AreaGeometry] = ()) -> list[str]:
    """All resolvable area names, deduplicated case-insensitively, sorted."""
    seen: dict[str, str] = {}
    for area in area_file_areas:
        seen.setdefault(area.name.casefold(), area.name)
    for fname, _ in _polygon_features_with_names(features):
        seen.setdefault(fname.casefold(), fname)
    return sorted(seen.values(), key=str.casefold)
