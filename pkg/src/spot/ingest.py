"""OSM XML ingest: parse, assemble geometries, filter tags, snapshot I/O.

The pipeline turns an `.osm` export into a portable newline-delimited JSON
snapshot of features carrying only the scene-describing subset of tags.
"""

from __future__ import annotations

import json
import xml.parsers.expat
from dataclasses import dataclass, field, replace
from typing import IO, Iterable, Iterator, Union

from .geo import (
    BBox,
    GeoPoint,
    MAX_SUPPORTED_LAT,
    bbox_of,
    close_ring,
    valid_point,
)


class OsmParseError(ValueError):
    """Malformed OSM XML; carries the byte offset of the failure."""

    def __init__(self, message: str, byte_offset: int):
        super().__init__(f"{message} (byte offset {byte_offset})")
        self.byte_offset = byte_offset


class SnapshotError(ValueError):
    pass


@dataclass
class RawNode:
    id: int
    lat: float
    lon: float
    tags: dict[str, str]


@dataclass
class RawWay:
    id: int
    refs: list[int]
    tags: dict[str, str]


@dataclass
class RawRelation:
    id: int
    members: list[tuple[str, int, str]]  # (type, ref, role)
    tags: dict[str, str]


RawElement = Union[RawNode, RawWay, RawRelation]


@dataclass(frozen=True)
class Geometry:
    type: str  # "Point" | "LineString" | "Polygon"
    coords: tuple[GeoPoint, ...]  # Point: 1 entry; Polygon: closed outer ring


@dataclass(frozen=True)
class Feature:
    """One normalized OSM element; the unit of search."""

    uid: str  # n/w/r prefix + OSM id
    kind: str  # node | way | relation
    tags: dict[str, str]
    geometry: Geometry
    centroid: GeoPoint

    def validate(self) -> list[str]:
        """Return every violated invariant (empty when the feature is sound)."""
        problems = []
        if self.kind not in ("node", "way", "relation"):
            problems.append(f"bad kind {self.kind!r}")
        if not self.uid or self.uid[0] != self.kind[0]:
            problems.append(f"uid {self.uid!r} does not match kind")
        if not self.tags:
            problems.append("tags must be non-empty")
        for p in self.geometry.coords:
            if not valid_point(p):
                problems.append(f"coordinate out of range: {p}")
                break
        if self.geometry.type == "Polygon":
            ring = self.geometry.coords
            if len(ring) < 4 or ring[0] != ring[-1]:
                problems.append("polygon ring must be closed with >= 4 points")
        box = bbox_of(self.geometry.coords)
        if not box.contains(self.centroid):
            problems.append("centroid outside geometry bbox")
        return problems


@dataclass(frozen=True)
class TagWhitelist:
    """Patterns `key` (any value) or `key=value` selecting tags to keep."""

    keys: frozenset[str]
    pairs: frozenset[tuple[str, str]]

    @classmethod
    def from_patterns(cls, patterns: Iterable[str]) -> "TagWhitelist":
        keys = set()
        pairs = set()
        for raw in patterns:
            pat = raw.strip()
            if not pat:
                continue
            if "=" in pat:
                key, _, value = pat.partition("=")
                if not key or not value or "=" in value:
                    raise ValueError(f"bad whitelist pattern: {raw!r}")
                pairs.add((key, value))
            else:
                keys.add(pat)
        if not keys and not pairs:
            raise ValueError("whitelist must be non-empty")
        return cls(keys=frozenset(keys), pairs=frozenset(pairs))

    def matches(self, key: str, value: str) -> bool:
        return key in self.keys or (key, value) in self.pairs


def load_whitelist(path: str) -> TagWhitelist:
    """Read whitelist patterns from a text file ('#' comments allowed)."""
    patterns = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if line:
                patterns.append(line)
    return TagWhitelist.from_patterns(patterns)


@dataclass
class IngestStats:
    elements_read: int = 0
    features_kept: int = 0
    features_dropped: int = 0
    tag_bytes_before: int = 0
    tag_bytes_after: int = 0
    # summed from the stripped tags themselves, so
    # tag_bytes_after + tag_bytes_removed == tag_bytes_before is a real check
    tag_bytes_removed: int = 0

    @property
    def reduction_ratio(self) -> float:
        if self.tag_bytes_before == 0:
            return 0.0
        return 1.0 - self.tag_bytes_after / self.tag_bytes_before

    def to_dict(self) -> dict:
        return {
            "elements_read": self.elements_read,
            "features_kept": self.features_kept,
            "features_dropped": self.features_dropped,
            "tag_bytes_before": self.tag_bytes_before,
            "tag_bytes_after": self.tag_bytes_after,
            "tag_bytes_removed": self.tag_bytes_removed,
            "reduction_ratio": self.reduction_ratio,
        }


def tag_bytes(tags: dict[str, str]) -> int:
    """UTF-8 byte length of the joined `key=value` pairs."""
    return sum(len(f"{k}={v}".encode("utf-8")) for k, v in tags.items())


_TOP_LEVEL = {"node", "way", "relation"}


def parse_osm_xml(stream: IO[bytes]) -> Iterator[RawElement]:
    """Stream raw elements out of OSM XML with bounded memory.

    Unknown top-level tags (bounds, note, ...) are skipped silently.
    Malformed XML raises OsmParseError with the byte offset.
    """
    parser = xml.parsers.expat.ParserCreate()
    out: list[RawElement] = []
    state = {"current": None, "skip_depth": 0, "depth": 0, "element_depth": 0}

    def start(tag, attrs):
        state["depth"] += 1
        if state["skip_depth"]:
            state["skip_depth"] += 1
            return
        cur = state["current"]
        if cur is None:
            if state["depth"] == 1:
                return  # the <osm> root itself
            if tag == "node":
                state["current"] = RawNode(
                    id=int(attrs["id"]), lat=float(attrs["lat"]),
                    lon=float(attrs["lon"]), tags={})
            elif tag == "way":
                state["current"] = RawWay(id=int(attrs["id"]), refs=[], tags={})
            elif tag == "relation":
                state["current"] = RawRelation(id=int(attrs["id"]), members=[], tags={})
            else:
                state["skip_depth"] = 1
                return
            state["element_depth"] = state["depth"]
        elif state["depth"] == state["element_depth"] + 1:
            # only direct children carry data; deeper nesting is ignored
            if tag == "tag":
                cur.tags[attrs.get("k", "")] = attrs.get("v", "")
            elif tag == "nd" and isinstance(cur, RawWay):
                cur.refs.append(int(attrs["ref"]))
            elif tag == "member" and isinstance(cur, RawRelation):
                cur.members.append(
                    (attrs.get("type", ""), int(attrs["ref"]), attrs.get("role", "")))

    def end(tag):
        state["depth"] -= 1
        if state["skip_depth"]:
            state["skip_depth"] -= 1
            return
        if tag in _TOP_LEVEL and state["current"] is not None:
            out.append(state["current"])
            state["current"] = None

    parser.StartElementHandler = start
    parser.EndElementHandler = end

    while True:
        chunk = stream.read(65536)
        try:
            parser.Parse(chunk, not chunk)
        except xml.parsers.expat.ExpatError as exc:
            raise OsmParseError(
                xml.parsers.expat.errors.messages[exc.code],
                parser.ErrorByteIndex) from exc
        except (KeyError, ValueError) as exc:
            raise OsmParseError(
                f"bad element attributes: {exc}", parser.CurrentByteIndex) from exc
        if out:
            yield from out
            out.clear()
        if not chunk:
            break


def _centroid(points: list[GeoPoint]) -> GeoPoint:
    return GeoPoint(sum(p.lat for p in points) / len(points),
                    sum(p.lon for p in points) / len(points))


def _supported_location(points: list[GeoPoint]) -> bool:
    # Antimeridian-spanning and polar geometries are rejected wholesale.
    if any(abs(p.lat) > MAX_SUPPORTED_LAT for p in points):
        return False
    box = bbox_of(points)
    return (box.max_lon - box.min_lon) <= 180.0


def _stitch_outer_ring(ways: list[list[GeoPoint]]) -> list[GeoPoint] | None:
    """Greedy endpoint-matching of outer way fragments into one closed ring."""
    if not ways:
        return None
    ring = list(ways[0])
    rest = [list(w) for w in ways[1:]]
    while rest and ring[0] != ring[-1]:
        for i, frag in enumerate(rest):
            if frag[0] == ring[-1]:
                ring.extend(frag[1:])
            elif frag[-1] == ring[-1]:
                ring.extend(reversed(frag[:-1]))
            else:
                continue
            rest.pop(i)
            break
        else:
            return None
    if ring[0] != ring[-1]:
        ring = close_ring(ring)
    if len(ring) < 4:
        return None
    return ring


def assemble_features(raw_elements: Iterable[RawElement],
                      stats: IngestStats | None = None) -> list[Feature]:
    """Resolve geometry for raw elements; unresolvable ones are dropped and counted.

    Nodes become Points; closed or `area=yes` ways become Polygons; other
    ways become Lines; `type=multipolygon` relations become Polygons from
    their outer members. Centroids are vertex means (closing vertex excluded).
    """
    if stats is None:
        stats = IngestStats()
    node_coords: dict[int, GeoPoint] = {}
    way_coords: dict[int, list[GeoPoint]] = {}
    features: list[Feature] = []

    def emit(uid, kind, tags, geometry, centroid):
        features.append(Feature(uid=uid, kind=kind, tags=tags,
                                geometry=geometry, centroid=centroid))

    def drop():
        stats.features_dropped += 1

    pending_relations: list[RawRelation] = []
    for el in raw_elements:
        stats.elements_read += 1
        if isinstance(el, RawNode):
            p = GeoPoint(el.lat, el.lon)
            node_coords[el.id] = p
            if not valid_point(p) or not _supported_location([p]):
                drop()
                continue
            emit(f"n{el.id}", "node", el.tags, Geometry("Point", (p,)), p)
        elif isinstance(el, RawWay):
            coords = []
            missing = False
            for ref in el.refs:
                if ref not in node_coords:
                    missing = True
                    break
                coords.append(node_coords[ref])
            if missing or len(coords) < 2 or not _supported_location(coords):
                drop()
                continue
            way_coords[el.id] = coords
            closed = el.refs[0] == el.refs[-1]
            if closed or el.tags.get("area") == "yes":
                ring = close_ring(coords)
                if len(ring) < 4:
                    drop()
                    continue
                emit(f"w{el.id}", "way", el.tags,
                     Geometry("Polygon", tuple(ring)), _centroid(ring[:-1]))
            else:
                emit(f"w{el.id}", "way", el.tags,
                     Geometry("LineString", tuple(coords)), _centroid(coords))
        else:
            pending_relations.append(el)

    for rel in pending_relations:
        if rel.tags.get("type") != "multipolygon":
            drop()
            continue
        outer = [way_coords[ref] for mtype, ref, role in rel.members
                 if mtype == "way" and role == "outer" and ref in way_coords]
        ring = _stitch_outer_ring(outer)
        if ring is None or not _supported_location(ring):
            drop()
            continue
        emit(f"r{rel.id}", "relation", rel.tags,
             Geometry("Polygon", tuple(ring)), _centroid(ring[:-1]))
    return features


def filter_tags(feature: Feature, whitelist: TagWhitelist,
                stats: IngestStats | None = None) -> Feature | None:
    """Keep only whitelisted tags; a feature left tagless is dropped (None)."""
    kept = {k: v for k, v in feature.tags.items() if whitelist.matches(k, v)}
    removed = {k: v for k, v in feature.tags.items() if not whitelist.matches(k, v)}
    if stats is not None:
        stats.tag_bytes_before += tag_bytes(feature.tags)
        stats.tag_bytes_after += tag_bytes(kept)
        stats.tag_bytes_removed += tag_bytes(removed)
    if not kept:
        if stats is not None:
            stats.features_dropped += 1
        return None
    if stats is not None:
        stats.features_kept += 1
    return replace(feature, tags=kept)


def ingest_osm(stream: IO[bytes], whitelist: TagWhitelist) -> tuple[list[Feature], IngestStats]:
    """Full pipeline: parse -> assemble -> filter, with stats accounting."""
    stats = IngestStats()
    assembled = assemble_features(parse_osm_xml(stream), stats)
    kept = []
    for feature in assembled:
        filtered = filter_tags(feature, whitelist, stats)
        if filtered is not None:
            kept.append(filtered)
    return kept, stats


SNAPSHOT_VERSION = 1


def _geometry_to_geojson(g: Geometry) -> dict:
    if g.type == "Point":
        p = g.coords[0]
        coords = [p.lon, p.lat]
    elif g.type == "LineString":
        coords = [[p.lon, p.lat] for p in g.coords]
    else:
        coords = [[[p.lon, p.lat] for p in g.coords]]
    return {"type": g.type, "coordinates": coords}


def _geometry_from_geojson(doc: dict) -> Geometry:
    gtype = doc["type"]
    raw = doc["coordinates"]
    if gtype == "Point":
        return Geometry("Point", (GeoPoint(raw[1], raw[0]),))
    if gtype == "LineString":
        return Geometry("LineString", tuple(GeoPoint(lat, lon) for lon, lat in raw))
    if gtype == "Polygon":
        return Geometry("Polygon", tuple(GeoPoint(lat, lon) for lon, lat in raw[0]))
    raise ValueError(f"unsupported geometry type {gtype!r}")


def feature_to_record(f: Feature) -> dict:
    return {
        "uid": f.uid,
        "kind": f.kind,
        "tags": f.tags,
        "centroid": [f.centroid.lon, f.centroid.lat],
        "geometry": _geometry_to_geojson(f.geometry),
    }


def feature_from_record(rec: dict) -> Feature:
    return Feature(
        uid=rec["uid"],
        kind=rec["kind"],
        tags=dict(rec["tags"]),
        geometry=_geometry_from_geojson(rec["geometry"]),
        centroid=GeoPoint(rec["centroid"][1], rec["centroid"][0]),
    )


def write_snapshot(features: list[Feature], fh: IO[str]) -> None:
    vertices = [p for f in features for p in f.geometry.coords]
    if vertices:
        box = bbox_of(vertices)
        bbox = [box.min_lon, box.min_lat, box.max_lon, box.max_lat]
    else:
        bbox = [0.0, 0.0, 0.0, 0.0]
    header = {"snapshot": SNAPSHOT_VERSION, "count": len(features), "bbox": bbox}
    fh.write(json.dumps(header, ensure_ascii=False, separators=(",", ":")) + "\n")
    for f in features:
        fh.write(json.dumps(feature_to_record(f), ensure_ascii=False,
                            separators=(",", ":")) + "\n")


def read_snapshot(fh: IO[str]) -> list[Feature]:
    header_line = fh.readline()
    if not header_line.strip():
        raise SnapshotError("empty snapshot: missing header")
    try:
        header = json.loads(header_line)
    except json.JSONDecodeError as exc:
        raise SnapshotError(f"line 1: malformed header: {exc}") from exc
    if header.get("snapshot") != SNAPSHOT_VERSION:
        raise SnapshotError(
            f"snapshot version mismatch: got {header.get('snapshot')!r}, "
            f"want {SNAPSHOT_VERSION}")
    expected = header.get("count")
    features = []
    for lineno, line in enumerate(fh, start=2):
        if not line.strip():
            continue
        try:
            features.append(feature_from_record(json.loads(line)))
        except (json.JSONDecodeError, KeyError, IndexError, TypeError, ValueError) as exc:
            raise SnapshotError(f"line {lineno}: malformed record: {exc}") from exc
    if expected != len(features):
        raise SnapshotError(
            f"integrity error: header count {expected} != {len(features)} records")
    return features


def save_snapshot(features: list[Feature], path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        write_snapshot(features, fh)


def load_snapshot(path: str) -> list[Feature]:
    with open(path, encoding="utf-8") as fh:
        return read_snapshot(fh)
