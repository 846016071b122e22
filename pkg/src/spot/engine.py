"""Search execution: compile an IMR query and run it against a snapshot.

A Spot is one injective assignment of distinct features to query nodes
satisfying every predicate, every distance edge, and the area. The
brute-force enumerator in this module is the reference semantics for the
planned executor.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from typing import Iterable, Literal, Union

from .geo import BBox, AreaGeometry, GeoPoint, SpatialIndex, haversine_m
from .imr import ImrNode, ImrQuery, TagPredicate, canonicalize
from .ingest import Feature, _geometry_to_geojson

AreaSpec = Union[AreaGeometry, BBox]


class AreaRequired(ValueError):
    """Query area is bbox-kind but no bbox was supplied."""


class GuardViolation(ValueError):
    """brute_force input exceeds its size guard."""


class DanglingUid(KeyError):
    """A match references a feature missing from the snapshot."""


class FeatureStore:
    """Immutable in-memory snapshot with tag and spatial indexes."""

    def __init__(self, features: Iterable[Feature]):
        self.features: list[Feature] = list(features)
        self.by_uid: dict[str, Feature] = {f.uid: f for f in self.features}
        self.tag_index: dict[str, set[str]] = {}
        self.key_index: dict[str, set[str]] = {}
        for f in self.features:
            for k, v in f.tags.items():
                self.tag_index.setdefault(f"{k}={v}", set()).add(f.uid)
                self.key_index.setdefault(k, set()).add(f.uid)
        self.spatial = SpatialIndex((f.uid, f.centroid) for f in self.features)

    def __len__(self) -> int:
        return len(self.features)

    def predicate_uids(self, pred: TagPredicate) -> set[str]:
        if pred.op == "eq":
            return self.tag_index.get(f"{pred.key}={pred.value}", set())
        if pred.op == "one_of":
            out: set[str] = set()
            for v in pred.value:
                out |= self.tag_index.get(f"{pred.key}={v}", set())
            return out
        return self.key_index.get(pred.key, set())

    def node_uids(self, node: ImrNode) -> set[str]:
        sets = sorted((self.predicate_uids(f) for f in node.filters), key=len)
        out = set(sets[0])
        for s in sets[1:]:
            out &= s
        return out

    def node_count(self, node: ImrNode) -> int:
        """Selectivity estimate: the smallest per-predicate candidate count."""
        return min(len(self.predicate_uids(f)) for f in node.filters)


def predicate_matches(pred: TagPredicate, tags: dict[str, str]) -> bool:
    if pred.op == "eq":
        return tags.get(pred.key) == pred.value
    if pred.op == "one_of":
        return tags.get(pred.key) in pred.value
    return pred.key in tags


def node_matches(node: ImrNode, tags: dict[str, str]) -> bool:
    return all(predicate_matches(f, tags) for f in node.filters)


def area_contains(area: AreaSpec, p: GeoPoint) -> bool:
    return area.contains(p)


@dataclass
class SearchParams:
    limit: int = 100
    bbox: BBox | None = None
    examined_pairs: int = 0  # observability counter, reset per execute call

    MAX_LIMIT = 1000

    def __post_init__(self):
        if not 1 <= self.limit <= self.MAX_LIMIT:
            raise ValueError(f"limit must be in [1, {self.MAX_LIMIT}]")


@dataclass(frozen=True)
class CandidateSource:
    kind: Literal["index", "radius"]
    anchor: int | None = None
    radius_m: float | None = None


@dataclass(frozen=True)
class SearchPlan:
    node_order: tuple[int, ...]
    sources: dict[int, CandidateSource]
    # edges to verify when the keyed node gets assigned (anchor edge excluded)
    deferred_edges: dict[int, tuple[tuple[int, float], ...]]


@dataclass(frozen=True)
class SpotMatch:
    assignment: tuple[tuple[int, str], ...]  # (node id, feature uid), id order
    span_m: float

    @property
    def assignment_map(self) -> dict[int, str]:
        return dict(self.assignment)

    def uids(self) -> tuple[str, ...]:
        return tuple(uid for _, uid in self.assignment)


def plan(q: ImrQuery, store: FeatureStore) -> SearchPlan:
    """Order nodes most-selective-first, preferring edge connectivity.

    The first node is the one with the smallest candidate count (ties:
    lowest id). Each next node is edge-connected to the ordered prefix when
    any is (picked by smallest count, tie lowest id; probing the tightest
    connecting edge, tie lowest anchor id), else the next smallest.
    """
    counts = {n.id: store.node_count(n) for n in q.nodes}
    edges_at: dict[int, list[tuple[int, float]]] = {n.id: [] for n in q.nodes}
    for e in q.edges:
        edges_at[e.src].append((e.dst, e.max_distance_m))
        edges_at[e.dst].append((e.src, e.max_distance_m))

    remaining = {n.id for n in q.nodes}
    order: list[int] = []
    sources: dict[int, CandidateSource] = {}
    deferred: dict[int, tuple[tuple[int, float], ...]] = {}

    first = min(remaining, key=lambda nid: (counts[nid], nid))
    order.append(first)
    remaining.remove(first)
    sources[first] = CandidateSource(kind="index")
    deferred[first] = ()

    while remaining:
        placed = set(order)
        connected = [nid for nid in remaining
                     if any(other in placed for other, _ in edges_at[nid])]
        if connected:
            nid = min(connected, key=lambda n: (counts[n], n))
            anchor, radius = min(
                ((other, d) for other, d in edges_at[nid] if other in placed),
                key=lambda item: (item[1], item[0]))
            sources[nid] = CandidateSource(kind="radius", anchor=anchor, radius_m=radius)
            deferred[nid] = tuple(
                (other, d) for other, d in sorted(edges_at[nid])
                if other in placed and other != anchor)
        else:
            nid = min(remaining, key=lambda n: (counts[n], n))
            sources[nid] = CandidateSource(kind="index")
            deferred[nid] = ()
        order.append(nid)
        remaining.remove(nid)
    return SearchPlan(node_order=tuple(order), sources=sources, deferred_edges=deferred)


def _resolve_area(q: ImrQuery, params: SearchParams, area: AreaGeometry | None) -> AreaSpec:
    if q.area.kind == "named":
        if area is None:
            raise ValueError("named-area query needs a resolved AreaGeometry")
        return area
    if params.bbox is None:
        raise AreaRequired("query area is bbox-kind but no bbox was supplied")
    return params.bbox


def _span_m(features: list[Feature]) -> float:
    span = 0.0
    for a, b in itertools.combinations(features, 2):
        span = max(span, haversine_m(a.centroid, b.centroid))
    return span


def _finalize(assignments: Iterable[dict[int, str]], q: ImrQuery,
              store: FeatureStore, limit: int) -> list[SpotMatch]:
    """Shared dedup + ordering: spots with the same (node signature, feature)
    multiset coincide; survivors sort by (span_m, uid tuple)."""
    signatures = {n.id: n.signature() for n in q.nodes}
    node_ids = sorted(signatures)
    best: dict[tuple, tuple] = {}
    for assignment in assignments:
        uid_tuple = tuple(assignment[nid] for nid in node_ids)
        members = [store.by_uid[uid] for uid in uid_tuple]
        span = _span_m(members)
        dedup_key = tuple(sorted((signatures[nid], uid)
                                 for nid, uid in assignment.items()))
        sort_key = (span, uid_tuple)
        if dedup_key not in best or sort_key < best[dedup_key][0]:
            best[dedup_key] = (sort_key, assignment)
    ranked = sorted(best.values(), key=lambda item: item[0])
    out = []
    for (span, _), assignment in ranked[:limit]:
        out.append(SpotMatch(
            assignment=tuple(sorted(assignment.items())), span_m=span))
    return out


def execute(search_plan: SearchPlan, q: ImrQuery, store: FeatureStore,
            params: SearchParams, area: AreaGeometry | None = None) -> list[SpotMatch]:
    """Depth-first backtracking join in plan order."""
    effective_area = _resolve_area(q, params, area)
    params.examined_pairs = 0
    node_by_id = {n.id: n for n in q.nodes}

    index_candidates: dict[int, list[str]] = {}

    def candidates_via_index(nid: int) -> list[str]:
        if nid not in index_candidates:
            node = node_by_id[nid]
            uids = [uid for uid in store.node_uids(node)
                    if area_contains(effective_area, store.by_uid[uid].centroid)]
            index_candidates[nid] = sorted(uids)
        return index_candidates[nid]

    order = search_plan.node_order
    assignment: dict[int, str] = {}
    used: set[str] = set()
    found: list[dict[int, str]] = []

    def attempt(pos: int, nid: int, uid: str):
        feature = store.by_uid[uid]
        for other, max_d in search_plan.deferred_edges[nid]:
            params.examined_pairs += 1
            if haversine_m(feature.centroid, store.by_uid[assignment[other]].centroid) > max_d:
                return
        assignment[nid] = uid
        used.add(uid)
        descend(pos + 1)
        used.remove(uid)
        del assignment[nid]

    def descend(pos: int):
        if pos == len(order):
            found.append(dict(assignment))
            return
        nid = order[pos]
        source = search_plan.sources[nid]
        node = node_by_id[nid]
        if source.kind == "index":
            for uid in candidates_via_index(nid):
                if uid not in used:
                    attempt(pos, nid, uid)
        else:
            anchor_uid = assignment[source.anchor]
            probe = store.spatial.radius(store.by_uid[anchor_uid].centroid,
                                         source.radius_m)
            params.examined_pairs += len(probe)
            for uid in sorted(probe):
                if uid in used:
                    continue
                feature = store.by_uid[uid]
                if not node_matches(node, feature.tags):
                    continue
                if not area_contains(effective_area, feature.centroid):
                    continue
                attempt(pos, nid, uid)

    descend(0)
    return _finalize(found, q, store, params.limit)


BRUTE_FORCE_MAX_NODES = 4
BRUTE_FORCE_MAX_FEATURES = 500


def brute_force(q: ImrQuery, store: FeatureStore, params: SearchParams,
                area: AreaGeometry | None = None) -> list[SpotMatch]:
    """Reference semantics: enumerate every injective feature tuple.

    Guarded to small inputs; the planned executor must match this exactly.
    """
    if len(q.nodes) > BRUTE_FORCE_MAX_NODES:
        raise GuardViolation(f"brute_force limited to {BRUTE_FORCE_MAX_NODES} nodes")
    if len(store) > BRUTE_FORCE_MAX_FEATURES:
        raise GuardViolation(f"brute_force limited to {BRUTE_FORCE_MAX_FEATURES} features")
    effective_area = _resolve_area(q, params, area)

    node_ids = [n.id for n in q.nodes]
    per_node = []
    for node in q.nodes:
        per_node.append([
            f.uid for f in store.features
            if node_matches(node, f.tags)
            and area_contains(effective_area, f.centroid)])

    found: list[dict[int, str]] = []
    for combo in itertools.product(*per_node):
        if len(set(combo)) != len(combo):
            continue
        assignment = dict(zip(node_ids, combo))
        ok = True
        for e in q.edges:
            a = store.by_uid[assignment[e.src]].centroid
            b = store.by_uid[assignment[e.dst]].centroid
            if haversine_m(a, b) > e.max_distance_m:
                ok = False
                break
        if ok:
            found.append(assignment)
    return _finalize(found, q, store, params.limit)


def _sql_quote(text: str) -> str:
    return text.replace("'", "''")


def _sql_number(x: float) -> str:
    return str(int(x)) if float(x).is_integer() else repr(float(x))


def emit_sql(q: ImrQuery) -> str:
    """Deterministic PostGIS-dialect SQL text for a query (never executed here).

    Targets the schema features(id BIGINT, tags JSONB, geom GEOMETRY) with
    one alias per node in canonical order.
    """
    qc = canonicalize(q)
    aliases = {n.id: f"n{n.id}" for n in qc.nodes}
    select = ", ".join(f"{aliases[n.id]}.id AS {aliases[n.id]}_id" for n in qc.nodes)
    source = ", ".join(f"features AS {aliases[n.id]}" for n in qc.nodes)
    conds: list[str] = []
    for n in qc.nodes:
        a = aliases[n.id]
        for f in n.filters:
            if f.op == "eq":
                conds.append(f"{a}.tags->>'{_sql_quote(f.key)}' = '{_sql_quote(f.value)}'")
            elif f.op == "one_of":
                values = ", ".join(f"'{_sql_quote(v)}'" for v in sorted(f.value))
                conds.append(f"{a}.tags->>'{_sql_quote(f.key)}' IN ({values})")
            else:
                conds.append(f"{a}.tags ? '{_sql_quote(f.key)}'")
    for e in qc.edges:
        conds.append(
            f"ST_DWithin({aliases[e.src]}.geom::geography, "
            f"{aliases[e.dst]}.geom::geography, {_sql_number(e.max_distance_m)})")
    for i, j in itertools.combinations([n.id for n in qc.nodes], 2):
        conds.append(f"{aliases[i]}.id <> {aliases[j]}.id")
    if qc.area.kind == "named":
        for n in qc.nodes:
            conds.append(
                f"ST_Within({aliases[n.id]}.geom, "
                f"(SELECT geom FROM areas WHERE name = '{_sql_quote(qc.area.value)}'))")
    else:
        for n in qc.nodes:
            conds.append(
                f"ST_Within({aliases[n.id]}.geom, ST_MakeEnvelope($1,$2,$3,$4,4326))")
    return f"SELECT {select} FROM {source} WHERE {' AND '.join(conds)};"


def spots_to_feature_collection(matches: list[SpotMatch], store: FeatureStore,
                                q: ImrQuery) -> dict:
    """GeoJSON FeatureCollection: every member feature plus one center per spot."""
    names = {n.id: n.name for n in q.nodes}
    features = []
    for spot_index, match in enumerate(matches):
        lats, lons = [], []
        for nid, uid in match.assignment:
            f = store.by_uid.get(uid)
            if f is None:
                raise DanglingUid(uid)
            lats.append(f.centroid.lat)
            lons.append(f.centroid.lon)
            features.append({
                "type": "Feature",
                "id": uid,
                "geometry": _geometry_to_geojson(f.geometry),
                "properties": {
                    "spot_index": spot_index,
                    "node_id": nid,
                    "node_name": names.get(nid, ""),
                    "tags": f.tags,
                },
            })
        features.append({
            "type": "Feature",
            "geometry": {
                "type": "Point",
                "coordinates": [sum(lons) / len(lons), sum(lats) / len(lats)],
            },
            "properties": {
                "spot_index": spot_index,
                "span_m": match.span_m,
                "role": "spot_center",
            },
        })
    return {"type": "FeatureCollection", "features": features}


def spots_to_geojson(matches: list[SpotMatch], store: FeatureStore, q: ImrQuery) -> str:
    return json.dumps(spots_to_feature_collection(matches, store, q),
                      ensure_ascii=False, separators=(",", ":"))


def run_search(store: FeatureStore, q: ImrQuery, params: SearchParams,
               area: AreaGeometry | None = None) -> tuple[ImrQuery, list[SpotMatch], dict]:
    """Canonicalize, plan, execute; returns (canonical query, spots, stats)."""
    qc = canonicalize(q)
    search_plan = plan(qc, store)
    matches = execute(search_plan, qc, store, params, area=area)
    stats = {
        "candidates": {str(n.id): store.node_count(n) for n in qc.nodes},
        "examinedPairs": params.examined_pairs,
    }
    return qc, matches, stats
