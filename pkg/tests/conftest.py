"""Shared fixtures: the five-feature toy snapshot used across engine,
server, and CLI tests, plus common query builders."""

from __future__ import annotations

import pytest

from spot.engine import FeatureStore
from spot.geo import BBox, GeoPoint
from spot.imr import ImrArea, ImrEdge, ImrNode, ImrQuery, TagPredicate
from spot.ingest import Feature, Geometry


def point_feature(uid: str, tags: dict[str, str], lat: float, lon: float) -> Feature:
    p = GeoPoint(lat, lon)
    return Feature(uid=uid, kind="node", tags=tags,
                   geometry=Geometry("Point", (p,)), centroid=p)


def square_polygon(uid: str, kind: str, tags: dict[str, str], center_lat: float,
                   center_lon: float, half_deg: float = 0.0002) -> Feature:
    corners = (
        GeoPoint(center_lat - half_deg, center_lon - half_deg),
        GeoPoint(center_lat - half_deg, center_lon + half_deg),
        GeoPoint(center_lat + half_deg, center_lon + half_deg),
        GeoPoint(center_lat + half_deg, center_lon - half_deg),
    )
    ring = corners + (corners[0],)
    return Feature(uid=uid, kind=kind, tags=tags,
                   geometry=Geometry("Polygon", ring),
                   centroid=GeoPoint(center_lat, center_lon))


def make_toy_features() -> list[Feature]:
    """F1 restaurant, F2 fountain, F3 far restaurant, F4 tree, F5 park polygon."""
    return [
        point_feature("n1", {"amenity": "restaurant"}, 50.7370, 7.0980),
        point_feature("n2", {"amenity": "fountain"}, 50.7372, 7.0984),
        point_feature("n3", {"amenity": "restaurant"}, 50.7450, 7.1100),
        point_feature("n4", {"natural": "tree"}, 50.7371, 7.0982),
        square_polygon("w5", "way", {"leisure": "park"}, 50.7380, 7.0990),
    ]


@pytest.fixture
def toy_features() -> list[Feature]:
    return make_toy_features()


@pytest.fixture
def toy_store(toy_features) -> FeatureStore:
    return FeatureStore(toy_features)


TOY_BBOX = BBox(7.05, 50.70, 7.15, 50.78)


def eq(key: str, value: str) -> TagPredicate:
    return TagPredicate(key=key, op="eq", value=value)


def node(node_id: int, name: str, *filters: TagPredicate) -> ImrNode:
    return ImrNode(id=node_id, name=name, filters=tuple(filters))


def two_node_query(d_m: float, area: ImrArea | None = None,
                   first=("amenity", "restaurant"),
                   second=("amenity", "fountain")) -> ImrQuery:
    return ImrQuery(
        area=area or ImrArea(kind="bbox"),
        nodes=(node(0, first[1], eq(*first)), node(1, second[1], eq(*second))),
        edges=(ImrEdge(src=0, dst=1, max_distance_m=d_m),),
    )


def one_node_query(key: str, value: str, area: ImrArea | None = None) -> ImrQuery:
    return ImrQuery(area=area or ImrArea(kind="bbox"),
                    nodes=(node(0, value, eq(key, value)),), edges=())
