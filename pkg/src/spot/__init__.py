"""Spot: natural-language search for combinations of map objects in
OpenStreetMap extracts."""

from .geo import (AreaGeometry, AreaNotFound, BBox, GeoPoint, SpatialIndex,
                  haversine_m, point_in_polygon, resolve_area)
from .ingest import (Feature, IngestStats, OsmParseError, SnapshotError,
                     TagWhitelist, ingest_osm, load_snapshot, save_snapshot)
from .vocab import TagBundle, Vocabulary, load_bundles, mine_cooccurrence
from .imr import (ImrArea, ImrEdge, ImrNode, ImrQuery, ImrSyntaxError,
                  ImrValidationError, TagPredicate, canonicalize, decode,
                  encode, semantic_score, validate)
from .engine import (AreaRequired, FeatureStore, SearchParams, SpotMatch,
                     brute_force, emit_sql, execute, plan, run_search,
                     spots_to_feature_collection, spots_to_geojson)
from .nlq import (BaselineTranslator, ExternalTranslator, FormatInvalid,
                  MockTranslator, NoObjectsFound, ParserConfig,
                  TranslationError, parse_baseline)
from .datagen import (DatasetRecord, GenConfig, NotRenderable, generate_dataset,
                      render_prompt, render_template_sentence, sample_imr)
from .evaluation import EvalReport, evaluate
from .server import ServiceConfig, create_app, load_config

__version__ = "0.1.0"

__all__ = [
    "AreaGeometry", "AreaNotFound", "BBox", "GeoPoint", "SpatialIndex",
    "haversine_m", "point_in_polygon", "resolve_area",
    "Feature", "IngestStats", "OsmParseError", "SnapshotError", "TagWhitelist",
    "ingest_osm", "load_snapshot", "save_snapshot",
    "TagBundle", "Vocabulary", "load_bundles", "mine_cooccurrence",
    "ImrArea", "ImrEdge", "ImrNode", "ImrQuery", "ImrSyntaxError",
    "ImrValidationError", "TagPredicate", "canonicalize", "decode", "encode",
    "semantic_score", "validate",
    "AreaRequired", "FeatureStore", "SearchParams", "SpotMatch", "brute_force",
    "emit_sql", "execute", "plan", "run_search", "spots_to_feature_collection",
    "spots_to_geojson",
    "BaselineTranslator", "ExternalTranslator", "FormatInvalid", "MockTranslator",
    "NoObjectsFound", "ParserConfig", "TranslationError", "parse_baseline",
    "DatasetRecord", "GenConfig", "NotRenderable", "generate_dataset",
    "render_prompt", "render_template_sentence", "sample_imr",
    "EvalReport", "evaluate",
    "ServiceConfig", "create_app", "load_config",
    "__version__",
]
