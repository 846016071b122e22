"""End-to-end walk: OSM XML extract -> snapshot -> sentence -> spots.

Runs entirely on the data bundled with the package. Usage:

    python3 demos/ingest_and_search.py
"""

from __future__ import annotations

import io
import json
from importlib import resources

from spot.engine import FeatureStore, SearchParams, run_search, spots_to_feature_collection
from spot.geo import BBox
from spot.imr import encode
from spot.ingest import ingest_osm, load_whitelist, read_snapshot, write_snapshot
from spot.nlq import ParserConfig, parse_baseline
from spot.vocab import load_bundles

DATA = resources.files("spot") / "data"
SENTENCE = "Find a restaurant within 500 m of a fountain"


def main() -> None:
    print(f"1. Ingesting the bundled extract ({DATA / 'sample_extract.osm'})")
    whitelist = load_whitelist(str(DATA / "whitelist.txt"))
    with (DATA / "sample_extract.osm").open("rb") as fh:
        features, stats = ingest_osm(fh, whitelist)
    print(f"   kept {stats.features_kept} features, "
          f"dropped {stats.reduction_ratio:.0%} of tag bytes")

    # round-trip through the snapshot format, as `spot ingest` would
    buf = io.StringIO()
    write_snapshot(features, buf)
    buf.seek(0)
    store = FeatureStore(read_snapshot(buf))

    print(f"2. Parsing: {SENTENCE!r}")
    config = ParserConfig(vocabulary=load_bundles(str(DATA / "bundles.jsonl")))
    query = parse_baseline(SENTENCE, config)
    print(f"   IMR: {encode(query)}")

    print("3. Searching the snapshot")
    params = SearchParams(limit=10, bbox=BBox(7.0, 50.6, 7.2, 50.9))
    canonical, spots, search_stats = run_search(store, query, params)
    print(f"   examined {search_stats['examinedPairs']} pairs, "
          f"candidates per node {search_stats['candidates']}")
    for i, spot in enumerate(spots, 1):
        uids = ",".join(spot.uids())
        print(f"   spot {i}: {uids} (span {spot.span_m:.1f} m)")

    collection = spots_to_feature_collection(spots, store, canonical)
    print(f"4. GeoJSON out: {len(collection['features'])} features; first:")
    print("   " + json.dumps(collection["features"][0]))


if __name__ == "__main__":
    main()
