"""Umbrella command line: ingest, mine, search, translate, generate,
evaluate, serve, and emit SQL from one entry point.

Exit codes: 0 success, 1 user error (bad input, bad flags), 2 internal error.
"""

from __future__ import annotations

import argparse
import json
import sys
import traceback
from importlib import resources

from .datagen import GenConfig, HttpLlmClient, generate_dataset, write_dataset
from .engine import (AreaRequired, FeatureStore, GuardViolation, SearchParams,
                     emit_sql, execute, plan, spots_to_geojson)
from .evaluation import evaluate, write_report
from .geo import AreaNotFound, BBox, list_area_names, load_area_file, resolve_area
from .imr import ImrSyntaxError, ImrValidationError, canonicalize, decode, encode
from .ingest import (OsmParseError, SnapshotError, ingest_osm, load_snapshot,
                     load_whitelist, save_snapshot)
from .nlq import ParserConfig, TranslationError, get_translator
from .server import load_config, run_server
from .vocab import VocabularyError, load_bundles, mine_cooccurrence, read_cooccurrence, write_cooccurrence

_USER_ERRORS = (OsmParseError, SnapshotError, VocabularyError, ImrSyntaxError,
                ImrValidationError, TranslationError, AreaNotFound, AreaRequired,
                GuardViolation, ValueError, OSError)


def _packaged(name: str) -> str:
    return str(resources.files("spot") / "data" / name)


def _bbox_arg(text: str) -> BBox:
    parts = text.split(",")
    if len(parts) != 4:
        raise argparse.ArgumentTypeError("bbox wants minLon,minLat,maxLon,maxLat")
    try:
        box = BBox(*[float(p) for p in parts])
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad bbox number: {exc}") from exc
    if box.min_lon >= box.max_lon or box.min_lat >= box.max_lat:
        raise argparse.ArgumentTypeError("bbox must have min < max per axis")
    return box


def _read_imr(path: str):
    if path == "-":
        text = sys.stdin.read()
    else:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    return decode(text)


def _load_gazetteer(path: str | None) -> tuple[str, ...]:
    names = []
    with open(path or _packaged("gazetteer.txt"), encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line and not line.startswith("#"):
                names.append(line)
    return tuple(names)


def _open_out(path: str):
    return sys.stdout if path == "-" else open(path, "w", encoding="utf-8")


def _parser_config(args) -> ParserConfig:
    vocabulary = load_bundles(getattr(args, "bundles", None) or _packaged("bundles.jsonl"))
    file_areas = load_area_file(args.areas) if getattr(args, "areas", None) else []
    if getattr(args, "snapshot", None):
        gazetteer = tuple(list_area_names(load_snapshot(args.snapshot), file_areas))
    else:
        gazetteer = _load_gazetteer(getattr(args, "gazetteer", None))
    return ParserConfig(vocabulary=vocabulary, area_gazetteer=gazetteer)


def cmd_ingest(args) -> int:
    whitelist = load_whitelist(args.whitelist or _packaged("whitelist.txt"))
    stream = sys.stdin.buffer if args.input == "-" else open(args.input, "rb")
    try:
        features, stats = ingest_osm(stream, whitelist)
    finally:
        if stream is not sys.stdin.buffer:
            stream.close()
    save_snapshot(features, args.output)
    if args.stats:
        print(json.dumps(stats.to_dict(), ensure_ascii=False, separators=(",", ":")))
    return 0


def cmd_cooccur(args) -> int:
    features = load_snapshot(args.snapshot)
    vocabulary = load_bundles(args.bundles or _packaged("bundles.jsonl"))
    entries = mine_cooccurrence(features, vocabulary, min_count=args.min_count,
                                top_k=args.top_k)
    out = _open_out(args.out)
    try:
        write_cooccurrence(entries, out)
    finally:
        if out is not sys.stdout:
            out.close()
    return 0


def cmd_search(args) -> int:
    q = _read_imr(args.imr)
    if args.format == "sql":
        print(emit_sql(q))
        return 0
    if not args.snapshot:
        raise ValueError("--snapshot is required unless --format sql")
    store = FeatureStore(load_snapshot(args.snapshot))
    file_areas = load_area_file(args.areas) if args.areas else []
    qc = canonicalize(q)
    area = None
    if qc.area.kind == "named":
        area = resolve_area(qc.area.value, store.features, file_areas)
    params = SearchParams(limit=args.limit, bbox=args.bbox)
    matches = execute(plan(qc, store), qc, store, params, area=area)
    if args.format == "geojson":
        print(spots_to_geojson(matches, store, qc))
    else:
        for m in matches:
            print(",".join(m.uids()))
    return 0


def cmd_translate(args) -> int:
    translator = get_translator(args.translator, _parser_config(args))
    q = translator.translate(args.sentence)
    print(encode(canonicalize(q)))
    return 0


def cmd_datagen(args) -> int:
    vocabulary = load_bundles(args.bundles or _packaged("bundles.jsonl"))
    if args.cooccur:
        with open(args.cooccur, encoding="utf-8") as fh:
            cooccurrence = read_cooccurrence(fh)
    else:
        cooccurrence = []
    gazetteer = _load_gazetteer(args.gazetteer)
    config = GenConfig(seed=args.seed)
    llm = None
    if args.mode == "llm":
        if not args.llm_endpoint:
            raise ValueError("--llm-endpoint is required in llm mode")
        llm = HttpLlmClient(args.llm_endpoint)
    records = generate_dataset(args.n, config, vocabulary, cooccurrence,
                               gazetteer, mode=args.mode, llm=llm)
    out = _open_out(args.out)
    try:
        write_dataset(records, out)
    finally:
        if out is not sys.stdout:
            out.close()
    return 0


def cmd_eval(args) -> int:
    from .datagen import read_dataset

    with open(args.dataset, encoding="utf-8") as fh:
        records = read_dataset(fh)
    translator = get_translator(args.translator, _parser_config(args))
    report = evaluate(translator, records)
    out = _open_out(args.report)
    try:
        write_report(report, out)
    finally:
        if out is not sys.stdout:
            out.close()
    if out is not sys.stdout:
        print(f"n={report.n_total} "
              f"format_validity_rate={report.format_validity_rate:.4f} "
              f"mean_overall={report.mean_overall:.4f}")
    return 0


def cmd_serve(args) -> int:
    config = load_config(args.config)
    run_server(config, host=args.host)
    return 0


def cmd_emit_sql(args) -> int:
    print(emit_sql(_read_imr(args.imr)))
    return 0


class _ArgumentParser(argparse.ArgumentParser):
    """argparse exits 2 on usage errors; the contract here is exit 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def build_parser() -> argparse.ArgumentParser:
    parser = _ArgumentParser(prog="spot",
                             description="Natural-language spot search over OSM extracts.")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    p = sub.add_parser("ingest", help="parse OSM XML into a snapshot")
    p.add_argument("--input", required=True, help="OSM XML file, - for stdin")
    p.add_argument("--whitelist", help="tag whitelist file (default: bundled)")
    p.add_argument("--output", required=True, help="snapshot file to write")
    p.add_argument("--stats", action="store_true", help="print ingest statistics")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("cooccur", help="mine frequent companion tags")
    p.add_argument("--snapshot", required=True)
    p.add_argument("--bundles", help="bundle vocabulary (default: bundled)")
    p.add_argument("--min-count", type=int, default=10)
    p.add_argument("--top-k", type=int, default=20)
    p.add_argument("--out", required=True, help="co-occurrence file, - for stdout")
    p.set_defaults(func=cmd_cooccur)

    p = sub.add_parser("search", help="run an IMR query against a snapshot")
    p.add_argument("--snapshot")
    p.add_argument("--imr", required=True, help="IMR file, - for stdin")
    p.add_argument("--bbox", type=_bbox_arg, help="minLon,minLat,maxLon,maxLat")
    p.add_argument("--limit", type=int, default=100)
    p.add_argument("--areas", help="extra named-area polygons (JSON lines)")
    p.add_argument("--format", choices=("geojson", "uids", "sql"), default="geojson")
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("translate", help="translate a sentence to canonical IMR")
    p.add_argument("--sentence", required=True)
    p.add_argument("--translator", default="baseline",
                   help="baseline | endpoint:URL | mock:FILE")
    p.add_argument("--bundles", help="bundle vocabulary (default: bundled)")
    p.add_argument("--snapshot", help="derive the area gazetteer from a snapshot")
    p.add_argument("--areas", help="extra named-area polygons (JSON lines)")
    p.add_argument("--gazetteer", help="area name list (default: bundled)")
    p.set_defaults(func=cmd_translate)

    p = sub.add_parser("datagen", help="generate synthetic training data")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--mode", choices=("template", "llm"), default="template")
    p.add_argument("--llm-endpoint", help="sentence-writing endpoint for llm mode")
    p.add_argument("--bundles", help="bundle vocabulary (default: bundled)")
    p.add_argument("--cooccur", help="co-occurrence file from `spot cooccur`")
    p.add_argument("--gazetteer", help="area name list (default: bundled)")
    p.add_argument("--out", required=True, help="dataset JSONL, - for stdout")
    p.set_defaults(func=cmd_datagen)

    p = sub.add_parser("eval", help="score a translator against a gold dataset")
    p.add_argument("--dataset", required=True, help="JSONL with sentence + imr")
    p.add_argument("--translator", default="baseline",
                   help="baseline | endpoint:URL | mock:FILE")
    p.add_argument("--bundles", help="bundle vocabulary (default: bundled)")
    p.add_argument("--snapshot", help="derive the area gazetteer from a snapshot")
    p.add_argument("--areas", help="extra named-area polygons (JSON lines)")
    p.add_argument("--gazetteer", help="area name list (default: bundled)")
    p.add_argument("--report", required=True, help="report JSON, - for stdout")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("serve", help="start the HTTP service")
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--host", default="127.0.0.1")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("emit-sql", help="print SQL text for an IMR query")
    p.add_argument("--imr", required=True, help="IMR file, - for stdin")
    p.set_defaults(func=cmd_emit_sql)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if getattr(args, "func", None) is None:
        parser.print_usage(sys.stderr)
        return 1
    try:
        return args.func(args)
    except _USER_ERRORS as exc:
        print(f"spot: error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:
        traceback.print_exc()
        print(f"spot: internal error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
