"""HTTP service: search, translation, area lookup, health.

Snapshot, index, and vocabulary load once at startup and are shared
read-only across requests. Responses are serialized with a fixed JSON
layout so identical requests yield identical bodies (elapsedMs aside).
"""

from __future__ import annotations

import json
import os
import time
from dataclasses import dataclass
from importlib import resources
from typing import Mapping

from fastapi import FastAPI, Request, Response
from fastapi.middleware.cors import CORSMiddleware

from .engine import (AreaRequired, FeatureStore, SearchParams, plan, execute,
                     spots_to_feature_collection)
from .geo import AreaNotFound, BBox, list_area_names, load_area_file, resolve_area
from .imr import canonicalize, validate
from .ingest import load_snapshot
from .nlq import (FormatInvalid, NoObjectsFound, ParserConfig, TranslationError,
                  get_translator)
from .vocab import load_bundles

DEFAULT_PORT = 8080
MAX_SENTENCE_LEN = 1000
MAX_AREA_SUGGESTIONS = 20


def default_vocab_path() -> str:
    return str(resources.files("spot") / "data" / "bundles.jsonl")


@dataclass
class ServiceConfig:
    snapshot: str
    vocab: str | None = None
    area_file: str | None = None
    port: int = DEFAULT_PORT
    translator: str = "baseline"

    def __post_init__(self):
        if not 0 < self.port < 65536:
            raise ValueError(f"invalid port {self.port}")


def load_config(config_path: str | None = None,
                env: Mapping[str, str] = os.environ) -> ServiceConfig:
    """Config file keys, overridden by SPOT_SNAPSHOT / SPOT_VOCAB / SPOT_PORT."""
    raw: dict = {}
    if config_path is not None:
        with open(config_path, encoding="utf-8") as fh:
            raw = json.load(fh)
        if not isinstance(raw, dict):
            raise ValueError("config file must hold a JSON object")
    snapshot = env.get("SPOT_SNAPSHOT", raw.get("snapshot"))
    if not snapshot:
        raise ValueError("no snapshot configured (config file or SPOT_SNAPSHOT)")
    return ServiceConfig(
        snapshot=snapshot,
        vocab=env.get("SPOT_VOCAB", raw.get("vocab")),
        area_file=raw.get("area_file"),
        port=int(env.get("SPOT_PORT", raw.get("port", DEFAULT_PORT))),
        translator=raw.get("translator", "baseline"),
    )


def _json_response(body: dict, status: int = 200) -> Response:
    return Response(content=json.dumps(body, ensure_ascii=False,
                                       separators=(",", ":")),
                    status_code=status, media_type="application/json")


def _error(status: int, code: str, message: str,
           details: list[str] | None = None) -> Response:
    body: dict = {"error": {"code": code, "message": message}}
    if details is not None:
        body["error"]["details"] = details
    return _json_response(body, status=status)


class _BadRequest(ValueError):
    pass


def _parse_bbox(value) -> BBox:
    if (not isinstance(value, list) or len(value) != 4
            or not all(isinstance(x, (int, float)) and not isinstance(x, bool)
                       for x in value)):
        raise _BadRequest("bbox must be [minLon,minLat,maxLon,maxLat]")
    box = BBox(*[float(x) for x in value])
    if box.min_lon >= box.max_lon or box.min_lat >= box.max_lat:
        raise _BadRequest("bbox must have min < max per axis")
    if not (-90 <= box.min_lat <= 90 and -90 <= box.max_lat <= 90
            and -180 <= box.min_lon <= 180 and -180 <= box.max_lon <= 180):
        raise _BadRequest("bbox out of range")
    return box


def _parse_limit(value) -> int:
    if not isinstance(value, int) or isinstance(value, bool):
        raise _BadRequest("limit must be an integer")
    if not 1 <= value <= SearchParams.MAX_LIMIT:
        raise _BadRequest(f"limit must be in [1, {SearchParams.MAX_LIMIT}]")
    return value


async def _read_json_object(request: Request) -> dict:
    try:
        body = json.loads(await request.body())
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise _BadRequest(f"body is not JSON: {exc}") from exc
    if not isinstance(body, dict):
        raise _BadRequest("body must be a JSON object")
    return body


def create_app(config: ServiceConfig) -> FastAPI:
    store = FeatureStore(load_snapshot(config.snapshot))
    vocabulary = load_bundles(config.vocab or default_vocab_path())
    file_areas = load_area_file(config.area_file) if config.area_file else []
    gazetteer = tuple(list_area_names(store.features, file_areas))
    parser_config = ParserConfig(vocabulary=vocabulary, area_gazetteer=gazetteer)
    translator = get_translator(config.translator, parser_config)

    app = FastAPI(title="spot", docs_url=None, redoc_url=None)
    app.add_middleware(CORSMiddleware, allow_origins=["*"], allow_methods=["*"],
                       allow_headers=["*"])

    def _query_from_body(body: dict):
        """Shared sentence|imr handling; returns (query, error response)."""
        sentence = body.get("sentence")
        document = body.get("imr")
        if (sentence is None) == (document is None):
            return None, _error(400, "InvalidBody",
                                "body needs exactly one of sentence or imr")
        if sentence is not None:
            if not isinstance(sentence, str) or not sentence.strip():
                return None, _error(400, "InvalidBody",
                                    "sentence must be a non-empty string")
            if len(sentence) > MAX_SENTENCE_LEN:
                return None, _error(400, "InvalidBody",
                                    f"sentence longer than {MAX_SENTENCE_LEN} chars")
            try:
                return translator.translate(sentence), None
            except NoObjectsFound as exc:
                return None, _error(400, "NoObjectsFound", str(exc))
            except FormatInvalid as exc:
                return None, _error(400, "InvalidImr", str(exc), details=exc.errors)
            except TranslationError as exc:
                return None, _error(400, "TranslationFailed", str(exc))
        parsed, errors = validate(document)
        if errors:
            return None, _error(400, "InvalidImr", "imr failed validation",
                                details=errors)
        return parsed, None

    @app.post("/api/search")
    async def search(request: Request) -> Response:
        started = time.perf_counter()
        try:
            body = await _read_json_object(request)
            bbox = _parse_bbox(body["bbox"]) if "bbox" in body else None
            limit = _parse_limit(body["limit"]) if "limit" in body else 100
        except _BadRequest as exc:
            return _error(400, "InvalidBody", str(exc))
        q, err = _query_from_body(body)
        if err is not None:
            return err
        try:
            qc = canonicalize(q)
            area = None
            if qc.area.kind == "named":
                area = resolve_area(qc.area.value, store.features, file_areas)
            params = SearchParams(limit=limit, bbox=bbox)
            matches = execute(plan(qc, store), qc, store, params, area=area)
        except AreaNotFound as exc:
            return _error(404, "UnknownArea", str(exc))
        except AreaRequired as exc:
            return _error(422, "BboxRequired", str(exc))
        except Exception as exc:  # pragma: no cover - defensive
            return _error(500, "Internal", str(exc))
        elapsed_ms = int((time.perf_counter() - started) * 1000)
        return _json_response({
            "imr": qc.to_dict(),
            "spots": spots_to_feature_collection(matches, store, qc),
            "stats": {
                "candidates": {str(n.id): store.node_count(n) for n in qc.nodes},
                "examinedPairs": params.examined_pairs,
                "elapsedMs": elapsed_ms,
            },
        })

    @app.post("/api/translate")
    async def translate(request: Request) -> Response:
        try:
            body = await _read_json_object(request)
        except _BadRequest as exc:
            return _error(400, "InvalidBody", str(exc))
        if "imr" in body:
            return _error(400, "InvalidBody", "translate takes a sentence only")
        q, err = _query_from_body(body)
        if err is not None:
            return err
        return _json_response({"imr": canonicalize(q).to_dict()})

    @app.get("/api/areas")
    async def areas(request: Request) -> Response:
        prefix = request.query_params.get("q", "").casefold()
        names = [n for n in gazetteer if n.casefold().startswith(prefix)]
        return _json_response({"areas": names[:MAX_AREA_SUGGESTIONS]})

    @app.get("/api/health")
    async def health() -> Response:
        return _json_response({"status": "ok", "features": len(store)})

    return app


def run_server(config: ServiceConfig, host: str = "127.0.0.1") -> None:
    import uvicorn

    uvicorn.run(create_app(config), host=host, port=config.port, log_level="warning")
