"""HTTP service contract, pinned by golden response bodies.

Every documented endpoint and every 4xx path has a golden under
tests/golden/. Bodies must match byte-for-byte after zeroing the
elapsedMs timing field. Regenerate with SPOT_UPDATE_GOLDENS=1 after an
intentional contract change.
"""

from __future__ import annotations

import json
import os
import re
from pathlib import Path

import pytest
from fastapi.testclient import TestClient

from spot.ingest import write_snapshot
from spot.server import (DEFAULT_PORT, ServiceConfig, create_app,
                         default_vocab_path, load_config)

from conftest import make_toy_features

GOLDEN_DIR = Path(__file__).parent / "golden"
TOY_BBOX_LIST = [7.05, 50.70, 7.15, 50.78]
_ELAPSED = re.compile(r'"elapsedMs":\d+')

SEARCH_IMR = {
    "version": 1,
    "area": {"type": "bbox"},
    "nodes": [
        {"id": 0, "name": "fountain",
         "filters": [{"key": "amenity", "op": "eq", "value": "fountain"}]},
        {"id": 1, "name": "restaurant",
         "filters": [{"key": "amenity", "op": "eq", "value": "restaurant"}]},
    ],
    "edges": [{"src": 0, "dst": 1, "maxDistanceM": 100.0}],
}


def normalize(text: str) -> str:
    return _ELAPSED.sub('"elapsedMs":0', text)


def assert_golden(response, status: int, name: str) -> None:
    assert response.status_code == status, response.text
    text = normalize(response.text)
    path = GOLDEN_DIR / name
    if os.environ.get("SPOT_UPDATE_GOLDENS") == "1":
        GOLDEN_DIR.mkdir(exist_ok=True)
        path.write_text(text + "\n", encoding="utf-8")
    expected = path.read_text(encoding="utf-8").rstrip("\n")
    assert text == expected, f"golden mismatch: {name}"


@pytest.fixture(scope="module")
def service_dir(tmp_path_factory) -> Path:
    root = tmp_path_factory.mktemp("service")
    with open(root / "snapshot.jsonl", "w", encoding="utf-8") as fh:
        write_snapshot(make_toy_features(), fh)
    areas = [
        {"name": "Bonn",
         "polygon": [[7.05, 50.70], [7.15, 50.70], [7.15, 50.78], [7.05, 50.78]]},
        {"name": "Beuel",
         "polygon": [[7.10, 50.74], [7.14, 50.74], [7.14, 50.76], [7.10, 50.76]]},
    ]
    with open(root / "areas.jsonl", "w", encoding="utf-8") as fh:
        for rec in areas:
            fh.write(json.dumps(rec) + "\n")
    return root


@pytest.fixture(scope="module")
def client(service_dir) -> TestClient:
    config = ServiceConfig(snapshot=str(service_dir / "snapshot.jsonl"),
                           area_file=str(service_dir / "areas.jsonl"))
    return TestClient(create_app(config))


class TestSearch:
    def test_search_by_imr_with_bbox(self, client):
        resp = client.post("/api/search",
                           json={"imr": SEARCH_IMR, "bbox": TOY_BBOX_LIST})
        assert_golden(resp, 200, "search_imr_bbox.json")
        body = resp.json()
        spots = body["spots"]["features"]
        assert [f.get("id") for f in spots[:2]] == ["n2", "n1"]
        assert body["stats"]["candidates"] == {"0": 1, "1": 2}
        assert body["stats"]["examinedPairs"] == 4

    def test_search_by_sentence_with_bbox(self, client):
        resp = client.post("/api/search", json={
            "sentence": "Find a restaurant within 100 m of a fountain",
            "bbox": TOY_BBOX_LIST})
        assert_golden(resp, 200, "search_sentence_bbox.json")
        assert resp.json()["imr"] == SEARCH_IMR

    def test_search_by_sentence_with_named_area(self, client):
        resp = client.post("/api/search", json={
            "sentence": "Find a restaurant within 100 m of a fountain in Bonn"})
        assert_golden(resp, 200, "search_sentence_named_area.json")
        body = resp.json()
        assert body["imr"]["area"] == {"type": "named", "value": "Bonn"}
        assert sum(1 for f in body["spots"]["features"]
                   if f["properties"].get("role") == "spot_center") == 1

    def test_limit_truncates(self, client):
        wide = dict(SEARCH_IMR)
        wide["edges"] = [{"src": 0, "dst": 1, "maxDistanceM": 5000.0}]
        resp = client.post("/api/search", json={
            "imr": wide, "bbox": TOY_BBOX_LIST, "limit": 1})
        assert resp.status_code == 200
        centers = [f for f in resp.json()["spots"]["features"]
                   if f["properties"].get("role") == "spot_center"]
        assert len(centers) == 1

    def test_identical_requests_identical_bodies(self, client):
        payload = {"imr": SEARCH_IMR, "bbox": TOY_BBOX_LIST}
        first = client.post("/api/search", json=payload)
        second = client.post("/api/search", json=payload)
        assert normalize(first.text) == normalize(second.text)
        assert isinstance(first.json()["stats"]["elapsedMs"], int)

    def test_cors_header_present(self, client):
        resp = client.post("/api/search", json={"imr": SEARCH_IMR,
                                                "bbox": TOY_BBOX_LIST},
                           headers={"Origin": "http://localhost:5173"})
        assert resp.headers["access-control-allow-origin"] == "*"


class TestSearchErrors:
    def test_body_not_json(self, client):
        resp = client.post("/api/search", content=b"{oops",
                           headers={"content-type": "application/json"})
        assert_golden(resp, 400, "err_body_not_json.json")
        assert resp.json()["error"]["code"] == "InvalidBody"

    def test_neither_sentence_nor_imr(self, client):
        assert_golden(client.post("/api/search", json={}), 400,
                      "err_neither_field.json")

    def test_both_sentence_and_imr(self, client):
        resp = client.post("/api/search",
                           json={"sentence": "x", "imr": SEARCH_IMR})
        assert_golden(resp, 400, "err_both_fields.json")

    def test_bad_bbox_shape(self, client):
        resp = client.post("/api/search", json={
            "sentence": "a fountain", "bbox": [1, 2, 3]})
        assert_golden(resp, 400, "err_bad_bbox_shape.json")

    def test_bad_bbox_order(self, client):
        resp = client.post("/api/search", json={
            "sentence": "a fountain", "bbox": [7.15, 50.70, 7.05, 50.78]})
        assert_golden(resp, 400, "err_bad_bbox_order.json")

    def test_bad_limit(self, client):
        resp = client.post("/api/search", json={
            "sentence": "a fountain", "bbox": TOY_BBOX_LIST, "limit": 0})
        assert_golden(resp, 400, "err_bad_limit.json")

    def test_empty_sentence(self, client):
        resp = client.post("/api/search", json={"sentence": "   ",
                                                "bbox": TOY_BBOX_LIST})
        assert_golden(resp, 400, "err_sentence_empty.json")

    def test_over_long_sentence(self, client):
        resp = client.post("/api/search", json={"sentence": "a" * 1001,
                                                "bbox": TOY_BBOX_LIST})
        assert_golden(resp, 400, "err_sentence_too_long.json")

    def test_no_objects_found(self, client):
        resp = client.post("/api/search", json={
            "sentence": "find me something nice", "bbox": TOY_BBOX_LIST})
        assert_golden(resp, 400, "err_no_objects.json")
        assert resp.json()["error"]["code"] == "NoObjectsFound"

    def test_invalid_imr_carries_locators(self, client):
        bad = dict(SEARCH_IMR)
        bad["edges"] = [{"src": 0, "dst": 7, "maxDistanceM": 100.0}]
        resp = client.post("/api/search", json={"imr": bad,
                                                "bbox": TOY_BBOX_LIST})
        assert_golden(resp, 400, "err_invalid_imr.json")
        assert resp.json()["error"]["details"] == [
            "/edges/0/dst: unknown node 7"]

    def test_unknown_named_area(self, client):
        ghost = dict(SEARCH_IMR)
        ghost["area"] = {"type": "named", "value": "Atlantis"}
        resp = client.post("/api/search", json={"imr": ghost})
        assert_golden(resp, 404, "err_unknown_area.json")
        assert resp.json()["error"]["code"] == "UnknownArea"

    def test_bbox_required(self, client):
        resp = client.post("/api/search", json={"imr": SEARCH_IMR})
        assert_golden(resp, 422, "err_bbox_required.json")
        assert resp.json()["error"]["code"] == "BboxRequired"


class TestTranslate:
    def test_translate_sentence(self, client):
        resp = client.post("/api/translate", json={
            "sentence": "Find a restaurant within 200 m of a fountain in Bonn"})
        assert_golden(resp, 200, "translate_sentence.json")
        body = resp.json()
        assert body["imr"]["area"] == {"type": "named", "value": "Bonn"}
        assert body["imr"]["edges"] == [{"src": 0, "dst": 1,
                                         "maxDistanceM": 200.0}]

    def test_translate_rejects_imr_bodies(self, client):
        resp = client.post("/api/translate", json={"imr": SEARCH_IMR})
        assert_golden(resp, 400, "err_translate_takes_sentence.json")

    def test_translate_no_objects(self, client):
        resp = client.post("/api/translate", json={"sentence": "hmmm"})
        assert resp.status_code == 400
        assert resp.json()["error"]["code"] == "NoObjectsFound"


class TestAreasAndHealth:
    def test_prefix_lookup(self, client):
        assert_golden(client.get("/api/areas?q=bo"), 200, "areas_prefix.json")

    def test_prefix_is_case_insensitive(self, client):
        assert client.get("/api/areas?q=BO").json() == {"areas": ["Bonn"]}

    def test_empty_prefix_lists_all(self, client):
        assert_golden(client.get("/api/areas"), 200, "areas_all.json")
        assert client.get("/api/areas").json() == {"areas": ["Beuel", "Bonn"]}

    def test_unknown_prefix_empty(self, client):
        assert client.get("/api/areas?q=zz").json() == {"areas": []}

    def test_health(self, client):
        assert_golden(client.get("/api/health"), 200, "health.json")
        assert client.get("/api/health").json() == {"status": "ok",
                                                    "features": 5}


class TestTranslatorSelection:
    def test_mock_translator_failure_maps_to_translation_failed(
            self, service_dir):
        fixture = service_dir / "mock.jsonl"
        fixture.write_text("", encoding="utf-8")
        config = ServiceConfig(snapshot=str(service_dir / "snapshot.jsonl"),
                               translator=f"mock:{fixture}")
        mock_client = TestClient(create_app(config))
        resp = mock_client.post("/api/search", json={
            "sentence": "anything", "bbox": TOY_BBOX_LIST})
        assert resp.status_code == 400
        assert resp.json()["error"]["code"] == "TranslationFailed"


class TestLoadConfig:
    def test_file_values(self, tmp_path, service_dir):
        path = tmp_path / "config.json"
        path.write_text(json.dumps({
            "snapshot": str(service_dir / "snapshot.jsonl"),
            "vocab": default_vocab_path(),
            "area_file": str(service_dir / "areas.jsonl"),
            "port": 9001,
            "translator": "baseline",
        }), encoding="utf-8")
        config = load_config(str(path), env={})
        assert config.snapshot == str(service_dir / "snapshot.jsonl")
        assert config.port == 9001
        assert config.area_file == str(service_dir / "areas.jsonl")

    def test_env_overrides_file(self, tmp_path):
        path = tmp_path / "config.json"
        path.write_text(json.dumps({"snapshot": "file.jsonl", "port": 9001}),
                        encoding="utf-8")
        config = load_config(str(path), env={"SPOT_SNAPSHOT": "env.jsonl",
                                             "SPOT_PORT": "9002",
                                             "SPOT_VOCAB": "v.jsonl"})
        assert config.snapshot == "env.jsonl"
        assert config.port == 9002
        assert config.vocab == "v.jsonl"

    def test_env_alone_suffices(self):
        config = load_config(None, env={"SPOT_SNAPSHOT": "env.jsonl"})
        assert config.snapshot == "env.jsonl"
        assert config.port == DEFAULT_PORT

    def test_missing_snapshot_rejected(self):
        with pytest.raises(ValueError, match="no snapshot configured"):
            load_config(None, env={})

    def test_non_object_config_rejected(self, tmp_path):
        path = tmp_path / "config.json"
        path.write_text("[1,2]", encoding="utf-8")
        with pytest.raises(ValueError, match="JSON object"):
            load_config(str(path), env={})

    def test_invalid_port_rejected(self):
        with pytest.raises(ValueError, match="invalid port"):
            ServiceConfig(snapshot="s", port=0)
