"""Umbrella CLI: subcommand wiring, exit codes, and output formats."""

from __future__ import annotations

import io
import json
import subprocess
import sys
from importlib import resources

import pytest

from spot.cli import main
from spot.imr import decode
from spot.ingest import write_snapshot
from spot.vocab import read_cooccurrence

from conftest import make_toy_features

BONN_PAIR_TEXT = (
    '{"version":1,"area":{"type":"named","value":"Bonn"},'
    '"nodes":[{"id":0,"name":"fountain","filters":'
    '[{"key":"amenity","op":"eq","value":"fountain"}]},'
    '{"id":1,"name":"restaurant","filters":'
    '[{"key":"amenity","op":"eq","value":"restaurant"}]}],'
    '"edges":[{"src":0,"dst":1,"maxDistanceM":200.0}]}'
)
BBOX_PAIR_DOC = {
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


@pytest.fixture()
def toy_snapshot(tmp_path) -> str:
    path = tmp_path / "snapshot.jsonl"
    with open(path, "w", encoding="utf-8") as fh:
        write_snapshot(make_toy_features(), fh)
    return str(path)


@pytest.fixture()
def imr_file(tmp_path) -> str:
    path = tmp_path / "query.json"
    path.write_text(json.dumps(BBOX_PAIR_DOC), encoding="utf-8")
    return str(path)


def sample_extract() -> str:
    return str(resources.files("spot") / "data" / "sample_extract.osm")


class TestDispatch:
    def test_help_exits_zero(self, capsys):
        assert main(["--help"]) == 0
        assert "COMMAND" in capsys.readouterr().out

    def test_subcommand_help_exits_zero(self, capsys):
        assert main(["search", "--help"]) == 0
        assert "--snapshot" in capsys.readouterr().out

    def test_no_arguments_prints_usage(self, capsys):
        assert main([]) == 1
        assert "usage:" in capsys.readouterr().err

    def test_unknown_subcommand(self, capsys):
        assert main(["frobnicate"]) == 1
        assert "error" in capsys.readouterr().err

    def test_unknown_flag(self, capsys):
        assert main(["ingest", "--bogus"]) == 1
        assert "error" in capsys.readouterr().err

    def test_user_errors_exit_one(self, capsys, tmp_path):
        code = main(["ingest", "--input", str(tmp_path / "missing.osm"),
                     "--output", str(tmp_path / "out.jsonl")])
        assert code == 1
        assert "spot: error:" in capsys.readouterr().err

    def test_unexpected_exceptions_exit_two(self, capsys, monkeypatch,
                                            toy_snapshot, imr_file):
        import spot.cli as cli

        def boom(path):
            raise RuntimeError("wired wrong")

        monkeypatch.setattr(cli, "load_snapshot", boom)
        code = main(["search", "--snapshot", toy_snapshot, "--imr", imr_file,
                     "--bbox", "7.05,50.70,7.15,50.78"])
        assert code == 2
        assert "internal error" in capsys.readouterr().err


class TestIngest:
    def test_ingest_writes_snapshot_and_stats(self, capsys, tmp_path):
        out = tmp_path / "snapshot.jsonl"
        code = main(["ingest", "--input", sample_extract(),
                     "--output", str(out), "--stats"])
        assert code == 0
        stats = json.loads(capsys.readouterr().out)
        assert stats["features_kept"] > 0
        assert 0 < stats["reduction_ratio"] < 1
        assert (stats["tag_bytes_after"] + stats["tag_bytes_removed"]
                == stats["tag_bytes_before"])
        assert out.exists()

    def test_ingest_silent_without_stats_flag(self, capsys, tmp_path):
        out = tmp_path / "snapshot.jsonl"
        assert main(["ingest", "--input", sample_extract(),
                     "--output", str(out)]) == 0
        assert capsys.readouterr().out == ""


class TestCooccur:
    def test_mines_to_file(self, capsys, tmp_path, toy_snapshot):
        out = tmp_path / "cooccur.jsonl"
        code = main(["cooccur", "--snapshot", toy_snapshot,
                     "--min-count", "1", "--top-k", "5", "--out", str(out)])
        assert code == 0
        with open(out, encoding="utf-8") as fh:
            entries = read_cooccurrence(fh)
        assert isinstance(entries, list)


class TestSearch:
    def test_geojson_output(self, capsys, toy_snapshot, imr_file):
        code = main(["search", "--snapshot", toy_snapshot, "--imr", imr_file,
                     "--bbox", "7.05,50.70,7.15,50.78"])
        assert code == 0
        doc = json.loads(capsys.readouterr().out)
        assert doc["type"] == "FeatureCollection"
        assert len(doc["features"]) == 3

    def test_uids_output(self, capsys, toy_snapshot, imr_file):
        code = main(["search", "--snapshot", toy_snapshot, "--imr", imr_file,
                     "--bbox", "7.05,50.70,7.15,50.78", "--format", "uids"])
        assert code == 0
        assert capsys.readouterr().out == "n2,n1\n"

    def test_sql_format_needs_no_snapshot(self, capsys, imr_file):
        assert main(["search", "--imr", imr_file, "--format", "sql"]) == 0
        out = capsys.readouterr().out
        assert out.startswith("SELECT n0.id AS n0_id, n1.id AS n1_id")
        assert "ST_DWithin" in out

    def test_other_formats_need_snapshot(self, capsys, imr_file):
        assert main(["search", "--imr", imr_file]) == 1
        assert "--snapshot is required" in capsys.readouterr().err

    def test_bad_bbox_flag(self, capsys, toy_snapshot, imr_file):
        code = main(["search", "--snapshot", toy_snapshot, "--imr", imr_file,
                     "--bbox", "1,2,3"])
        assert code == 1
        assert "bbox wants" in capsys.readouterr().err

    def test_invalid_imr_file(self, capsys, tmp_path, toy_snapshot):
        bad = tmp_path / "bad.json"
        bad.write_text('{"version":1}', encoding="utf-8")
        code = main(["search", "--snapshot", toy_snapshot, "--imr", str(bad),
                     "--bbox", "7.05,50.70,7.15,50.78"])
        assert code == 1
        assert "spot: error:" in capsys.readouterr().err

    def test_imr_from_stdin(self, capsys, monkeypatch, toy_snapshot):
        monkeypatch.setattr(sys, "stdin", io.StringIO(json.dumps(BBOX_PAIR_DOC)))
        code = main(["search", "--snapshot", toy_snapshot, "--imr", "-",
                     "--bbox", "7.05,50.70,7.15,50.78", "--format", "uids"])
        assert code == 0
        assert capsys.readouterr().out == "n2,n1\n"


class TestTranslate:
    def test_prints_canonical_imr(self, capsys):
        code = main(["translate", "--sentence",
                     "Find a restaurant within 200 m of a fountain in Bonn"])
        assert code == 0
        assert capsys.readouterr().out.strip() == BONN_PAIR_TEXT

    def test_no_objects_is_a_user_error(self, capsys):
        assert main(["translate", "--sentence", "find me something nice"]) == 1
        assert "no objects found" in capsys.readouterr().err

    def test_gazetteer_from_snapshot(self, capsys, tmp_path, toy_snapshot):
        # The toy snapshot has no admin areas, so "in Bonn" stays bbox.
        code = main(["translate", "--snapshot", toy_snapshot,
                     "--sentence", "a fountain in Bonn"])
        assert code == 0
        q = decode(capsys.readouterr().out.strip())
        assert q.area.kind == "bbox"


class TestDatagenAndEval:
    def test_datagen_writes_n_records(self, tmp_path, capsys):
        out = tmp_path / "data.jsonl"
        assert main(["datagen", "--n", "8", "--seed", "3",
                     "--out", str(out)]) == 0
        lines = out.read_text(encoding="utf-8").splitlines()
        assert len(lines) == 8
        assert all(json.loads(line)["sentence"] for line in lines)

    def test_datagen_deterministic(self, tmp_path):
        a = tmp_path / "a.jsonl"
        b = tmp_path / "b.jsonl"
        main(["datagen", "--n", "12", "--seed", "9", "--out", str(a)])
        main(["datagen", "--n", "12", "--seed", "9", "--out", str(b)])
        assert a.read_bytes() == b.read_bytes()

    def test_datagen_llm_mode_needs_endpoint(self, capsys, tmp_path):
        code = main(["datagen", "--n", "1", "--mode", "llm",
                     "--out", str(tmp_path / "x.jsonl")])
        assert code == 1
        assert "--llm-endpoint" in capsys.readouterr().err

    def test_eval_reports_perfect_baseline(self, tmp_path, capsys):
        dataset = tmp_path / "data.jsonl"
        main(["datagen", "--n", "20", "--seed", "5", "--out", str(dataset)])
        report_path = tmp_path / "report.json"
        code = main(["eval", "--dataset", str(dataset),
                     "--report", str(report_path)])
        assert code == 0
        summary = capsys.readouterr().out
        assert "format_validity_rate=1.0000" in summary
        assert "mean_overall=1.0000" in summary
        report = json.loads(report_path.read_text(encoding="utf-8"))
        assert report["n_total"] == 20
        assert report["mean_overall"] == 1.0

    def test_eval_report_to_stdout(self, tmp_path, capsys):
        dataset = tmp_path / "data.jsonl"
        main(["datagen", "--n", "3", "--seed", "6", "--out", str(dataset)])
        assert main(["eval", "--dataset", str(dataset), "--report", "-"]) == 0
        doc = json.loads(capsys.readouterr().out)
        assert doc["format_validity_rate"] == 1.0


class TestEmitSql:
    def test_prints_sql(self, capsys, imr_file):
        assert main(["emit-sql", "--imr", imr_file]) == 0
        out = capsys.readouterr().out
        assert out.endswith(";\n")
        assert "ST_MakeEnvelope($1,$2,$3,$4,4326)" in out


class TestInstalledEntryPoint:
    def test_console_script_help(self):
        proc = subprocess.run(["spot", "--help"], capture_output=True,
                              text=True)
        assert proc.returncode == 0
        assert "ingest" in proc.stdout
