"""Training-data generator: sampler distributions, prompt and template
rendering, and JSONL round-trips.

The round-trip property (template sentence parses back to the sampled
query with a perfect score) is the load-bearing test here.
"""

from __future__ import annotations

import io
import json
import random
from importlib import resources

import pytest

from spot.datagen import (DatasetRecord, GenConfig, NotRenderable, STYLES,
                          STYLE_NAMES, generate_dataset, read_dataset,
                          render_prompt, render_template_sentence, sample_imr,
                          write_dataset)
from spot.imr import (ImrArea, ImrEdge, ImrQuery, canonicalize,
                      semantic_score, validate)
from spot.nlq import ParserConfig, parse_baseline
from spot.vocab import CooccurrenceEntry, load_bundles

from conftest import eq, node, one_node_query, two_node_query

GAZETTEER = ("Bonn", "Bad Godesberg", "Beuel")
BONN = ImrArea(kind="named", value="Bonn")


@pytest.fixture(scope="module")
def vocab():
    return load_bundles(str(resources.files("spot") / "data" / "bundles.jsonl"))


@pytest.fixture(scope="module")
def cooccurrence() -> list[CooccurrenceEntry]:
    return [
        CooccurrenceEntry("restaurant", "cuisine=italian", 12, 0.8),
        CooccurrenceEntry("restaurant", "cuisine=german", 3, 0.2),
        CooccurrenceEntry("restaurant", "wheelchair=yes", 10, 0.67),
        CooccurrenceEntry("park", "operator=city", 4, 0.5),
    ]


def draw(vocab, cooccurrence, config: GenConfig, n: int,
         gazetteer=GAZETTEER) -> list[ImrQuery]:
    rng = random.Random(config.seed)
    return [sample_imr(rng, vocab, cooccurrence, gazetteer, config)
            for _ in range(n)]


class TestGenConfig:
    def test_probability_bounds(self):
        with pytest.raises(ValueError, match="p_edge"):
            GenConfig(p_edge=1.5)
        with pytest.raises(ValueError, match="p_companion"):
            GenConfig(p_companion=-0.1)

    def test_structural_bounds(self):
        with pytest.raises(ValueError, match="max_objects"):
            GenConfig(max_objects=0)
        with pytest.raises(ValueError, match="max_companions"):
            GenConfig(max_companions=0)
        with pytest.raises(ValueError, match="distance_range_m"):
            GenConfig(distance_range_m=(100.0, 50.0))


class TestSampleImr:
    def test_every_sample_validates(self, vocab, cooccurrence):
        for q in draw(vocab, cooccurrence, GenConfig(seed=11), 1000):
            assert validate(q.to_dict())[1] == []

    def test_shape_bounds(self, vocab, cooccurrence):
        for q in draw(vocab, cooccurrence, GenConfig(seed=12), 1000):
            assert 1 <= len(q.nodes) <= 3
            for e in q.edges:
                assert 10.0 <= e.max_distance_m <= 1000.0
                assert e.max_distance_m % 10 == 0
            for n in q.nodes:
                keys = [f.key for f in n.filters]
                assert len(keys) == len(set(keys))
                assert all(f.op == "eq" for f in n.filters)
            if q.area.kind == "named":
                assert q.area.value in GAZETTEER

    def test_single_object_config(self, vocab, cooccurrence):
        for q in draw(vocab, cooccurrence, GenConfig(seed=13, max_objects=1), 200):
            assert len(q.nodes) == 1
            assert q.edges == ()

    def test_no_companions_means_single_predicate(self, vocab, cooccurrence):
        for q in draw(vocab, cooccurrence,
                      GenConfig(seed=14, p_companion=0.0), 300):
            assert all(len(n.filters) == 1 for n in q.nodes)

    def test_companion_cap(self, vocab, cooccurrence):
        for q in draw(vocab, cooccurrence,
                      GenConfig(seed=15, p_companion=1.0, max_companions=2), 500):
            assert all(len(n.filters) <= 3 for n in q.nodes)

    def test_edge_probability_extremes(self, vocab, cooccurrence):
        for q in draw(vocab, cooccurrence, GenConfig(seed=16, p_edge=1.0), 200):
            n = len(q.nodes)
            assert len(q.edges) == n * (n - 1) // 2
        for q in draw(vocab, cooccurrence, GenConfig(seed=17, p_edge=0.0), 200):
            assert q.edges == ()

    def test_area_probability_extremes(self, vocab, cooccurrence):
        assert all(q.area.kind == "named" for q in draw(
            vocab, cooccurrence, GenConfig(seed=18, p_named_area=1.0), 200))
        assert all(q.area.kind == "bbox" for q in draw(
            vocab, cooccurrence, GenConfig(seed=19, p_named_area=0.0), 200))

    def test_empty_gazetteer_forces_bbox(self, vocab, cooccurrence):
        qs = draw(vocab, cooccurrence, GenConfig(seed=20, p_named_area=1.0),
                  100, gazetteer=())
        assert all(q.area.kind == "bbox" for q in qs)

    def test_edge_frequency_matches_binomial_bound(self, vocab, cooccurrence):
        # Among 2-node samples the edge coin is Bernoulli(0.7): the observed
        # count must sit within 3 sigma of the mean.
        config = GenConfig(seed=21, max_objects=2, p_edge=0.7)
        two_node = [q for q in draw(vocab, cooccurrence, config, 2000)
                    if len(q.nodes) == 2]
        m = len(two_node)
        assert m > 800
        with_edge = sum(1 for q in two_node if q.edges)
        sigma = (m * 0.7 * 0.3) ** 0.5
        assert abs(with_edge - 0.7 * m) <= 3 * sigma

    def test_companions_weighted_by_frequency(self, vocab, cooccurrence):
        # cuisine=italian outweighs cuisine=german 0.8 to 0.2 for restaurants.
        config = GenConfig(seed=22, p_companion=1.0, max_companions=1)
        italian = german = 0
        for q in draw(vocab, cooccurrence, config, 3000):
            for n in q.nodes:
                values = {(f.key, f.value) for f in n.filters}
                italian += ("cuisine", "italian") in values
                german += ("cuisine", "german") in values
        assert italian > 2 * german > 0

    def test_determinism(self, vocab, cooccurrence):
        config = GenConfig(seed=23)
        assert draw(vocab, cooccurrence, config, 50) == \
            draw(vocab, cooccurrence, config, 50)


class TestRenderPrompt:
    def test_minimal_prompt_golden(self):
        prompt = render_prompt(one_node_query("amenity", "fountain"), "terse")
        assert prompt == (
            "Generate one natural-language map search sentence for this request.\n"
            "Objects:\n"
            "- object 0: amenity=fountain\n"
            "Area: the user's current map view\n"
            "Style: Write the search as one terse sentence.")

    def test_constraints_and_named_area(self):
        prompt = render_prompt(two_node_query(200.0, BONN), "formal")
        assert "- object 0: amenity=fountain" in prompt
        assert "- object 1: amenity=restaurant" in prompt
        assert "- object 0 within 200 m of object 1" in prompt
        assert "Area: Bonn" in prompt

    def test_styles_differ_only_in_instruction_line(self):
        q = two_node_query(300.0)
        a = render_prompt(q, "terse").splitlines()
        b = render_prompt(q, "question form").splitlines()
        assert a[:-1] == b[:-1]
        assert a[-1] != b[-1]

    def test_all_styles_render(self):
        q = one_node_query("amenity", "bench")
        assert len(STYLE_NAMES) == 8
        for style in STYLE_NAMES:
            assert STYLES[style] in render_prompt(q, style)

    def test_unknown_style_rejected(self):
        with pytest.raises(ValueError, match="unknown style"):
            render_prompt(one_node_query("amenity", "bench"), "baroque")

    def test_prompt_is_deterministic_and_canonical(self):
        q = two_node_query(200.0, BONN)
        assert render_prompt(q, "terse") == render_prompt(canonicalize(q), "terse")


class TestTemplateSentence:
    def test_two_node_sentence(self, vocab):
        s = render_template_sentence(two_node_query(200.0, BONN), vocab,
                                     GAZETTEER)
        assert s == "Find a fountain within 200 m of a restaurant in Bonn"

    def test_single_node_bbox_sentence(self, vocab):
        s = render_template_sentence(one_node_query("amenity", "fountain"),
                                     vocab)
        assert s == "Find a fountain"

    def test_km_rendering(self, vocab):
        assert "within 2 km of" in render_template_sentence(
            two_node_query(2000.0), vocab)
        assert "within 1500 m of" in render_template_sentence(
            two_node_query(1500.0), vocab)

    def test_disconnected_components_joined_with_and(self, vocab):
        q = ImrQuery(
            area=ImrArea(kind="bbox"),
            nodes=(node(0, "restaurant", eq("amenity", "restaurant")),
                   node(1, "fountain", eq("amenity", "fountain")),
                   node(2, "tree", eq("natural", "tree"))),
            edges=(ImrEdge(src=0, dst=1, max_distance_m=100.0),),
        )
        s = render_template_sentence(q, vocab)
        assert s == ("Find a fountain within 100 m of a restaurant "
                     "and a tree")

    def test_unknown_predicates_not_renderable(self, vocab):
        with pytest.raises(NotRenderable, match="match no bundle"):
            render_template_sentence(one_node_query("amenity", "spaceport"),
                                     vocab)

    def test_high_degree_not_renderable(self, vocab):
        q = ImrQuery(
            area=ImrArea(kind="bbox"),
            nodes=(node(0, "a", eq("amenity", "restaurant")),
                   node(1, "b", eq("amenity", "fountain")),
                   node(2, "c", eq("natural", "tree")),
                   node(3, "d", eq("leisure", "park"))),
            edges=(ImrEdge(src=0, dst=1, max_distance_m=100.0),
                   ImrEdge(src=0, dst=2, max_distance_m=100.0),
                   ImrEdge(src=0, dst=3, max_distance_m=100.0)),
        )
        with pytest.raises(NotRenderable, match="more than two"):
            render_template_sentence(q, vocab)

    def test_cycle_not_renderable(self, vocab):
        q = ImrQuery(
            area=ImrArea(kind="bbox"),
            nodes=(node(0, "a", eq("amenity", "restaurant")),
                   node(1, "b", eq("amenity", "fountain")),
                   node(2, "c", eq("natural", "tree"))),
            edges=(ImrEdge(src=0, dst=1, max_distance_m=100.0),
                   ImrEdge(src=1, dst=2, max_distance_m=100.0),
                   ImrEdge(src=0, dst=2, max_distance_m=100.0)),
        )
        with pytest.raises(NotRenderable, match="cycle"):
            render_template_sentence(q, vocab)

    def test_area_outside_gazetteer_not_renderable(self, vocab):
        with pytest.raises(NotRenderable, match="not in gazetteer"):
            render_template_sentence(two_node_query(200.0, BONN), vocab, ())

    def test_round_trip_scores_one(self, vocab, cooccurrence):
        # 500 sampled queries: template sentence -> baseline parse -> same
        # query up to canonicalization. This property is what makes the
        # synthetic dataset trustworthy as training material.
        parser = ParserConfig(vocabulary=vocab, area_gazetteer=GAZETTEER)
        config = GenConfig(seed=31)
        rng = random.Random(config.seed)
        rendered = 0
        while rendered < 500:
            q = sample_imr(rng, vocab, cooccurrence, GAZETTEER, config)
            try:
                sentence = render_template_sentence(q, vocab, GAZETTEER)
            except NotRenderable:
                continue
            rendered += 1
            parsed = parse_baseline(sentence, parser)
            assert semantic_score(parsed, q).overall == 1.0, sentence


class FakeLlm:
    """Echo client that fails on a marker substring."""

    def __init__(self, fail_when: str = ""):
        self.fail_when = fail_when
        self.calls = 0

    def __call__(self, prompt: str) -> str:
        self.calls += 1
        if self.fail_when and self.fail_when in prompt:
            raise RuntimeError("model unavailable")
        return f"sentence #{self.calls}"


class TestGenerateDataset:
    def test_template_mode_fills_every_sentence(self, vocab, cooccurrence):
        records = list(generate_dataset(40, GenConfig(seed=41), vocab,
                                        cooccurrence, GAZETTEER))
        assert [r.id for r in records[:2]] == ["q-000001", "q-000002"]
        assert len(records) == 40
        for rec in records:
            assert rec.sentence
            assert rec.error is None
            assert rec.style in STYLES
            assert canonicalize(rec.imr) == rec.imr

    def test_template_mode_is_byte_deterministic(self, vocab, cooccurrence):
        def dump() -> str:
            out = io.StringIO()
            write_dataset(generate_dataset(25, GenConfig(seed=42), vocab,
                                           cooccurrence, GAZETTEER), out)
            return out.getvalue()

        first = dump()
        assert first == dump()
        assert len(first.splitlines()) == 25

    def test_llm_mode_records_failures_without_resampling(self, vocab,
                                                          cooccurrence):
        llm = FakeLlm(fail_when="Area: Bonn")
        records = list(generate_dataset(60, GenConfig(seed=43), vocab,
                                        cooccurrence, GAZETTEER, mode="llm",
                                        llm=llm))
        assert len(records) == 60
        assert llm.calls == 60
        failed = [r for r in records if r.error is not None]
        assert failed
        for rec in failed:
            assert rec.sentence is None
            assert "model unavailable" in rec.error
            assert "Area: Bonn" in rec.prompt

    def test_llm_mode_requires_client(self, vocab, cooccurrence):
        with pytest.raises(ValueError, match="needs a client"):
            list(generate_dataset(1, GenConfig(), vocab, cooccurrence,
                                  GAZETTEER, mode="llm"))

    def test_invalid_mode_and_count(self, vocab, cooccurrence):
        with pytest.raises(ValueError, match="unknown mode"):
            list(generate_dataset(1, GenConfig(), vocab, cooccurrence,
                                  GAZETTEER, mode="oracle"))
        with pytest.raises(ValueError, match="n must be"):
            list(generate_dataset(0, GenConfig(), vocab, cooccurrence,
                                  GAZETTEER))


class TestDatasetIo:
    def test_write_read_round_trip(self, vocab, cooccurrence):
        out = io.StringIO()
        n = write_dataset(generate_dataset(10, GenConfig(seed=44), vocab,
                                           cooccurrence, GAZETTEER), out)
        assert n == 10
        back = read_dataset(io.StringIO(out.getvalue()))
        assert len(back) == 10
        assert all(isinstance(rec, DatasetRecord) for rec in back)
        assert [rec.id for rec in back] == [f"q-{i:06d}" for i in range(1, 11)]
        assert all(rec.sentence for rec in back)
        assert all(canonicalize(rec.imr) == rec.imr for rec in back)

    def test_blank_lines_skipped(self):
        doc = json.dumps({"id": "a", "imr": one_node_query("amenity", "bench").to_dict()})
        back = read_dataset(io.StringIO(f"\n{doc}\n\n"))
        assert len(back) == 1

    def test_malformed_line_reports_line_number(self):
        with pytest.raises(ValueError, match="line 2: malformed"):
            read_dataset(io.StringIO('{"id":"a","imr":' +
                                     json.dumps(one_node_query("a", "b").to_dict()) +
                                     "}\n{broken\n"))

    def test_missing_imr_rejected(self):
        with pytest.raises(ValueError, match="line 1: dataset record lacks imr"):
            read_dataset(io.StringIO('{"id":"a"}\n'))

    def test_invalid_imr_rejected(self):
        with pytest.raises(ValueError, match="line 1: invalid imr"):
            read_dataset(io.StringIO('{"id":"a","imr":{"version":1}}\n'))
