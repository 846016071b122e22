"""Synthetic training data: random IMR queries, LLM prompts with style
variation, deterministic template sentences, and JSONL dataset emission."""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass
from typing import IO, Callable, Iterator

import requests

from .imr import ImrArea, ImrEdge, ImrNode, ImrQuery, TagPredicate, canonicalize, validate
from .vocab import CooccurrenceEntry, TagBundle, Vocabulary
from .nlq import bundle_filters


class NotRenderable(ValueError):
    """Query falls outside the template grammar (no bundle for a node's
    predicates, non-path edges, or an area missing from the gazetteer)."""


@dataclass
class GenConfig:
    seed: int = 0
    max_objects: int = 3
    p_companion: float = 0.4
    max_companions: int = 2
    p_edge: float = 0.7
    distance_range_m: tuple[float, float] = (10.0, 1000.0)
    p_named_area: float = 0.5

    def __post_init__(self):
        for name in ("p_companion", "p_edge", "p_named_area"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must be within [0, 1]")
        if self.max_objects < 1:
            raise ValueError("max_objects must be >= 1")
        if self.max_companions < 1:
            raise ValueError("max_companions must be >= 1")
        lo, hi = self.distance_range_m
        if not 0 < lo < hi:
            raise ValueError("distance_range_m must satisfy 0 < min < max")


def _round_to_10(x: float) -> float:
    return float(round(x / 10.0) * 10)


def _draw_distance(rng: random.Random, config: GenConfig) -> float:
    lo, hi = config.distance_range_m
    d = math.exp(rng.uniform(math.log(lo), math.log(hi)))
    return min(max(_round_to_10(d), _round_to_10(lo)), _round_to_10(hi))


def _draw_companions(rng: random.Random, bundle: TagBundle, primary: str,
                     pool: list[CooccurrenceEntry], k: int) -> list[str]:
    """k weighted draws from the bundle's companion entries, distinct keys only."""
    primary_key = primary.partition("=")[0]
    taken_keys = {primary_key}
    picked: list[str] = []
    for _ in range(k):
        open_entries = [e for e in pool
                        if e.companion.partition("=")[0] not in taken_keys]
        if not open_entries:
            break
        weights = [e.freq for e in open_entries]
        entry = rng.choices(open_entries, weights=weights, k=1)[0]
        picked.append(entry.companion)
        taken_keys.add(entry.companion.partition("=")[0])
    return picked


def sample_imr(rng: random.Random, vocabulary: Vocabulary,
               cooccurrence: list[CooccurrenceEntry], gazetteer: tuple[str, ...],
               config: GenConfig) -> ImrQuery:
    """Random query: uniform bundle draws, co-occurrence-weighted companion
    tags, independent pairwise edges, log-uniform distances."""
    by_bundle: dict[str, list[CooccurrenceEntry]] = {}
    for e in cooccurrence:
        by_bundle.setdefault(e.bundle_id, []).append(e)

    n = rng.randint(1, config.max_objects)
    nodes = []
    for node_id in range(n):
        bundle = rng.choice(vocabulary.bundles)
        primary = rng.choice(bundle.tags)
        key, _, value = primary.partition("=")
        filters = [TagPredicate(key=key, op="eq", value=value)]
        if rng.random() < config.p_companion:
            k = rng.randint(1, config.max_companions)
            for companion in _draw_companions(rng, bundle, primary,
                                              by_bundle.get(bundle.id, []), k):
                ck, _, cv = companion.partition("=")
                filters.append(TagPredicate(key=ck, op="eq", value=cv))
        nodes.append(ImrNode(id=node_id, name=bundle.descriptors[0],
                             filters=tuple(filters)))

    edges = []
    for i in range(n):
        for j in range(i + 1, n):
            if rng.random() < config.p_edge:
                edges.append(ImrEdge(src=i, dst=j,
                                     max_distance_m=_draw_distance(rng, config)))

    if rng.random() < config.p_named_area and gazetteer:
        area = ImrArea(kind="named", value=rng.choice(list(gazetteer)))
    else:
        area = ImrArea(kind="bbox")
    return ImrQuery(area=area, nodes=tuple(nodes), edges=tuple(edges))


STYLES = {
    "terse": "Write the search as one terse sentence.",
    "verbose journalist": "Write the search as one flowing, detailed sentence "
                          "in the voice of a journalist.",
    "tourist with typos": "Write the search like a hurried tourist and include "
                          "a couple of small typos.",
    "formal": "Write the search in a formal, polite register.",
    "imperative": "Write the search as a direct imperative command.",
    "question form": "Phrase the search as a question.",
    "hedged": "Phrase the search with hedging and mild uncertainty.",
    "telegraphic": "Write the search in telegraphic style and drop function words.",
}
STYLE_NAMES = tuple(STYLES)


def _format_distance_m(d: float) -> str:
    return str(int(d)) if float(d).is_integer() else repr(float(d))


def render_prompt(q: ImrQuery, style: str) -> str:
    """Instruction block for a sentence-writing LLM; lists every tag and
    distance literally so the model has full information."""
    if style not in STYLES:
        raise ValueError(f"unknown style {style!r}")
    qc = canonicalize(q)
    lines = ["Generate one natural-language map search sentence for this request.",
             "Objects:"]
    for node in qc.nodes:
        tags = ", ".join(f.canonical() for f in node.filters)
        lines.append(f"- object {node.id}: {tags}")
    if qc.edges:
        lines.append("Constraints:")
        for e in qc.edges:
            lines.append(f"- object {e.src} within {_format_distance_m(e.max_distance_m)} m "
                         f"of object {e.dst}")
    if qc.area.kind == "named":
        lines.append(f"Area: {qc.area.value}")
    else:
        lines.append("Area: the user's current map view")
    lines.append(f"Style: {STYLES[style]}")
    return "\n".join(lines)


def _sentence_distance(d: float) -> str:
    if d >= 1000 and float(d).is_integer() and int(d) % 1000 == 0:
        return f"{int(d) // 1000} km"
    return f"{_format_distance_m(d)} m"


def _linearize_components(qc: ImrQuery) -> list[list[int]]:
    """Split the edge graph into paths, each walked from its smaller-id
    endpoint; isolated nodes are singleton paths. Non-paths are rejected."""
    adjacency: dict[int, list[int]] = {n.id: [] for n in qc.nodes}
    for e in qc.edges:
        adjacency[e.src].append(e.dst)
        adjacency[e.dst].append(e.src)
    for nid, neighbors in adjacency.items():
        if len(neighbors) > 2:
            raise NotRenderable(f"node {nid} joins more than two distance edges")

    seen: set[int] = set()
    components: list[list[int]] = []
    for start in sorted(adjacency):
        if start in seen:
            continue
        # collect the whole component first
        stack, component = [start], set()
        while stack:
            nid = stack.pop()
            if nid in component:
                continue
            component.add(nid)
            stack.extend(adjacency[nid])
        seen |= component
        if len(component) == 1:
            components.append([start])
            continue
        endpoints = sorted(nid for nid in component if len(adjacency[nid]) == 1)
        if len(endpoints) != 2:
            raise NotRenderable("distance edges form a cycle")
        walk = [endpoints[0]]
        while len(walk) < len(component):
            nxt = [nid for nid in adjacency[walk[-1]] if nid not in walk]
            walk.append(nxt[0])
        components.append(walk)
    return components


def render_template_sentence(q: ImrQuery, vocabulary: Vocabulary,
                             gazetteer: tuple[str, ...] = ()) -> str:
    """Canonical English sentence the baseline grammar parses back exactly."""
    qc = canonicalize(q)
    if qc.area.kind == "named" and qc.area.value not in gazetteer:
        raise NotRenderable(f"area {qc.area.value!r} not in gazetteer")

    by_filter_set: dict[frozenset, TagBundle] = {}
    for b in vocabulary.bundles:
        key = frozenset(p.canonical() for p in bundle_filters(b))
        by_filter_set.setdefault(key, b)
    descriptors: dict[int, str] = {}
    for node in qc.nodes:
        bundle = by_filter_set.get(frozenset(p.canonical() for p in node.filters))
        if bundle is None:
            raise NotRenderable(f"node {node.id} predicates match no bundle")
        descriptors[node.id] = bundle.descriptors[0]

    edge_distance = {}
    for e in qc.edges:
        edge_distance[(e.src, e.dst)] = e.max_distance_m
        edge_distance[(e.dst, e.src)] = e.max_distance_m

    parts = []
    for component in _linearize_components(qc):
        text = f"a {descriptors[component[0]]}"
        for prev, nid in zip(component, component[1:]):
            d = _sentence_distance(edge_distance[(prev, nid)])
            text += f" within {d} of a {descriptors[nid]}"
        parts.append(text)
    sentence = "Find " + " and ".join(parts)
    if qc.area.kind == "named":
        sentence += f" in {qc.area.value}"
    return sentence


@dataclass
class DatasetRecord:
    id: str
    imr: ImrQuery
    prompt: str
    style: str
    sentence: str | None = None
    error: str | None = None

    def to_dict(self) -> dict:
        out = {"id": self.id, "imr": self.imr.to_dict(),
               "prompt": self.prompt, "style": self.style}
        if self.sentence is not None:
            out["sentence"] = self.sentence
        if self.error is not None:
            out["error"] = self.error
        return out


class HttpLlmClient:
    """Sentence-writing endpoint: POST {"prompt": ...} -> {"sentence": ...}."""

    def __init__(self, endpoint: str, timeout_s: float = 30.0,
                 session: requests.Session | None = None):
        self.endpoint = endpoint
        self.timeout_s = timeout_s
        self._session = session or requests.Session()

    def __call__(self, prompt: str) -> str:
        resp = self._session.post(self.endpoint, json={"prompt": prompt},
                                  timeout=self.timeout_s)
        resp.raise_for_status()
        sentence = resp.json().get("sentence")
        if not isinstance(sentence, str):
            raise ValueError("llm endpoint response lacks a sentence field")
        return sentence


MAX_TEMPLATE_RESAMPLES = 1000


def generate_dataset(n: int, config: GenConfig, vocabulary: Vocabulary,
                     cooccurrence: list[CooccurrenceEntry],
                     gazetteer: tuple[str, ...], mode: str = "template",
                     llm: Callable[[str], str] | None = None
                     ) -> Iterator[DatasetRecord]:
    """n seeded records. Template mode resamples queries the template grammar
    cannot phrase, so every record carries a parseable sentence; llm mode
    keeps every sample and records per-record failures instead."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if mode not in ("template", "llm"):
        raise ValueError(f"unknown mode {mode!r}")
    if mode == "llm" and llm is None:
        raise ValueError("llm mode needs a client")
    rng = random.Random(config.seed)

    for i in range(n):
        record_id = f"q-{i + 1:06d}"
        sentence = None
        error = None
        if mode == "template":
            for _ in range(MAX_TEMPLATE_RESAMPLES):
                q = sample_imr(rng, vocabulary, cooccurrence, gazetteer, config)
                try:
                    sentence = render_template_sentence(q, vocabulary, gazetteer)
                    break
                except NotRenderable:
                    continue
            else:
                raise RuntimeError("vocabulary cannot phrase any sampled query")
        else:
            q = sample_imr(rng, vocabulary, cooccurrence, gazetteer, config)
        style = rng.choice(STYLE_NAMES)
        prompt = render_prompt(q, style)
        if mode == "llm":
            try:
                sentence = llm(prompt)
            except Exception as exc:
                error = str(exc)
        yield DatasetRecord(id=record_id, imr=canonicalize(q), prompt=prompt,
                            style=style, sentence=sentence, error=error)


def write_dataset(records: Iterator[DatasetRecord], fh: IO[str]) -> int:
    count = 0
    for rec in records:
        fh.write(json.dumps(rec.to_dict(), ensure_ascii=False,
                            separators=(",", ":")) + "\n")
        count += 1
    return count


def read_dataset(fh: IO[str]) -> list[DatasetRecord]:
    records = []
    for lineno, line in enumerate(fh, start=1):
        line = line.strip()
        if not line:
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ValueError(f"line {lineno}: malformed dataset record: {exc}") from exc
        if "imr" not in rec:
            raise ValueError(f"line {lineno}: dataset record lacks imr")
        parsed, errors = validate(rec["imr"])
        if errors:
            raise ValueError(f"line {lineno}: invalid imr: " + "; ".join(errors))
        records.append(DatasetRecord(
            id=rec.get("id", f"q-{lineno:06d}"), imr=parsed,
            prompt=rec.get("prompt", ""), style=rec.get("style", ""),
            sentence=rec.get("sentence"), error=rec.get("error")))
    return records
