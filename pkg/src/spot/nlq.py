"""Natural-language sentence -> IMR query.

Two routes: a deterministic baseline grammar parser covering the structured
subset the sentence templates produce, and an HTTP client contract for a
trained translation model. Both return queries that pass validation.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass

import requests

from .imr import ImrArea, ImrEdge, ImrNode, ImrQuery, TagPredicate, validate
from .vocab import TagBundle, Vocabulary


class TranslationError(Exception):
    """Base for translation failures; counts against format validity."""


class NoObjectsFound(TranslationError):
    """No vocabulary descriptor matched; carries the unconsumed text."""

    def __init__(self, unconsumed: str):
        super().__init__(f"no objects found in: {unconsumed!r}")
        self.unconsumed = unconsumed


class FormatInvalid(TranslationError):
    """Translator produced a document that fails IMR validation."""

    def __init__(self, errors: list[str]):
        super().__init__("invalid IMR: " + "; ".join(errors))
        self.errors = list(errors)


class TransportError(TranslationError):
    """Endpoint unreachable or returned a non-success status."""


@dataclass
class ParserConfig:
    vocabulary: Vocabulary
    area_gazetteer: tuple[str, ...] = ()
    default_near_distance_m: float = 100.0

    def __post_init__(self):
        if self.default_near_distance_m <= 0:
            raise ValueError("default_near_distance_m must be positive")
        self.area_gazetteer = tuple(self.area_gazetteer)


# dot survives only between digits so "1.5 km" tokenizes as one number
_DOT_OUTSIDE_NUMBER = re.compile(r"\.(?!\d)|(?<!\d)\.")
_NON_TOKEN = re.compile(r"[^a-z0-9.\s]")
_NUMBER = re.compile(r"^\d+(\.\d+)?$")

UNIT_FACTORS = {
    "m": 1.0, "meter": 1.0, "meters": 1.0, "metre": 1.0, "metres": 1.0,
    "km": 1000.0, "kilometer": 1000.0, "kilometers": 1000.0,
    "kilometre": 1000.0, "kilometres": 1000.0,
}

# distance phrase shapes between two consecutive mentions; NUM/UNIT are slots
_DISTANCE_PATTERNS = (
    ("within", "NUM", "UNIT", "of"),
    ("no", "more", "than", "NUM", "UNIT", "from"),
    ("less", "than", "NUM", "UNIT", "from"),
    ("NUM", "UNIT", "away", "from"),
    ("NUM", "UNIT", "from"),
)
_PROXIMITY_PHRASES = (("near",), ("next", "to"), ("beside",), ("close", "to"))


def tokenize(sentence: str) -> list[str]:
    text = _NON_TOKEN.sub(" ", sentence.lower())
    text = _DOT_OUTSIDE_NUMBER.sub(" ", text)
    return text.split()


def _match_area_suffix(tokens: list[str], gazetteer: tuple[str, ...]
                       ) -> tuple[str, int] | None:
    """Longest trailing "in <name>" whose name is in the gazetteer.

    Returns (canonical gazetteer name, index of the consumed "in" token).
    """
    normalized = {tuple(tokenize(name)): name for name in gazetteer}
    for i, tok in enumerate(tokens):
        if tok == "in" and i + 1 < len(tokens):
            name = normalized.get(tuple(tokens[i + 1:]))
            if name is not None:
                return name, i
    return None


@dataclass
class _Mention:
    start: int
    end: int  # exclusive token index
    bundle: TagBundle


def _find_mentions(tokens: list[str], vocabulary: Vocabulary) -> list[_Mention]:
    mentions = []
    i = 0
    while i < len(tokens):
        hit = vocabulary.match_descriptor(tokens, i)
        if hit is None:
            i += 1
            continue
        bundle, n = hit
        mentions.append(_Mention(start=i, end=i + n, bundle=bundle))
        i += n
    return mentions


def bundle_filters(bundle: TagBundle) -> tuple[TagPredicate, ...]:
    """One eq per single-valued key, one_of when a key carries several values."""
    by_key: dict[str, list[str]] = {}
    for t in bundle.tags:
        key, _, value = t.partition("=")
        by_key.setdefault(key, []).append(value)
    filters = []
    for key in by_key:  # bundle order
        values = by_key[key]
        if len(values) == 1:
            filters.append(TagPredicate(key=key, op="eq", value=values[0]))
        else:
            filters.append(TagPredicate(key=key, op="one_of", value=tuple(values)))
    return tuple(filters)


def _match_gap_distance(gap: list[str], default_near_m: float) -> float | None:
    """First distance or proximity phrase in the token gap, scanned left to right."""
    for start in range(len(gap)):
        for pattern in _DISTANCE_PATTERNS:
            if start + len(pattern) > len(gap):
                continue
            value = None
            factor = None
            ok = True
            for offset, slot in enumerate(pattern):
                tok = gap[start + offset]
                if slot == "NUM":
                    if not _NUMBER.match(tok):
                        ok = False
                        break
                    value = float(tok)
                elif slot == "UNIT":
                    if tok not in UNIT_FACTORS:
                        ok = False
                        break
                    factor = UNIT_FACTORS[tok]
                elif tok != slot:
                    ok = False
                    break
            if ok and value is not None and value > 0:
                return value * factor
        for phrase in _PROXIMITY_PHRASES:
            if tuple(gap[start:start + len(phrase)]) == phrase:
                return default_near_m
    return None


def parse_baseline(sentence: str, config: ParserConfig) -> ImrQuery:
    """Grammar pipeline: tokenize, strip the area suffix, collect descriptor
    mentions, then read distance phrases between consecutive mentions."""
    tokens = tokenize(sentence)

    area = ImrArea(kind="bbox")
    suffix = _match_area_suffix(tokens, config.area_gazetteer)
    if suffix is not None:
        name, at = suffix
        area = ImrArea(kind="named", value=name)
        tokens = tokens[:at]

    mentions = _find_mentions(tokens, config.vocabulary)
    if not mentions:
        raise NoObjectsFound(" ".join(tokens))

    nodes = []
    for node_id, m in enumerate(mentions):
        nodes.append(ImrNode(id=node_id, name=m.bundle.descriptors[0],
                             filters=bundle_filters(m.bundle)))

    edges = []
    for i in range(len(mentions) - 1):
        gap = tokens[mentions[i].end:mentions[i + 1].start]
        distance = _match_gap_distance(gap, config.default_near_distance_m)
        if distance is not None:
            edges.append(ImrEdge(src=i, dst=i + 1, max_distance_m=distance))

    q = ImrQuery(area=area, nodes=tuple(nodes), edges=tuple(edges))
    parsed, errors = validate(q.to_dict())
    if errors:
        raise FormatInvalid(errors)
    return parsed


class BaselineTranslator:
    name = "baseline"

    def __init__(self, config: ParserConfig):
        self.config = config

    def translate(self, sentence: str) -> ImrQuery:
        return parse_baseline(sentence, self.config)


class ExternalTranslator:
    """POSTs {"sentence": ...} to an HTTP endpoint that returns an IMR document."""

    def __init__(self, endpoint: str, timeout_s: float = 10.0,
                 session: requests.Session | None = None):
        self.endpoint = endpoint
        self.timeout_s = timeout_s
        self.name = f"endpoint:{endpoint}"
        self._session = session or requests.Session()

    def translate(self, sentence: str) -> ImrQuery:
        try:
            resp = self._session.post(self.endpoint, json={"sentence": sentence},
                                      timeout=self.timeout_s)
        except requests.RequestException as exc:
            raise TransportError(f"translator endpoint failed: {exc}") from exc
        if resp.status_code != 200:
            raise TransportError(
                f"translator endpoint returned HTTP {resp.status_code}")
        try:
            document = resp.json()
        except ValueError as exc:
            raise FormatInvalid([f"response is not JSON: {exc}"]) from exc
        parsed, errors = validate(document)
        if errors:
            raise FormatInvalid(errors)
        return parsed


class MockTranslator:
    """Deterministic fixture table for tests: exact sentence -> IMR document."""

    name = "mock"

    def __init__(self, table: dict[str, dict]):
        self.table = dict(table)

    @classmethod
    def from_file(cls, path: str) -> "MockTranslator":
        table = {}
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                rec = json.loads(line)
                table[rec["sentence"]] = rec["imr"]
        return cls(table)

    def translate(self, sentence: str) -> ImrQuery:
        document = self.table.get(sentence)
        if document is None:
            raise TranslationError(f"no fixture for sentence: {sentence!r}")
        parsed, errors = validate(document)
        if errors:
            raise FormatInvalid(errors)
        return parsed


def get_translator(selector: str, config: ParserConfig):
    """CLI selector: baseline | endpoint:URL | mock:FILE."""
    if selector == "baseline":
        return BaselineTranslator(config)
    if selector.startswith("endpoint:"):
        return ExternalTranslator(selector[len("endpoint:"):])
    if selector.startswith("mock:"):
        return MockTranslator.from_file(selector[len("mock:"):])
    raise ValueError(f"unknown translator {selector!r}")
