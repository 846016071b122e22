"""Tag-bundle vocabulary and frequent-companion-tag mining.

A bundle groups visually similar OSM tags under natural descriptor phrases;
a feature matches a bundle if it carries at least one of the bundle's tags.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass
from typing import IO, Iterable


class VocabularyError(ValueError):
    pass


@dataclass(frozen=True)
class TagBundle:
    id: str
    tags: tuple[str, ...]  # key=value pairs, any-of semantics
    descriptors: tuple[str, ...]  # lowercase phrases

    def matches(self, tags: dict[str, str]) -> bool:
        return any(f"{k}={v}" in self.tags for k, v in tags.items())


def _check_bundle(rec: dict, lineno: int) -> TagBundle:
    try:
        bid = rec["id"]
        tags = list(rec["tags"])
        descriptors = [d.lower() for d in rec["descriptors"]]
    except (KeyError, TypeError) as exc:
        raise VocabularyError(f"line {lineno}: malformed bundle record: {exc}") from exc
    if not bid or not tags or not descriptors:
        raise VocabularyError(f"line {lineno}: bundle fields must be non-empty")
    for t in tags:
        key, sep, value = t.partition("=")
        if not sep or not key or not value or "=" in value:
            raise VocabularyError(f"line {lineno}: bad tag {t!r} (want key=value)")
    if len(set(descriptors)) != len(descriptors):
        raise VocabularyError(f"line {lineno}: duplicate descriptor within bundle {bid!r}")
    return TagBundle(id=bid, tags=tuple(tags), descriptors=tuple(descriptors))


class Vocabulary:
    """Loaded bundle set with a total descriptor -> bundle lookup."""

    def __init__(self, bundles: list[TagBundle]):
        if not bundles:
            raise VocabularyError("vocabulary must be non-empty")
        self.bundles = list(bundles)
        self.by_id: dict[str, TagBundle] = {}
        self._by_descriptor: dict[tuple[str, ...], TagBundle] = {}
        self._max_phrase_len = 1
        for b in bundles:
            if b.id in self.by_id:
                raise VocabularyError(f"duplicate bundle id {b.id!r}")
            self.by_id[b.id] = b
            for d in b.descriptors:
                toks = tuple(d.split())
                if toks in self._by_descriptor:
                    raise VocabularyError(
                        f"descriptor {d!r} claimed by both "
                        f"{self._by_descriptor[toks].id!r} and {b.id!r}")
                self._by_descriptor[toks] = b
                self._max_phrase_len = max(self._max_phrase_len, len(toks))

    def lookup(self, phrase: str) -> TagBundle | None:
        return self._by_descriptor.get(tuple(phrase.lower().split()))

    def match_descriptor(self, tokens: list[str], position: int) -> tuple[TagBundle, int] | None:
        """Longest descriptor phrase starting at `position`, or None.

        Whole-token matching over lowercase tokens; when the exact phrase
        misses, one trailing 's' is stripped and retried (trivial
        singularization).
        """
        limit = min(self._max_phrase_len, len(tokens) - position)
        for length in range(limit, 0, -1):
            phrase = tuple(tokens[position:position + length])
            bundle = self._by_descriptor.get(phrase)
            if bundle is None and phrase[-1].endswith("s"):
                singular = phrase[:-1] + (phrase[-1][:-1],)
                bundle = self._by_descriptor.get(singular)
            if bundle is not None:
                return bundle, length
        return None

    def find_by_tag(self, tag: str) -> TagBundle | None:
        """First bundle (load order) carrying the given key=value tag."""
        for b in self.bundles:
            if tag in b.tags:
                return b
        return None


def read_bundles(fh: IO[str]) -> Vocabulary:
    bundles = []
    for lineno, line in enumerate(fh, start=1):
        line = line.strip()
        if not line:
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise VocabularyError(f"line {lineno}: malformed JSON: {exc}") from exc
        bundles.append(_check_bundle(rec, lineno))
    return Vocabulary(bundles)


def load_bundles(path: str) -> Vocabulary:
    with open(path, encoding="utf-8") as fh:
        return read_bundles(fh)


@dataclass(frozen=True)
class CooccurrenceEntry:
    bundle_id: str
    companion: str  # key=value
    count: int
    freq: float  # count / bundle_match_count

    def to_dict(self) -> dict:
        return {"bundle": self.bundle_id, "companion": self.companion,
                "count": self.count, "freq": self.freq}


def mine_cooccurrence(features: Iterable, vocabulary: Vocabulary,
                      min_count: int = 10, top_k: int = 20) -> list[CooccurrenceEntry]:
    """Per bundle: companion tags on matching features, frequent ones first.

    Deterministic: bundles in load order; entries sorted by count desc then
    companion string; counts below min_count dropped; truncated to top_k.
    """
    if min_count < 1 or top_k < 1:
        raise ValueError("min_count and top_k must be >= 1")
    feature_list = list(features)
    out: list[CooccurrenceEntry] = []
    for bundle in vocabulary.bundles:
        own = set(bundle.tags)
        match_count = 0
        companions: Counter[str] = Counter()
        for f in feature_list:
            if not bundle.matches(f.tags):
                continue
            match_count += 1
            for k, v in f.tags.items():
                tag = f"{k}={v}"
                if tag not in own:
                    companions[tag] += 1
        if not match_count:
            continue
        survivors = [(tag, n) for tag, n in companions.items() if n >= min_count]
        survivors.sort(key=lambda item: (-item[1], item[0]))
        for tag, n in survivors[:top_k]:
            out.append(CooccurrenceEntry(bundle_id=bundle.id, companion=tag,
                                         count=n, freq=n / match_count))
    return out


def write_cooccurrence(entries: list[CooccurrenceEntry], fh: IO[str]) -> None:
    for e in entries:
        fh.write(json.dumps(e.to_dict(), ensure_ascii=False, separators=(",", ":")) + "\n")


def read_cooccurrence(fh: IO[str]) -> list[CooccurrenceEntry]:
    entries = []
    for lineno, line in enumerate(fh, start=1):
        line = line.strip()
        if not line:
            continue
        try:
            rec = json.loads(line)
            entries.append(CooccurrenceEntry(
                bundle_id=rec["bundle"], companion=rec["companion"],
                count=int(rec["count"]), freq=float(rec["freq"])))
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise VocabularyError(f"line {lineno}: bad co-occurrence record: {exc}") from exc
    return entries
