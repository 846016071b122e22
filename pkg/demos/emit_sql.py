"""From a sentence to a PostGIS query, without touching a database.

Usage:

    python3 demos/emit_sql.py [sentence]
"""

from __future__ import annotations

import sys
from importlib import resources

from spot.engine import emit_sql
from spot.imr import canonicalize, encode
from spot.nlq import ParserConfig, parse_baseline
from spot.vocab import load_bundles

DATA = resources.files("spot") / "data"
DEFAULT = "Find a restaurant within 200 m of a fountain in Bonn"


def main() -> None:
    sentence = " ".join(sys.argv[1:]) or DEFAULT
    print(f"Sentence: {sentence!r}")

    lines = (DATA / "gazetteer.txt").read_text(encoding="utf-8").splitlines()
    gazetteer = tuple(s.strip() for s in lines
                      if s.strip() and not s.startswith("#"))
    config = ParserConfig(vocabulary=load_bundles(str(DATA / "bundles.jsonl")),
                          area_gazetteer=gazetteer)
    query = canonicalize(parse_baseline(sentence, config))

    print("\nCanonical IMR:")
    print(encode(query))
    print("\nSQL:")
    print(emit_sql(query))


if __name__ == "__main__":
    main()
