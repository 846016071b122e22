"""The intermediate graph-query representation.

A query is an area plus object nodes (conjunctive tag predicates) plus
undirected maximum-distance edges. This module owns the canonical JSON
codec, validation, canonicalization, and the semantic-accuracy scorer.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, replace
from typing import Any

OPS = ("eq", "one_of", "exists")

IMR_VERSION = 1


@dataclass(frozen=True)
class TagPredicate:
    key: str
    op: str  # eq | one_of | exists
    value: Any = None  # str (eq) | tuple[str, ...] (one_of) | None (exists)

    def to_dict(self) -> dict:
        doc = {"key": self.key, "op": self.op}
        if self.op == "eq":
            doc["value"] = self.value
        elif self.op == "one_of":
            doc["value"] = list(self.value)
        return doc

    def canonical(self) -> str:
        """Stable string form used for node signatures and Jaccard scoring."""
        if self.op == "eq":
            return f"{self.key}={self.value}"
        if self.op == "one_of":
            return f"{self.key}∈{{{','.join(sorted(self.value))}}}"
        return f"{self.key}=*"


@dataclass(frozen=True)
class ImrNode:
    id: int
    name: str
    filters: tuple[TagPredicate, ...]

    def to_dict(self) -> dict:
        return {"id": self.id, "name": self.name,
                "filters": [f.to_dict() for f in self.filters]}

    def signature(self) -> str:
        return "&".join(sorted(f.canonical() for f in self.filters))


@dataclass(frozen=True)
class ImrEdge:
    src: int
    dst: int
    max_distance_m: float

    def to_dict(self) -> dict:
        return {"src": self.src, "dst": self.dst,
                "maxDistanceM": float(self.max_distance_m)}


@dataclass(frozen=True)
class ImrArea:
    kind: str  # named | bbox
    value: str = ""

    def to_dict(self) -> dict:
        if self.kind == "named":
            return {"type": "named", "value": self.value}
        return {"type": "bbox"}


@dataclass(frozen=True)
class ImrQuery:
    area: ImrArea
    nodes: tuple[ImrNode, ...]
    edges: tuple[ImrEdge, ...] = ()
    version: int = IMR_VERSION

    def to_dict(self) -> dict:
        return {"version": self.version, "area": self.area.to_dict(),
                "nodes": [n.to_dict() for n in self.nodes],
                "edges": [e.to_dict() for e in self.edges]}


class ImrSyntaxError(ValueError):
    """Text is not parseable JSON; carries the failure location."""

    def __init__(self, message: str, line: int, column: int, pos: int):
        super().__init__(f"{message} (line {line}, column {column})")
        self.line = line
        self.column = column
        self.pos = pos


class ImrValidationError(ValueError):
    """Document parsed but violates IMR invariants."""

    def __init__(self, errors: list[str]):
        super().__init__("; ".join(errors))
        self.errors = list(errors)


def _validate_predicate(doc: Any, path: str, errors: list[str]) -> TagPredicate | None:
    if not isinstance(doc, dict):
        errors.append(f"{path}: filter must be an object")
        return None
    key = doc.get("key")
    op = doc.get("op")
    ok = True
    if not isinstance(key, str) or not key:
        errors.append(f"{path}/key: must be a non-empty string")
        ok = False
    if op not in OPS:
        errors.append(f"{path}/op: must be one of {list(OPS)}")
        return None
    value = doc.get("value")
    if op == "eq":
        if not isinstance(value, str):
            errors.append(f"{path}/value: eq requires a string value")
            ok = False
    elif op == "one_of":
        if (not isinstance(value, list) or not value
                or not all(isinstance(v, str) for v in value)):
            errors.append(f"{path}/value: one_of requires a non-empty string list")
            ok = False
        elif len(set(value)) != len(value):
            errors.append(f"{path}/value: one_of values must be duplicate-free")
            ok = False
    else:  # exists
        if "value" in doc and value is not None:
            errors.append(f"{path}/value: exists takes no value")
            ok = False
    if not ok:
        return None
    if op == "one_of":
        return TagPredicate(key=key, op=op, value=tuple(value))
    if op == "eq":
        return TagPredicate(key=key, op=op, value=value)
    return TagPredicate(key=key, op=op)


def _validate_node(doc: Any, path: str, errors: list[str]) -> ImrNode | None:
    if not isinstance(doc, dict):
        errors.append(f"{path}: node must be an object")
        return None
    nid = doc.get("id")
    ok = True
    if not isinstance(nid, int) or isinstance(nid, bool) or nid < 0:
        errors.append(f"{path}/id: must be a non-negative integer")
        ok = False
    name = doc.get("name", "")
    if not isinstance(name, str):
        errors.append(f"{path}/name: must be a string")
        name = ""
    raw_filters = doc.get("filters")
    if not isinstance(raw_filters, list) or not raw_filters:
        errors.append(f"{path}/filters: must be a non-empty list")
        return None
    filters = []
    for i, fdoc in enumerate(raw_filters):
        pred = _validate_predicate(fdoc, f"{path}/filters/{i}", errors)
        if pred is not None:
            filters.append(pred)
    if len(filters) != len(raw_filters) or not ok:
        return None
    eq_values: dict[str, str] = {}
    for pred in filters:
        if pred.op != "eq":
            continue
        if pred.key in eq_values and eq_values[pred.key] != pred.value:
            errors.append(
                f"{path}/filters: conflicting eq predicates for key {pred.key!r}")
            return None
        eq_values[pred.key] = pred.value
    return ImrNode(id=nid, name=name, filters=tuple(filters))


def validate(document: Any) -> tuple[ImrQuery | None, list[str]]:
    """Check a candidate document; returns (query, []) or (None, violations).

    Every violation carries a JSON-path-style locator.
    """
    if isinstance(document, ImrQuery):
        document = document.to_dict()
    errors: list[str] = []
    if not isinstance(document, dict):
        return None, ["/: document must be an object"]
    if document.get("version") != IMR_VERSION:
        errors.append(f"/version: must be {IMR_VERSION}")

    area_doc = document.get("area")
    area = None
    if not isinstance(area_doc, dict):
        errors.append("/area: must be an object")
    else:
        kind = area_doc.get("type")
        if kind == "named":
            value = area_doc.get("value")
            if not isinstance(value, str) or not value:
                errors.append("/area/value: named area requires a non-empty name")
            else:
                area = ImrArea(kind="named", value=value)
        elif kind == "bbox":
            area = ImrArea(kind="bbox")
        else:
            errors.append("/area/type: must be 'named' or 'bbox'")

    nodes_doc = document.get("nodes")
    nodes: list[ImrNode] = []
    # Edge endpoints are checked against every id declared in the document,
    # even on nodes rejected for other reasons, so one bad node does not
    # cascade into spurious unknown-node errors.
    node_ids: set[int] = set()
    if not isinstance(nodes_doc, list) or not nodes_doc:
        errors.append("/nodes: must be a non-empty list")
    else:
        seen_ids = set()
        for i, ndoc in enumerate(nodes_doc):
            if isinstance(ndoc, dict):
                nid = ndoc.get("id")
                if isinstance(nid, int) and not isinstance(nid, bool) and nid >= 0:
                    node_ids.add(nid)
            node = _validate_node(ndoc, f"/nodes/{i}", errors)
            if node is None:
                continue
            if node.id in seen_ids:
                errors.append(f"/nodes/{i}/id: duplicate id {node.id}")
                continue
            seen_ids.add(node.id)
            nodes.append(node)
    edges_doc = document.get("edges", [])
    edges: list[ImrEdge] = []
    if not isinstance(edges_doc, list):
        errors.append("/edges: must be a list")
    else:
        seen_pairs = set()
        for i, edoc in enumerate(edges_doc):
            if not isinstance(edoc, dict):
                errors.append(f"/edges/{i}: edge must be an object")
                continue
            src = edoc.get("src")
            dst = edoc.get("dst")
            dist = edoc.get("maxDistanceM")
            bad = False
            for endpoint, label in ((src, "src"), (dst, "dst")):
                if not isinstance(endpoint, int) or isinstance(endpoint, bool):
                    errors.append(f"/edges/{i}/{label}: must be an integer node id")
                    bad = True
                elif endpoint not in node_ids:
                    errors.append(f"/edges/{i}/{label}: unknown node {endpoint}")
                    bad = True
            if not bad and src == dst:
                errors.append(f"/edges/{i}: src and dst must differ")
                bad = True
            if (not isinstance(dist, (int, float)) or isinstance(dist, bool)
                    or not math.isfinite(dist) or dist <= 0):
                errors.append(f"/edges/{i}/maxDistanceM: must be a positive number")
                bad = True
            if bad:
                continue
            pair = (min(src, dst), max(src, dst))
            if pair in seen_pairs:
                errors.append(f"/edges/{i}: duplicate edge {pair[0]}-{pair[1]}")
                continue
            seen_pairs.add(pair)
            edges.append(ImrEdge(src=src, dst=dst, max_distance_m=float(dist)))

    if errors or area is None:
        return None, errors
    return ImrQuery(area=area, nodes=tuple(nodes), edges=tuple(edges)), errors


def is_valid(document: Any) -> bool:
    return validate(document)[0] is not None


def _canonical_predicates(node: ImrNode) -> ImrNode:
    fixed = []
    for f in node.filters:
        if f.op == "one_of":
            fixed.append(replace(f, value=tuple(sorted(f.value))))
        else:
            fixed.append(f)
    fixed.sort(key=lambda f: (f.key, f.op, f.canonical()))
    return replace(node, filters=tuple(fixed))


_MAX_TIE_PERMUTATIONS = 5040


def canonicalize(q: ImrQuery) -> ImrQuery:
    """Rewrite a valid query into its canonical form.

    Within nodes, predicates (and one_of values) are sorted; nodes are
    sorted by predicate signature (ties broken by edge structure) and
    renumbered 0..n-1; edges are rewritten src < dst and sorted. Identical
    canonical forms result from any node permutation of the same query.
    """
    nodes = [_canonical_predicates(n) for n in q.nodes]
    n = len(nodes)
    adj: dict[int, list[tuple[float, int]]] = {node.id: [] for node in nodes}
    for e in q.edges:
        adj[e.src].append((e.max_distance_m, e.dst))
        adj[e.dst].append((e.max_distance_m, e.src))

    # Refine sort keys with neighborhood structure so that identical-filter
    # nodes with different edges still order deterministically.
    keys = {node.id: node.signature() for node in nodes}
    for _ in range(n):
        keys = {
            node.id: json.dumps(
                [keys[node.id], sorted((d, keys[other]) for d, other in adj[node.id])],
                sort_keys=True)
            for node in nodes
        }

    groups: dict[str, list[ImrNode]] = {}
    for node in nodes:
        groups.setdefault(keys[node.id], []).append(node)
    ordered_keys = sorted(groups)

    def build(order: list[ImrNode]) -> ImrQuery:
        renumber = {node.id: i for i, node in enumerate(order)}
        new_nodes = tuple(replace(node, id=i) for i, node in enumerate(order))
        new_edges = []
        for e in q.edges:
            a, b = renumber[e.src], renumber[e.dst]
            if a > b:
                a, b = b, a
            new_edges.append(ImrEdge(src=a, dst=b, max_distance_m=e.max_distance_m))
        new_edges.sort(key=lambda e: (e.src, e.dst, e.max_distance_m))
        return replace(q, nodes=new_nodes, edges=tuple(new_edges))

    total = 1
    for g in groups.values():
        total *= math.factorial(len(g))
        if total > _MAX_TIE_PERMUTATIONS:
            break
    if total == 1 or total > _MAX_TIE_PERMUTATIONS:
        order = [node for key in ordered_keys for node in groups[key]]
        return build(order)

    # Ambiguous ties: pick the permutation whose serialized form is smallest.
    best = None
    best_text = None
    for combo in itertools.product(*(itertools.permutations(groups[k]) for k in ordered_keys)):
        order = [node for group in combo for node in group]
        candidate = build(order)
        text = encode(candidate)
        if best_text is None or text < best_text:
            best, best_text = candidate, text
    return best


def encode(q: ImrQuery) -> str:
    """Deterministic canonical-serialization text (UTF-8 JSON, fixed field order)."""
    return json.dumps(q.to_dict(), ensure_ascii=False, separators=(",", ":"))


def decode(text: str) -> ImrQuery:
    """Parse and validate serialized IMR text."""
    try:
        document = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ImrSyntaxError(exc.msg, exc.lineno, exc.colno, exc.pos) from exc
    query, errors = validate(document)
    if query is None:
        raise ImrValidationError(errors)
    return query


@dataclass(frozen=True)
class ScoreBreakdown:
    exact: bool
    area: int  # 0 | 1
    node_f1: float
    edge_f1: float
    overall: float

    def to_dict(self) -> dict:
        return {"exact": self.exact, "area": self.area, "node_f1": self.node_f1,
                "edge_f1": self.edge_f1, "overall": self.overall}


def _jaccard(a: frozenset, b: frozenset) -> float:
    if not a and not b:
        return 1.0
    return len(a & b) / len(a | b)


def _best_alignment(pred_sets: list[frozenset], gold_sets: list[frozenset],
                    exhaustive_limit: int = 6) -> tuple[float, dict[int, int]]:
    """Injective pred->gold index mapping maximizing total Jaccard."""
    np_, ng = len(pred_sets), len(gold_sets)
    if max(np_, ng) <= exhaustive_limit:
        best_total, best_map = -1.0, {}
        if np_ <= ng:
            for perm in itertools.permutations(range(ng), np_):
                total = sum(_jaccard(pred_sets[i], gold_sets[j])
                            for i, j in enumerate(perm))
                if total > best_total:
                    best_total = total
                    best_map = dict(enumerate(perm))
        else:
            for perm in itertools.permutations(range(np_), ng):
                total = sum(_jaccard(pred_sets[i], gold_sets[j])
                            for j, i in enumerate(perm))
                if total > best_total:
                    best_total = total
                    best_map = {i: j for j, i in enumerate(perm)}
        return best_total, best_map
    # Greedy best-pair fallback for oversized queries.
    pairs = sorted(
        ((-_jaccard(pred_sets[i], gold_sets[j]), i, j)
         for i in range(np_) for j in range(ng)))
    used_p, used_g, total, mapping = set(), set(), 0.0, {}
    for neg, i, j in pairs:
        if i in used_p or j in used_g:
            continue
        used_p.add(i)
        used_g.add(j)
        mapping[i] = j
        total += -neg
        if len(mapping) == min(np_, ng):
            break
    return total, mapping


def semantic_score(pred: ImrQuery, gold: ImrQuery) -> ScoreBreakdown:
    """Score a predicted query against gold on area, nodes, and edges.

    Node alignment maximizes summed Jaccard over canonical predicate
    strings; an edge matches when its endpoints map onto a gold edge and
    its distance is within 10% relative of gold's.
    """
    pc = canonicalize(pred)
    gc = canonicalize(gold)
    area = 1 if pc.area == gc.area else 0

    pred_sets = [frozenset(f.canonical() for f in n.filters) for n in pc.nodes]
    gold_sets = [frozenset(f.canonical() for f in n.filters) for n in gc.nodes]
    total_jac, mapping = _best_alignment(pred_sets, gold_sets)
    node_f1 = 2.0 * total_jac / (len(pred_sets) + len(gold_sets))

    gold_edges = {(min(e.src, e.dst), max(e.src, e.dst)): e.max_distance_m
                  for e in gc.edges}
    matches = 0
    for e in pc.edges:
        if e.src not in mapping or e.dst not in mapping:
            continue
        a, b = mapping[e.src], mapping[e.dst]
        pair = (min(a, b), max(a, b))
        if pair not in gold_edges:
            continue
        if abs(e.max_distance_m - gold_edges[pair]) <= 0.1 * gold_edges[pair]:
            matches += 1
    if not pc.edges and not gc.edges:
        edge_f1 = 1.0
    elif not pc.edges or not gc.edges:
        edge_f1 = 0.0
    else:
        precision = matches / len(pc.edges)
        recall = matches / len(gc.edges)
        edge_f1 = (0.0 if precision + recall == 0
                   else 2.0 * precision * recall / (precision + recall))

    overall = (area + node_f1 + edge_f1) / 3.0
    return ScoreBreakdown(exact=pc == gc, area=area, node_f1=node_f1,
                          edge_f1=edge_f1, overall=overall)
