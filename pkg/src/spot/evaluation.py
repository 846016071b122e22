"""Translator scoring against a gold dataset.

Two criteria: whether the translator's output is a valid query document at
all (format validity) and how close valid outputs come to the gold query
(semantic score). Invalid outputs are reported both ways: excluded from the
semantic means, and as zeros in the strict variants.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import IO

from .datagen import DatasetRecord
from .imr import semantic_score
from .nlq import TranslationError


@dataclass
class EvalRow:
    id: str
    format_valid: bool
    error: str | None = None
    score: dict | None = None

    def to_dict(self) -> dict:
        out = {"id": self.id, "format_valid": self.format_valid}
        if self.error is not None:
            out["error"] = self.error
        if self.score is not None:
            out["score"] = self.score
        return out


@dataclass
class EvalReport:
    translator: str
    n_total: int
    n_format_valid: int
    format_validity_rate: float
    mean_overall: float
    mean_node_f1: float
    mean_edge_f1: float
    area_accuracy: float
    exact_match_rate: float
    strict_mean_overall: float
    strict_exact_match_rate: float
    rows: list[EvalRow] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "translator": self.translator,
            "n_total": self.n_total,
            "n_format_valid": self.n_format_valid,
            "format_validity_rate": self.format_validity_rate,
            "mean_overall": self.mean_overall,
            "mean_node_f1": self.mean_node_f1,
            "mean_edge_f1": self.mean_edge_f1,
            "area_accuracy": self.area_accuracy,
            "exact_match_rate": self.exact_match_rate,
            "strict_mean_overall": self.strict_mean_overall,
            "strict_exact_match_rate": self.strict_exact_match_rate,
            "rows": [r.to_dict() for r in self.rows],
        }


def _mean(values: list[float]) -> float:
    return sum(values) / len(values) if values else 0.0


def evaluate(translator, records: list[DatasetRecord]) -> EvalReport:
    """Run the translator over every record's sentence and score against its
    gold query; rows keep input order."""
    rows: list[EvalRow] = []
    breakdowns = []
    for rec in records:
        if rec.sentence is None:
            raise ValueError(f"record {rec.id} has no sentence")
        try:
            predicted = translator.translate(rec.sentence)
        except TranslationError as exc:
            rows.append(EvalRow(id=rec.id, format_valid=False, error=str(exc)))
            continue
        score = semantic_score(predicted, rec.imr)
        breakdowns.append(score)
        rows.append(EvalRow(id=rec.id, format_valid=True, score=score.to_dict()))

    n_total = len(records)
    n_valid = len(breakdowns)
    exact_count = sum(1 for s in breakdowns if s.exact)
    overalls = [s.overall for s in breakdowns]
    return EvalReport(
        translator=getattr(translator, "name", translator.__class__.__name__),
        n_total=n_total,
        n_format_valid=n_valid,
        format_validity_rate=n_valid / n_total if n_total else 0.0,
        mean_overall=_mean(overalls),
        mean_node_f1=_mean([s.node_f1 for s in breakdowns]),
        mean_edge_f1=_mean([s.edge_f1 for s in breakdowns]),
        area_accuracy=_mean([float(s.area) for s in breakdowns]),
        exact_match_rate=exact_count / n_valid if n_valid else 0.0,
        strict_mean_overall=sum(overalls) / n_total if n_total else 0.0,
        strict_exact_match_rate=exact_count / n_total if n_total else 0.0,
        rows=rows,
    )


def write_report(report: EvalReport, fh: IO[str]) -> None:
    json.dump(report.to_dict(), fh, ensure_ascii=False, indent=2)
    fh.write("\n")
