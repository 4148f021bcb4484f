"""Four-dimension report rubrics and weighted score aggregation."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Protocol

from drsandbox import SandboxError
from drsandbox.text import token_set

DIMENSIONS = ("comprehensiveness", "insight", "instruction_following", "readability")


class MissingCriterionScore(SandboxError):
    pass


@dataclass(frozen=True)
class Criterion:
    criterion: str
    weight: float
    explanation: str = ""


@dataclass(frozen=True)
class RubricSet:
    dimension_weight: Mapping[str, float]
    criterions: Mapping[str, tuple[Criterion, ...]]
    query: str = ""

    def __post_init__(self):
        missing = [d for d in DIMENSIONS if d not in self.dimension_weight or d not in self.criterions]
        if missing:
            raise ValueError(f"rubric lacks dimensions: {missing}")
        for d in DIMENSIONS:
            if not self.dimension_weight[d] > 0:
                raise ValueError(f"dimension weight for {d} must be > 0")
            if not self.criterions[d]:
                raise ValueError(f"dimension {d} has no criteria")
            for c in self.criterions[d]:
                if not c.weight > 0:
                    raise ValueError(f"criterion weight must be > 0: {c.criterion!r}")

    @classmethod
    def from_dict(cls, data: Mapping) -> "RubricSet":
        crit = {
            d: tuple(Criterion(c["criterion"], float(c["weight"]), c.get("explanation", "")) for c in items)
            for d, items in data["criterions"].items()
        }
        return cls({d: float(w) for d, w in data["dimension_weight"].items()}, crit, data.get("Query", ""))

    def to_dict(self) -> dict:
        return {
            "Query": self.query,
            "dimension_weight": dict(self.dimension_weight),
            "criterions": {
                d: [{"criterion": c.criterion, "explanation": c.explanation, "weight": c.weight} for c in cs]
                for d, cs in self.criterions.items()
            },
        }


def load_rubric(path: str | Path) -> RubricSet:
    return RubricSet.from_dict(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class CriterionScores:
    """Scores in [0, 10] keyed by dimension then criterion text."""

    target: Mapping[str, Mapping[str, float]]
    reference: Mapping[str, Mapping[str, float]] | None = None

    def __post_init__(self):
        for table in (self.target, self.reference or {}):
            for d, row in table.items():
                for c, s in row.items():
                    if not (0.0 <= s <= 10.0) or math.isnan(s):
                        raise ValueError(f"score for {d}/{c!r} outside [0, 10]: {s}")

    @classmethod
    def constant(cls, rubric: RubricSet, value: float) -> "CriterionScores":
        return cls({d: {c.criterion: value for c in rubric.criterions[d]} for d in DIMENSIONS})


def dimension_scores(scores: Mapping[str, Mapping[str, float]], rubric: RubricSet) -> dict[str, float]:
    out = {}
    for d in DIMENSIONS:
        row = scores.get(d, {})
        num = den = 0.0
        for c in rubric.criterions[d]:
            if c.criterion not in row:
                raise MissingCriterionScore(f"no score for {d}/{c.criterion!r}")
            num += c.weight * row[c.criterion]
            den += c.weight
        out[d] = num / den / 10.0
    return out


def combine_dimensions(values: Mapping[str, float], rubric: RubricSet) -> float:
    total = sum(rubric.dimension_weight[d] for d in DIMENSIONS)
    return sum(rubric.dimension_weight[d] * values[d] for d in DIMENSIONS) / total


def race_score(scores: CriterionScores, rubric: RubricSet) -> float:
    """Weighted rubric score of the target report, in [0, 1]."""
    return combine_dimensions(dimension_scores(scores.target, rubric), rubric)


# ---- judges -----------------------------------------------------------------


class RubricJudge(Protocol):
    def score(self, task: str, report: str, rubric: RubricSet, reference: str | None = None) -> CriterionScores: ...


@dataclass(frozen=True)
class LexicalRubricJudge:
    """Offline stand-in: a criterion scores 10 x the share of its content
    words (criterion plus explanation) that occur in the report."""

    def _score_one(self, report_tokens: frozenset[str], c: Criterion) -> float:
        want = token_set(f"{c.criterion} {c.explanation}")
        if not want:
            return 0.0
        return 10.0 * len(want & report_tokens) / len(want)

    def _table(self, report: str, rubric: RubricSet) -> dict[str, dict[str, float]]:
        toks = token_set(report)
        return {d: {c.criterion: self._score_one(toks, c) for c in rubric.criterions[d]} for d in DIMENSIONS}

    def score(self, task: str, report: str, rubric: RubricSet, reference: str | None = None) -> CriterionScores:
        ref = self._table(reference, rubric) if reference is not None else None
        return CriterionScores(self._table(report, rubric), ref)
