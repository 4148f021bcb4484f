"""Report-level rewards: rubric aggregation, citations, format checks, tense errors."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from importlib import resources
from typing import Mapping

from drsandbox.reportrewards.judge import (
    ChatEndpoint,
    RemoteAttributionJudge,
    RemoteRubricJudge,
    load_prompt,
    render_scoring_prompt,
    render_verification_prompt,
)
from drsandbox.reportrewards.report import (
    Citation,
    Heading,
    Report,
    citation_reward,
    citation_reward_diagnostics,
    citation_validity,
    count_valid,
    format_reward_report,
    list_numbering_ok,
    parse_report,
    report_reward,
    table_cells,
    table_valid,
    violations,
)
from drsandbox.reportrewards.rubric import (
    DIMENSIONS,
    Criterion,
    CriterionScores,
    LexicalRubricJudge,
    MissingCriterionScore,
    RubricJudge,
    RubricSet,
    combine_dimensions,
    dimension_scores,
    load_rubric,
    race_score,
)
from drsandbox.reportrewards.temporal import (
    ATTRIBUTION,
    PREDICTIVE,
    Candidate,
    TemporalFinding,
    TimePoint,
    candidate_in_sentence,
    context_window,
    count_errors,
    detect_temporal_errors,
    detect_temporal_stage1,
    find_attribution,
    rule_attribution,
    split_sentences,
    time_points,
    verify_attribution,
)


@dataclass(frozen=True)
class ReportScore:
    race: float
    cite: float
    format: int
    total: float
    n_gen: int
    n_valid: int
    n_ref: int
    violations: dict
    diagnostics: dict

    def to_dict(self) -> dict:
        return asdict(self)


def score_report(
    report: str,
    rubric: RubricSet,
    reference: str,
    sources: Mapping[str, str] | None = None,
    judge: RubricJudge | None = None,
    tau: float = 0.3,
    lambda_c: float = 1.0,
    lambda_f: float = 0.1,
) -> ReportScore:
    """Composite report reward against a paired reference report.

    Without ``sources`` every citation that resolves to a reference entry is
    checked against the entry text itself.
    """
    judge = judge or LexicalRubricJudge()
    r, ref = parse_report(report), parse_report(reference)
    race = race_score(judge.score(rubric.query, report, rubric, reference), rubric)
    src = dict(sources) if sources is not None else {t: t for t in r.references.values()}
    n_gen, n_valid, n_ref = r.n_citations, count_valid(r, src, tau), ref.n_citations
    diag = citation_reward_diagnostics(n_gen, n_valid, n_ref)
    fmt = format_reward_report(r)
    total = report_reward(race, diag["reward"], fmt, lambda_c, lambda_f)
    return ReportScore(race, diag["reward"], fmt, total, n_gen, n_valid, n_ref, violations(r), diag)


def load_temporal_fixture() -> list[dict]:
    """Bundled labeled passages for the tense detector (sentence indices per label)."""
    text = resources.files("drsandbox.reportrewards").joinpath("assets", "temporal_fixture.jsonl").read_text()
    return [json.loads(line) for line in text.splitlines() if line.strip()]
