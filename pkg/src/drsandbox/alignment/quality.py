"""Quality scoring, D+/D- partition and within-input preference pairs."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from drsandbox.reportrewards import (
    LexicalRubricJudge,
    RubricJudge,
    RubricSet,
    citation_reward,
    count_errors,
    count_valid,
    detect_temporal_errors,
    format_reward_report,
    parse_report,
    race_score,
)


@dataclass(frozen=True)
class QualityWeights:
    w_judge: float = 1.0
    lambda_f: float = 0.1
    lambda_c: float = 0.1
    temporal_penalty: float = 0.05
    tau: float = 0.3

    def __post_init__(self):
        if min(self.w_judge, self.lambda_f, self.lambda_c, self.temporal_penalty) < 0:
            raise ValueError("quality weights must be >= 0")


@dataclass(frozen=True)
class QualityScore:
    judge: float
    rule: float
    combined: float
    weights: QualityWeights
    detail: dict = field(default_factory=dict)

    def __post_init__(self):
        if not 0.0 <= self.judge <= 1.0:
            raise ValueError("judge component must lie in [0, 1]")
        if self.rule > 0:
            raise ValueError("rule component must be <= 0")
        if abs(self.combined - (self.weights.w_judge * self.judge + self.rule)) > 1e-12:
            raise ValueError("combined score inconsistent with its components")


def quality_score(
    report: str,
    rubric: RubricSet,
    reference: str,
    sources: Mapping[str, str] | None = None,
    judges: Sequence[RubricJudge] | None = None,
    weights: QualityWeights = QualityWeights(),
    now=None,
) -> QualityScore:
    """s = w_judge * mean judge RACE + lambda_f R_format + lambda_c min(R_cite, 0) - penalty * tense errors.

    Judge failures propagate; temporal errors are only counted when ``now`` is given.
    """
    judges = list(judges) if judges else [LexicalRubricJudge()]
    judge = float(np.mean([race_score(j.score(rubric.query, report, rubric, reference), rubric) for j in judges]))
    r = parse_report(report)
    src = dict(sources) if sources is not None else {t: t for t in r.references.values()}
    n_gen, n_valid, n_ref = r.n_citations, count_valid(r, src, weights.tau), parse_report(reference).n_citations
    cite = citation_reward(n_gen, n_valid, n_ref)
    fmt = format_reward_report(r)
    tense = count_errors(detect_temporal_errors(report, now)) if now is not None else 0
    rule = weights.lambda_f * fmt + weights.lambda_c * min(cite, 0.0) - weights.temporal_penalty * tense
    return QualityScore(
        judge, rule, weights.w_judge * judge + rule, weights,
        {"format": fmt, "cite": cite, "n_gen": n_gen, "n_valid": n_valid, "n_ref": n_ref, "tense_errors": tense},
    )


@dataclass(frozen=True)
class Scored:
    sample: object  # alignment.samples.Sample
    score: float

    @property
    def input_id(self) -> str:
        return self.sample.input_id


def partition(
    scored: Sequence[Scored],
    tau_hi: float | None = None,
    tau_lo: float | None = None,
    hi_pct: float = 70.0,
    lo_pct: float = 30.0,
) -> tuple[list[Scored], list[Scored]]:
    """s >= tau_hi goes to D+, s <= tau_lo to D-, the middle band is dropped.

    Thresholds left as None default to the given percentiles of each input's
    own scores. When both thresholds coincide, ties with them are dropped so
    the two sets stay disjoint.
    """
    if tau_hi is not None and tau_lo is not None and tau_lo > tau_hi:
        raise ValueError("need tau_lo <= tau_hi")
    if not 0 <= lo_pct <= hi_pct <= 100:
        raise ValueError("need 0 <= lo_pct <= hi_pct <= 100")
    groups: dict[str, list[Scored]] = {}
    for s in scored:
        groups.setdefault(s.input_id, []).append(s)
    plus, minus = [], []
    for items in groups.values():
        vals = np.array([s.score for s in items])
        hi = tau_hi if tau_hi is not None else float(np.percentile(vals, hi_pct))
        lo = tau_lo if tau_lo is not None else float(np.percentile(vals, lo_pct))
        lo = min(lo, hi)
        for s in items:
            if hi == lo and s.score == hi:
                continue
            if s.score >= hi:
                plus.append(s)
            elif s.score <= lo:
                minus.append(s)
    return plus, minus


@dataclass(frozen=True)
class PreferencePair:
    input_id: str
    chosen: object
    rejected: object
    gap: float
    policy_hash: str

    def __post_init__(self):
        if not self.gap > 0:
            raise ValueError("chosen must outscore rejected")
        for s in (self.chosen, self.rejected):
            if s.input_id != self.input_id:
                raise ValueError("pairs must share one input")
            if s.policy_hash != self.policy_hash:
                raise ValueError("both outputs must come from the same policy")

    def swapped(self) -> tuple:
        return (self.rejected, self.chosen)


def make_pairs(plus: Sequence[Scored], minus: Sequence[Scored]) -> list[PreferencePair]:
    """Every (D+, D-) combination within the same input with a positive score gap."""
    pairs = []
    for p in plus:
        for m in minus:
            if p.input_id == m.input_id and p.score > m.score:
                pairs.append(PreferencePair(p.input_id, p.sample, m.sample, p.score - m.score, p.sample.policy_hash))
    return pairs
