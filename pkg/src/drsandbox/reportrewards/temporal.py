"""Two-stage detector for predictions about time points that have already passed.

Stage 1 is purely lexical: a sentence is a candidate when it contains a
predictive expression and its latest parseable time point ends before the
reference date. Stage 2 looks for an explicit forecasting source in the
candidate sentence and up to two sentences on either side.
"""

from __future__ import annotations

import calendar
import datetime as dt
import re
from dataclasses import dataclass
from typing import Callable, Sequence

from drsandbox.rewards import JudgeUnavailable

PREDICTIVE = (
    r"will",
    r"won't",
    r"shall",
    r"(?:is|are) going to",
    r"(?:is|are) (?:expected|projected|forecast|forecasted|predicted|anticipated|set|poised|slated|likely) to",
    r"expects?\s+(?:[\w-]+\s+){0,4}?(?:to|that)",
    r"(?:projects|forecasts|predicts|anticipates) that",
)

ATTRIBUTION = (
    r"(?i:\baccording to\b)",
    r"(?i:\b(?:forecast|forecasted|projected|predicted|estimated|expected|anticipated)\s+by\s+(?:the\s+)?[a-z])",
    r"(?i:\b(?:the|our|its)\s+(?:company|firm|group|management|board|government|ministry|bank|agency|organization)"
    r"\s+(?:expects|expected|projects|projected|forecasts|forecast|predicts|predicted|estimates|estimated"
    r"|anticipates|anticipated|plans|planned|targets|targeted)\b)",
    r"(?i:\b(?:a|an|one|several)\s+(?:[\w-]+\s+){0,2}(?:institute|institution|consultancy|firm|agency|think tank"
    r"|report|study|survey|analysis|forecast|outlook)\b)",
    r"\b(?i:analysts|economists|researchers|experts|strategists)\s+(?:at|from|with)\s+[A-Z]",
    # a capitalized name or acronym followed by a forecasting verb: "Gartner projects", "The IEA expects"
    r"\b(?:[A-Z][\w&.-]*\s+){0,3}(?:[A-Z]{2,}[\w&.-]*|[A-Z][a-z]+)\s+"
    r"(?:expects|expected|projects|projected|forecasts|forecast|predicts|predicted|estimates|estimated|anticipates)\b",
    r"\b[A-Z][\w&.-]*(?:\s+[A-Z][\w&.-]*){0,3}'s\s+(?:latest\s+|annual\s+)?"
    r"(?:forecast|projection|estimate|report|outlook|survey|analysis|guidance)\b",
)

_ABBREV = {"mr", "mrs", "ms", "dr", "inc", "corp", "ltd", "co", "e.g", "i.e", "vs", "etc", "no", "st", "u.s", "u.k", "jan", "feb", "mar", "apr", "jun", "jul", "aug", "sep", "sept", "oct", "nov", "dec"}
_BOUNDARY = re.compile(r"[.!?]+[\"')\]]*\s+|\n+")

_Y = r"((?:19|20)\d{2})"
_MONTHS = {m.lower(): i for i, m in enumerate(calendar.month_name) if m} | {
    m.lower(): i for i, m in enumerate(calendar.month_abbr) if m
}
_MONTH_RE = "|".join(sorted((m for m in _MONTHS), key=len, reverse=True))


def _last_day(y: int, m: int) -> dt.date:
    return dt.date(y, m, calendar.monthrange(y, m)[1])


# (pattern, end-of-period function) in priority order; earlier patterns claim their span first
_TIME_PATTERNS: tuple[tuple[re.Pattern, Callable[[re.Match], dt.date]], ...] = (
    (re.compile(rf"\b{_Y}-(\d{{2}})-(\d{{2}})\b"), lambda m: dt.date(int(m[1]), int(m[2]), int(m[3]))),
    (re.compile(rf"\b{_Y}\s*-?\s*Q([1-4])\b", re.I), lambda m: _last_day(int(m[1]), 3 * int(m[2]))),
    (re.compile(rf"\bQ([1-4])\s*(?:of\s+)?{_Y}\b", re.I), lambda m: _last_day(int(m[2]), 3 * int(m[1]))),
    (re.compile(rf"\bH([12])\s*{_Y}\b", re.I), lambda m: _last_day(int(m[2]), 6 * int(m[1]))),
    (re.compile(rf"\b(first|second) half of {_Y}\b", re.I), lambda m: _last_day(int(m[2]), 6 if m[1].lower() == "first" else 12)),
    (re.compile(rf"\b(?:the )?(end|middle) of {_Y}\b", re.I), lambda m: _last_day(int(m[2]), 12 if m[1].lower() == "end" else 6)),
    (re.compile(rf"\b({_MONTH_RE})\.?\s+(\d{{1,2}}),?\s+{_Y}\b", re.I), lambda m: dt.date(int(m[3]), _MONTHS[m[1].lower()], int(m[2]))),
    (re.compile(rf"\b({_MONTH_RE})\.?\s+(?:of\s+)?{_Y}\b", re.I), lambda m: _last_day(int(m[2]), _MONTHS[m[1].lower()])),
    (re.compile(rf"\b{_Y}s\b"), lambda m: dt.date(int(m[1]) // 10 * 10 + 9, 12, 31)),
    (re.compile(rf"(?<![\d,.$])\b{_Y}\b(?![\d,.]\d|%)"), lambda m: dt.date(int(m[1]), 12, 31)),
)
_PREDICTIVE_RE = re.compile(r"\b(?:" + "|".join(PREDICTIVE) + r")\b", re.I)


@dataclass(frozen=True)
class TimePoint:
    text: str
    span: tuple[int, int]  # offsets within the sentence
    end: dt.date  # last day of the period the expression denotes


def time_points(sentence: str) -> list[TimePoint]:
    taken: list[tuple[int, int]] = []
    out = []
    for pat, end_of in _TIME_PATTERNS:
        for m in pat.finditer(sentence):
            if any(m.start() < b and a < m.end() for a, b in taken):
                continue
            try:
                end = end_of(m)
            except ValueError:  # e.g. "February 30, 2024"
                continue
            taken.append(m.span())
            out.append(TimePoint(m.group(0), m.span(), end))
    return sorted(out, key=lambda t: t.span)


def split_sentences(text: str) -> list[tuple[int, int]]:
    """Character spans of sentences; newlines always end a sentence."""
    spans, start = [], 0
    for m in _BOUNDARY.finditer(text):
        if m.group(0)[0] == ".":
            word = re.search(r"([\w.]+)\.+$", text[start:m.start() + 1])
            follow = text[m.end():m.end() + 1]
            if (word and word.group(1).lower() in _ABBREV) or (follow and not (follow.isupper() or follow in "\"'([#*-|" or follow.isdigit())):
                continue
        if text[start:m.start()].strip():
            spans.append((start, m.start() + len(m.group(0).rstrip())))
        start = m.end()
    if text[start:].strip():
        spans.append((start, len(text.rstrip())))
    # trim leading whitespace from spans
    return [(a + len(text[a:b]) - len(text[a:b].lstrip()), b) for a, b in spans]


@dataclass(frozen=True)
class Candidate:
    sentence_index: int
    span: tuple[int, int]
    sentence: str
    expression: str
    time_text: str
    time_point: dt.date
    now: dt.date


def _as_date(now) -> dt.date:
    if isinstance(now, dt.datetime):
        return now.date()
    if isinstance(now, dt.date):
        return now
    if isinstance(now, int):
        return dt.date(now, 1, 1)
    s = str(now).strip()
    if re.fullmatch(r"\d{4}", s):
        return dt.date(int(s), 1, 1)
    return dt.date.fromisoformat(s)


def candidate_in_sentence(sentence: str, now) -> tuple[str, TimePoint] | None:
    """(predictive expression, predicted time point) if the sentence is a stage-1 candidate.

    The predicted time point is the latest one in the sentence, so a dated
    attribution ("a 2021 report") never masks a later forecast horizon.
    """
    now = _as_date(now)
    kw = _PREDICTIVE_RE.search(sentence)
    if kw is None:
        return None
    points = time_points(sentence)
    if not points:
        return None
    latest = max(points, key=lambda t: t.end)
    if latest.end >= now:
        return None
    return kw.group(0), latest


def detect_temporal_stage1(text: str, now) -> list[Candidate]:
    now = _as_date(now)
    out = []
    for i, (a, b) in enumerate(split_sentences(text)):
        hit = candidate_in_sentence(text[a:b], now)
        if hit is not None:
            expr, tp = hit
            out.append(Candidate(i, (a, b), text[a:b], expr, tp.text, tp.end, now))
    return out


def context_window(text: str, sentence_index: int, radius: int = 2) -> str:
    spans = split_sentences(text)
    lo, hi = max(0, sentence_index - radius), min(len(spans), sentence_index + radius + 1)
    return " ".join(text[a:b] for a, b in spans[lo:hi])


def find_attribution(context: str) -> str | None:
    for pat in ATTRIBUTION:
        m = re.search(pat, context)
        if m:
            return m.group(0)
    return None


def rule_attribution(sentence: str, context: str) -> tuple[bool, str]:
    """Default stage-2 backend: attribution lexicon over the context window."""
    hit = find_attribution(context)
    return (True, f"attribution: {hit.strip()}") if hit else (False, "no forecasting source in context")


VERDICTS = ("error", "ok", "unresolved")


@dataclass(frozen=True)
class TemporalFinding:
    span: tuple[int, int]
    sentence: str
    expression: str
    time_text: str
    time_point: dt.date
    now: dt.date
    attribution_found: bool | None
    verdict: str
    detail: str = ""

    def __post_init__(self):
        if self.verdict not in VERDICTS:
            raise ValueError(f"verdict must be one of {VERDICTS}")
        if self.verdict == "unresolved":
            if self.attribution_found is not None:
                raise ValueError("unresolved findings carry no attribution decision")
            return
        expected = "error" if (self.time_point < self.now and not self.attribution_found) else "ok"
        if self.verdict != expected:
            raise ValueError("verdict inconsistent with time point and attribution")


AttributionJudge = Callable[[str, str], tuple[bool, str]]


def verify_attribution(candidate: Candidate, context: str, judge: AttributionJudge | None = None) -> TemporalFinding:
    judge = judge or rule_attribution
    base = (candidate.span, candidate.sentence, candidate.expression, candidate.time_text, candidate.time_point, candidate.now)
    try:
        found, detail = judge(candidate.sentence, context)
    except JudgeUnavailable as exc:
        return TemporalFinding(*base, None, "unresolved", str(exc))
    verdict = "error" if candidate.time_point < candidate.now and not found else "ok"
    return TemporalFinding(*base, bool(found), verdict, detail)


def detect_temporal_errors(text: str, now, judge: AttributionJudge | None = None) -> list[TemporalFinding]:
    """Full pipeline: every stage-1 candidate passed through stage 2."""
    spans = split_sentences(text)
    out = []
    for c in detect_temporal_stage1(text, now):
        lo, hi = max(0, c.sentence_index - 2), min(len(spans), c.sentence_index + 3)
        ctx = " ".join(text[a:b] for a, b in spans[lo:hi])
        out.append(verify_attribution(c, ctx, judge))
    return out


def count_errors(findings: Sequence[TemporalFinding]) -> int:
    return sum(f.verdict == "error" for f in findings)
