"""Module-level evaluation metrics over persisted trajectories and reports.

Undefined rates (nothing to count) are reported as None rather than 0.
"""

from __future__ import annotations

import re
from dataclasses import asdict, dataclass
from typing import Mapping, Sequence

from drsandbox import SandboxError
from drsandbox.reportrewards import count_errors, detect_temporal_errors, parse_report, table_valid
from drsandbox.searchenv import RETRIEVAL_TOOLS, SEARCH_TOOLS, Trajectory
from drsandbox.text import normalize

_HEADING = re.compile(r"^(#{1,6})\s+(.*?)\s*#*\s*$")
_NUMBERING = re.compile(r"^(?:\d+(?:\.\d+)*[.)]?|[ivxlcdm]+[.)]|[a-z][.)])\s+", re.I)


class EmptyInput(SandboxError):
    pass


def _rate(num: float, den: float) -> float | None:
    return num / den if den else None


@dataclass(frozen=True)
class MetricsReport:
    reasoning: dict
    tool: dict
    outline: dict
    report: dict

    def __post_init__(self):
        rates = [self.reasoning["query_repetition_rate"], self.tool["failure_rate"], self.outline["title_miss_rate"],
                 self.report["tense_error_rate"], self.report["valid_table_rate"]]
        for r in rates:
            if r is not None and not 0.0 <= r <= 1.0:
                raise ValueError(f"rate outside [0, 1]: {r}")
        props = self.tool["usage_proportion"]
        if props and abs(sum(props.values()) - 1.0) > 1e-9:
            raise ValueError("usage proportions must sum to 1")

    def to_dict(self) -> dict:
        return asdict(self)

    def flat(self) -> dict[str, float | None]:
        out = {}
        for group, vals in self.to_dict().items():
            for k, v in vals.items():
                if isinstance(v, Mapping):
                    out.update({f"{group}.{k}.{t}": x for t, x in v.items()})
                else:
                    out[f"{group}.{k}"] = v
        return out


def normalize_heading(text: str) -> str:
    """Drop numbering prefixes, case-fold, collapse whitespace."""
    return " ".join(_NUMBERING.sub("", text.strip()).casefold().split())


def headings(body: str) -> list[tuple[int, str]]:
    out, fenced = [], False
    for line in body.splitlines():
        if line.lstrip().startswith("```"):
            fenced = not fenced
            continue
        m = None if fenced else _HEADING.match(line)
        if m:
            out.append((len(m.group(1)), m.group(2)))
    return out


def hierarchy_errors(levels: Sequence[int]) -> int:
    """Headings that go more than one level deeper than the previous heading."""
    return sum(1 for a, b in zip(levels, levels[1:]) if b - a > 1)


def _report_parts(r) -> tuple[Sequence[tuple[int, str]] | None, str]:
    if isinstance(r, str):
        return None, r
    if isinstance(r, Mapping):
        return r.get("outline"), r["body"]
    return getattr(r, "outline", None), r.body


def module_eval(traces: Sequence[Trajectory], reports: Sequence = (), now=None) -> MetricsReport:
    """Reasoning, tool, outline and report metrics.

    ``reports`` items are markdown strings, mappings with ``body`` and an
    optional ``outline`` of (level, title) pairs, or objects with those
    attributes. Tense errors are only checked when ``now`` is given.
    """
    traces, reports = list(traces), list(reports)
    if not traces and not reports:
        raise EmptyInput("module_eval needs at least one trajectory or report")

    steps = [s for t in traces for s in t.steps]
    reflect = sum(1 for s in steps if s.action.tool == "reflect" and s.format_valid)
    search_args = [normalize(s.action.argument) for s in steps if s.format_valid and s.action.tool in SEARCH_TOOLS]
    calls = [s for s in steps if s.format_valid and s.action.tool in RETRIEVAL_TOOLS]
    usage = {t: sum(1 for s in calls if s.action.tool == t) / len(calls) for t in RETRIEVAL_TOOLS} if calls else {}

    outline_total = outline_missing = hier = 0
    tables_total = tables_valid = 0
    with_tense = 0
    for r in reports:
        outline, body = _report_parts(r)
        hs = headings(body)
        hier += hierarchy_errors([lvl for lvl, _ in hs])
        if outline is not None:
            present = {normalize_heading(t) for _, t in hs}
            outline_total += len(outline)
            outline_missing += sum(1 for _, t in outline if normalize_heading(t) not in present)
        parsed = parse_report(body)
        tables_total += len(parsed.tables)
        tables_valid += sum(table_valid(t) for t in parsed.tables)
        if now is not None and count_errors(detect_temporal_errors(body, now)) > 0:
            with_tense += 1

    return MetricsReport(
        reasoning={
            "reflection_turns": reflect / len(traces) if traces else None,
            "query_repetition_rate": _rate(len(search_args) - len(set(search_args)), len(search_args)),
        },
        tool={"usage_proportion": usage, "failure_rate": _rate(sum(s.observation.status == "error" for s in calls), len(calls))},
        outline={"title_miss_rate": _rate(outline_missing, outline_total), "hierarchy_error_count": hier},
        report={
            "tense_error_rate": _rate(with_tense, len(reports)) if now is not None else None,
            "valid_table_rate": _rate(tables_valid, tables_total),
        },
    )
