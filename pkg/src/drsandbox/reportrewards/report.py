"""Markdown report parsing, citation reward and structural format reward."""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Mapping

from drsandbox.text import jaccard

REF_HEADINGS = ("references", "sources", "bibliography")
_HEADING = re.compile(r"^(#{1,6})\s+(.*?)\s*#*\s*$")
_MARKER = re.compile(r"\[(\d+)\]")
# bracketed numbers with stray spaces or separators, e.g. "[ 2]", "[3,]", "[4;5]"
_BAD_MARKER = re.compile(r"\[\s*\d+\s*[,;]\s*\d*\s*\]|\[\s+\d+\s*\]|\[\d+\s+\]")
_REF_LINE = re.compile(r"^\s*\[(\d+)\]\s*(.*)$")
_ORDERED = re.compile(r"^(\s*)(\d+)[.)]\s+\S")
_SENT = re.compile(r"(?<=[.!?])\s+")
_TRAILING = re.compile(r"([.!?])((?:\s*\[\d+\])+)")
_SPACE_PUNCT = re.compile(r"\s+([.,;:!?])")
_OPEN, _CLOSE = "<final_answer>", "</final_answer>"


@dataclass(frozen=True)
class Citation:
    marker: int
    target: str | None  # None when the marker has no reference entry
    description: str


@dataclass(frozen=True)
class Heading:
    level: int
    text: str


@dataclass(frozen=True)
class Report:
    body: str
    headings: tuple[Heading, ...]
    citations: tuple[Citation, ...]
    references: Mapping[int, str]
    tables: tuple[tuple[str, ...], ...]
    final_answer_ok: bool
    malformed_markers: tuple[str, ...]
    reference_defects: tuple[str, ...]

    @property
    def n_citations(self) -> int:
        return len(self.citations)


def _split_references(lines: list[str]) -> tuple[list[str], list[str]]:
    for i, line in enumerate(lines):
        m = _HEADING.match(line)
        if m and m.group(2).strip().rstrip(":").casefold() in REF_HEADINGS:
            return lines[:i], lines[i + 1:]
    return lines, []


def _tables(lines: list[str]) -> list[tuple[str, ...]]:
    out, cur = [], []
    for line in lines + [""]:
        if line.strip().startswith("|"):
            cur.append(line.strip())
        elif cur:
            out.append(tuple(cur))
            cur = []
    return out


def table_cells(row: str) -> list[str]:
    row = row.strip()
    if row.startswith("|"):
        row = row[1:]
    if row.endswith("|") and not row.endswith("\\|"):
        row = row[:-1]
    return [c.strip() for c in re.split(r"(?<!\\)\|", row)]


_SEP_CELL = re.compile(r"^:?-{3,}:?$")


def table_valid(rows: tuple[str, ...]) -> bool:
    """Header, separator row of dashes, then rows with the header's column count."""
    if len(rows) < 2:
        return False
    width = len(table_cells(rows[0]))
    sep = table_cells(rows[1])
    if len(sep) != width or not all(_SEP_CELL.match(c) for c in sep):
        return False
    return all(len(table_cells(r)) == width for r in rows[2:])


def list_numbering_ok(lines: list[str]) -> bool:
    """Ordered-list items at the same indent must count up by one.

    Blank lines and deeper-indented continuation lines keep a list open; any
    other line closes every open list.
    """
    open_lists: dict[int, int] = {}  # indent -> last number
    for line in lines:
        m = _ORDERED.match(line)
        if m:
            indent, n = len(m.group(1)), int(m.group(2))
            for k in [k for k in open_lists if k > indent]:
                del open_lists[k]
            if indent in open_lists and n != open_lists[indent] + 1:
                return False
            open_lists[indent] = n
            continue
        if not line.strip():
            continue
        lead = len(line) - len(line.lstrip())
        if lead > 0 and open_lists and lead > min(open_lists):
            continue
        open_lists.clear()
    return True


def _sentence_around(text: str, pos: int) -> str:
    start = 0
    for m in _SENT.finditer(text):
        if m.end() <= pos:
            start = m.end()
        else:
            end = m.start()
            break
    else:
        end = len(text)
    return text[start:end]


def parse_report(body: str) -> Report:
    lines = body.splitlines()
    main, ref_lines = _split_references(lines)
    refs: dict[int, str] = {}
    ref_defects = []
    for line in ref_lines:
        if not line.strip() or _HEADING.match(line):
            continue
        m = _REF_LINE.match(line)
        if not m or not m.group(2).strip():
            ref_defects.append(f"malformed reference line: {line.strip()[:60]}")
            continue
        n = int(m.group(1))
        if n in refs:
            ref_defects.append(f"duplicate reference [{n}]")
        refs[n] = m.group(2).strip()
    text = "\n".join(main)
    cites = []
    for para in re.split(r"\n\s*\n", text):
        flat = " ".join(l.strip() for l in para.splitlines() if not l.strip().startswith("|"))
        # "claim. [1]" cites the claim before the full stop, not the next sentence
        flat = _TRAILING.sub(lambda m: m.group(2) + m.group(1), flat)
        for m in _MARKER.finditer(flat):
            desc = _SPACE_PUNCT.sub(r"\1", _MARKER.sub("", _sentence_around(flat, m.start()))).strip()
            n = int(m.group(1))
            cites.append(Citation(n, refs.get(n), desc))
    opens, closes = body.count(_OPEN), body.count(_CLOSE)
    fa_ok = opens == 1 and closes == 1 and body.index(_OPEN) < body.index(_CLOSE)
    headings = tuple(Heading(len(m.group(1)), m.group(2)) for m in map(_HEADING.match, main) if m)
    return Report(
        body, headings, tuple(cites), refs, tuple(_tables(main)), fa_ok,
        tuple(m.group(0) for m in _BAD_MARKER.finditer(text)), tuple(ref_defects),
    )


def _as_report(report) -> Report:
    return report if isinstance(report, Report) else parse_report(report)


def violations(report) -> dict[str, int]:
    r = _as_report(report)
    main = _split_references(r.body.splitlines())[0]
    v_tag = int(not r.final_answer_ok)
    v_md = int(not list_numbering_ok(main) or not all(table_valid(t) for t in r.tables))
    dangling = any(c.target is None for c in r.citations)
    v_ref = int(dangling or bool(r.malformed_markers) or bool(r.reference_defects))
    return {"v_tag": v_tag, "v_md": v_md, "v_ref": v_ref}


def format_reward_report(report) -> int:
    """-(v_tag + v_md + v_ref), each violation counted once."""
    return -sum(violations(report).values())


def citation_validity(description: str, source_text: str, tau: float = 0.3) -> bool:
    """Valid iff token Jaccard between the citing sentence and the source exceeds tau."""
    if not 0.0 < tau < 1.0:
        raise ValueError("tau must lie in (0, 1)")
    return jaccard(description, source_text) > tau


def count_valid(report, sources: Mapping[str, str], tau: float = 0.3) -> int:
    """Citations whose reference target resolves in ``sources`` and passes the relevance test."""
    r = _as_report(report)
    return sum(
        1 for c in r.citations
        if c.target is not None and c.target in sources and citation_validity(c.description, sources[c.target], tau)
    )


def citation_reward(n_gen: int, n_valid: int, n_ref: int) -> float:
    if min(n_gen, n_valid, n_ref) < 0 or n_valid > n_gen:
        raise ValueError("need non-negative counts with n_valid <= n_gen")
    need = 0.7 * n_ref
    if n_gen < need:
        return -1.0
    return 0.1 if n_valid >= need else -0.1


def citation_reward_diagnostics(n_gen: int, n_valid: int, n_ref: int) -> dict:
    return {
        "reward": citation_reward(n_gen, n_valid, n_ref),
        "degenerate_reference": n_ref == 0,
        "threshold": 0.7 * n_ref,
    }


def report_reward(r_race: float, r_cite: float, r_format: float, lambda_c: float, lambda_f: float) -> float:
    if lambda_c < 0 or lambda_f < 0:
        raise ValueError("balancing coefficients must be >= 0")
    return r_race + lambda_c * r_cite + lambda_f * r_format
