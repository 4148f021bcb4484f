"""Report agent: outline first, then a cited markdown body."""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Sequence

from drsandbox.orchestrator.agents import AgentBackend, SubReport
from drsandbox.orchestrator.memory import Memory, XoTEntry
from drsandbox.reportrewards import Report, parse_report


class UngroundedCitation(ValueError):
    pass


@dataclass(frozen=True)
class FinalReport:
    outline: tuple[tuple[int, str], ...]
    body: str
    references: tuple[str, ...]  # memory targets, reference n is references[n - 1]

    def parsed(self) -> Report:
        return parse_report(self.body)

    def to_dict(self) -> dict:
        return {"outline": [list(h) for h in self.outline], "body": self.body, "references": list(self.references)}

    @classmethod
    def from_dict(cls, d: dict) -> "FinalReport":
        return cls(tuple((int(a), b) for a, b in d["outline"]), d["body"], tuple(d["references"]))


def _title(text: str, limit: int = 60) -> str:
    t = re.sub(r"\s+", " ", text).strip().rstrip(".?")
    return t if len(t) <= limit else t[: limit - 3].rstrip() + "..."


def synthesize_report(
    subreports: Sequence[SubReport],
    memory: Memory,
    backend: AgentBackend = AgentBackend(),
    rubric_hints: Sequence[str] = (),
    instructions: Sequence[str] | None = None,
    query: str = "",
) -> FinalReport:
    """Write the outline, then fill each section from its sub-report.

    Every citation is checked against tool memory before it is emitted, so
    the body can only cite calls that actually ran.
    """
    if not subreports:
        raise ValueError("need at least one sub-report")
    instructions = list(instructions) if instructions is not None else [sr.subtask_id for sr in subreports]
    outline = [(1, f"Research report: {_title(query or '; '.join(instructions), 80)}")]
    outline += [(2, f"{i}. {_title(ins)}") for i, ins in enumerate(instructions, 1)]
    outline += [(2, "Summary"), (2, "References")]
    memory.add_thought(XoTEntry("reporter", "S0", 1, "Outline: " + " | ".join(h for _, h in outline), tuple(sr.subtask_id for sr in subreports)))

    refs: dict[str, int] = {}
    lines = [f"# {outline[0][1]}", ""]
    if rubric_hints:
        lines += ["Scope of this report:", ""] + [f"- {h}" for h in rubric_hints] + [""]
    for (level, heading), sr in zip(outline[1:], subreports):
        lines += [f"{'#' * level} {heading}", ""]
        body = []
        for target, sentence in sr.citations:
            if memory.resolve(target) is None:
                raise UngroundedCitation(f"{target} does not resolve into tool memory")
            n = refs.setdefault(target, len(refs) + 1)
            body.append(f"{sentence.rstrip('.')} [{n}].")
        if sr.error:
            body.append("This part could not be completed.")
        elif not sr.complete:
            body.append("The search for this part stopped before reaching an answer.")
        if sr.answer is not None:
            body.append(f"Answer to this part: {sr.answer}.")
        text = " ".join(body) or "No evidence was found."
        if backend.kind == "remote_chat":
            text = _remote_rewrite(text, heading, backend)
        lines += [text, ""]
    answers = [f"{i}. {sr.answer if sr.answer is not None else 'not found'}" for i, sr in enumerate(subreports, 1)]
    lines += ["## Summary", ""] + answers + [""]
    lines.append("<final_answer>" + "; ".join(sr.answer or "not found" for sr in subreports) + "</final_answer>")
    lines += ["", "## References", ""] + [f"[{n}] {t}" for t, n in refs.items()]
    return FinalReport(tuple(outline), "\n".join(lines) + "\n", tuple(refs))


def _remote_rewrite(text: str, heading: str, backend: AgentBackend) -> str:
    """Let a chat model polish one section; its citation markers must be unchanged."""
    reply = backend.chat([
        {"role": "system", "content": "Rewrite the section text for readability. Keep every bracketed citation marker exactly as given and add no new ones. Reply with the text only."},
        {"role": "user", "content": f"Section: {heading}\n\n{text}"},
    ]).strip()
    if sorted(re.findall(r"\[\d+\]", reply)) != sorted(re.findall(r"\[\d+\]", text)):
        raise UngroundedCitation("rewritten section changed its citation markers")
    return reply


def citations_grounded(report: FinalReport, memory: Memory) -> bool:
    parsed = report.parsed()
    return all(c.target is not None and memory.resolve(c.target) is not None for c in parsed.citations)
