"""Run traces as JSON Lines: a version header, then typed records."""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

from drsandbox import SandboxError
from drsandbox.kgforge.render import QueryInstance
from drsandbox.orchestrator.agents import Plan, SubReport, Subtask
from drsandbox.orchestrator.memory import Memory, ToolRecord, XoTEntry
from drsandbox.orchestrator.report import FinalReport
from drsandbox.searchenv import Trajectory

TRACE_FORMAT = "drsandbox-trace"
TRACE_VERSION = 1


class MalformedTrace(SandboxError):
    pass


class TraceVersionMismatch(SandboxError):
    pass


@dataclass
class ResearchRun:
    query: str
    seed: int
    config: dict
    plan: Plan
    subreports: list[SubReport]
    trajectories: list[Trajectory | None]
    memory: Memory
    final: FinalReport
    extra: dict = field(default_factory=dict)

    def __eq__(self, other) -> bool:
        if not isinstance(other, ResearchRun):
            return NotImplemented
        return (
            (self.query, self.seed, self.config, self.plan, self.subreports, self.final)
            == (other.query, other.seed, other.config, other.plan, other.subreports, other.final)
            and [t.to_record() if t else None for t in self.trajectories] == [t.to_record() if t else None for t in other.trajectories]
            and self.memory == other.memory
        )


_KNOWN = {
    "header": {"type", "format", "version"},
    "run": {"type", "query", "seed", "config"},
    "subtask": {"type", "id", "instruction", "target"},
    "result": {"type", "subreport", "trajectory"},
    "xot": {"type", "entry"},
    "tool": {"type", "record"},
    "final": {"type", "report"},
}


def persist_trace(run: ResearchRun, path: str | Path) -> None:
    recs = [
        {"type": "header", "format": TRACE_FORMAT, "version": TRACE_VERSION},
        {"type": "run", "query": run.query, "seed": run.seed, "config": run.config},
    ]
    recs += [{"type": "subtask", "id": s.id, "instruction": s.instruction, "target": s.target.to_record() if s.target else None} for s in run.plan.subtasks]
    recs += [{"type": "result", "subreport": sr.to_dict(), "trajectory": t.to_record() if t else None} for sr, t in zip(run.subreports, run.trajectories)]
    recs += [{"type": "xot", "entry": e.to_dict()} for e in run.memory.xot()]
    recs += [{"type": "tool", "record": r.to_dict()} for r in run.memory.tools()]
    recs.append({"type": "final", "report": run.final.to_dict()})
    with open(path, "w") as fh:
        for r in recs:
            fh.write(json.dumps(r, sort_keys=True) + "\n")


def _parse(path) -> list[dict]:
    out = []
    for n, line in enumerate(Path(path).read_text().splitlines(), start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise MalformedTrace(f"line {n}: {exc}") from None
        if not isinstance(rec, dict) or "type" not in rec:
            raise MalformedTrace(f"line {n}: record without a type")
        out.append(rec)
    return out


def load_trace(path: str | Path) -> ResearchRun:
    recs = _parse(path)
    if not recs or recs[0].get("type") != "header" or recs[0].get("format") != TRACE_FORMAT:
        raise MalformedTrace("missing trace header")
    if recs[0].get("version") != TRACE_VERSION:
        raise TraceVersionMismatch(f"trace version {recs[0].get('version')} != {TRACE_VERSION}")
    if recs[-1].get("type") != "final":
        raise MalformedTrace("trace ends before the final report (truncated?)")
    unknown = set()
    for r in recs:
        kind = r["type"]
        if kind not in _KNOWN:
            unknown.add(f"record type {kind!r}")
        else:
            unknown.update(f"{kind}.{k}" for k in set(r) - _KNOWN[kind])
    if unknown:
        warnings.warn(f"ignoring unknown trace fields: {sorted(unknown)}", stacklevel=2)
    try:
        run = next(r for r in recs if r["type"] == "run")
        subs = tuple(
            Subtask(r["id"], r["instruction"], QueryInstance.from_record(r["target"]) if r["target"] else None)
            for r in recs if r["type"] == "subtask"
        )
        results = [r for r in recs if r["type"] == "result"]
        memory = Memory.restore(
            [XoTEntry.from_dict(r["entry"]) for r in recs if r["type"] == "xot"],
            [ToolRecord.from_dict(r["record"]) for r in recs if r["type"] == "tool"],
        )
        return ResearchRun(
            run["query"], run["seed"], run["config"], Plan(run["query"], subs),
            [SubReport.from_dict(r["subreport"]) for r in results],
            [Trajectory.from_record(r["trajectory"]) if r["trajectory"] else None for r in results],
            memory, FinalReport.from_dict(recs[-1]["report"]),
        )
    except (KeyError, TypeError, ValueError, StopIteration) as exc:
        raise MalformedTrace(f"incomplete trace: {exc!r}") from exc
