"""Planning, parallel deep search and report synthesis over the simulated environment."""

from __future__ import annotations

from typing import Sequence

from drsandbox.kgforge.render import QueryInstance
from drsandbox.orchestrator.agents import (
    BACKENDS,
    AgentBackend,
    BackendError,
    Plan,
    SubReport,
    Subtask,
    free_text_search,
    plan,
    run_subtask,
    run_subtasks,
    split_constraint_groups,
)
from drsandbox.orchestrator.memory import DIGEST_CHARS, Memory, ToolRecord, XoTEntry, digest_payload
from drsandbox.orchestrator.report import FinalReport, UngroundedCitation, citations_grounded, synthesize_report
from drsandbox.orchestrator.trace import (
    TRACE_VERSION,
    MalformedTrace,
    ResearchRun,
    TraceVersionMismatch,
    load_trace,
    persist_trace,
)
from drsandbox.searchenv import Limits, SearchEnv


def run_research(
    query: str,
    env: SearchEnv,
    backend: AgentBackend = AgentBackend(),
    parallelism: int = 1,
    seed: int = 0,
    catalog: Sequence[QueryInstance] = (),
    limits: Limits = Limits(),
    rubric_hints: Sequence[str] = (),
) -> ResearchRun:
    """Single planning pass, concurrent subtask agents, then the report agent."""
    memory = Memory()
    p = plan(query, backend, catalog)
    results = run_subtasks(p, env, backend, parallelism, seed, memory, limits)
    subreports = [sr for sr, _ in results]
    final = synthesize_report(subreports, memory, backend, rubric_hints, [s.instruction for s in p.subtasks], query)
    config = {"backend": backend.kind, "max_steps": limits.max_steps, "max_context_units": limits.max_context_units}
    return ResearchRun(query, seed, config, p, subreports, [t for _, t in results], memory, final)


__all__ = [name for name in dir() if not name.startswith("_")]
