"""Planning and deep-search agents with pluggable backends."""

from __future__ import annotations

import json
import os
import re
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from drsandbox import SandboxError
from drsandbox.kgforge.render import QueryInstance
from drsandbox.policyopt.policy import PolicyParams
from drsandbox.policyopt.train import derive_seed
from drsandbox.orchestrator.memory import Memory, ToolRecord, XoTEntry, digest_payload
from drsandbox.searchenv import (
    RETRIEVAL_TOOLS,
    ChainPolicy,
    Limits,
    Observation,
    ScriptedPolicy,
    SearchEnv,
    Step,
    ToolCall,
    Trajectory,
    execute,
    parse_emission,
    rollout,
)
from drsandbox.searchenv.agent import VOCABULARY
from drsandbox.text import normalize

BACKENDS = ("surrogate_policy", "scripted", "remote_chat")


class BackendError(SandboxError):
    pass


@dataclass(frozen=True)
class AgentBackend:
    kind: str = "surrogate_policy"
    params: PolicyParams | None = None  # surrogate policy; None plays the oracle chain policy
    script: tuple[str, ...] = ()
    endpoint: str | None = None
    endpoint_env: str = "DRSANDBOX_CHAT_URL"
    api_key_env: str = "DRSANDBOX_CHAT_KEY"
    model: str = "agent"
    retries: int = 2
    timeout: float = 60.0

    def __post_init__(self):
        if self.kind not in BACKENDS:
            raise ValueError(f"backend kind must be one of {BACKENDS}")
        if self.kind == "scripted":
            if not self.script:
                raise ValueError("scripted backend requires a script")
            bad = [s for s in self.script if s not in VOCABULARY]
            if bad:
                raise ValueError(f"unknown script templates: {bad}")
        if self.kind == "remote_chat" and not (self.endpoint or os.environ.get(self.endpoint_env)):
            raise ValueError(f"remote_chat backend requires an endpoint (or {self.endpoint_env})")

    def policy(self):
        if self.kind == "scripted":
            return ScriptedPolicy(self.script)
        return self.params if self.params is not None else ChainPolicy()

    # ---- remote chat ----

    def chat(self, messages: list[dict]) -> str:
        import httpx

        url = self.endpoint or os.environ.get(self.endpoint_env)
        headers = {}
        if os.environ.get(self.api_key_env):
            headers["Authorization"] = f"Bearer {os.environ[self.api_key_env]}"
        body = {"model": self.model, "messages": messages, "temperature": 0}
        last = None
        for attempt in range(self.retries + 1):
            try:
                r = httpx.post(url, json=body, headers=headers, timeout=self.timeout)
                r.raise_for_status()
                return r.json()["choices"][0]["message"]["content"]
            except (httpx.HTTPError, KeyError, IndexError, ValueError) as exc:
                last = str(exc)
            if attempt < self.retries:
                time.sleep(0.5 * 2**attempt)
        raise BackendError(f"chat backend at {url} failed: {last}")


# ---- planning -----------------------------------------------------------------


@dataclass(frozen=True)
class Subtask:
    id: str
    instruction: str
    target: QueryInstance | None = None

    @property
    def goal(self) -> str:
        return self.instruction


@dataclass(frozen=True)
class Plan:
    query: str
    subtasks: tuple[Subtask, ...]

    def __post_init__(self):
        if not self.subtasks:
            raise ValueError("a plan needs at least one subtask")
        ids = [s.id for s in self.subtasks]
        if len(set(ids)) != len(ids):
            raise ValueError("subtask ids must be unique")


_SEPARATORS = re.compile(r"\s*(?:;|\n+)\s*")


def split_constraint_groups(query: str) -> list[str]:
    """Top-level groups are separated by semicolons or line breaks."""
    return [p.strip() for p in _SEPARATORS.split(query) if p.strip()]


def plan(query: str, backend: AgentBackend = AgentBackend(), catalog: Sequence[QueryInstance] = ()) -> Plan:
    """Decompose ``query`` into subtasks; parts that match a catalog question
    exactly (after normalization) carry that instance as their target."""
    if not query or not query.strip():
        raise ValueError("query must be non-empty")
    if backend.kind == "remote_chat":
        parts = _remote_plan(query, backend)
    else:
        parts = split_constraint_groups(query)
    index = {normalize(q.query_text): q for q in catalog}
    subs = tuple(Subtask(f"S{i}", p, index.get(normalize(p))) for i, p in enumerate(parts, start=1))
    return Plan(query, subs)


def _remote_plan(query: str, backend: AgentBackend) -> list[str]:
    reply = backend.chat([
        {"role": "system", "content": "Split the research request into independent sub-questions. Reply with a JSON list of strings."},
        {"role": "user", "content": query},
    ])
    try:
        parts = json.loads(reply[reply.index("["): reply.rindex("]") + 1])
    except ValueError as exc:
        raise BackendError(f"unparseable plan: {reply[:80]!r}") from exc
    parts = [str(p).strip() for p in parts if str(p).strip()]
    if not parts:
        raise BackendError("empty plan")
    return parts


# ---- deep search ------------------------------------------------------------------


@dataclass(frozen=True)
class SubReport:
    subtask_id: str
    findings: str
    citations: tuple[tuple[str, str], ...]  # (memory target "<ref>/<entity>", sentence it supports)
    trajectory_id: str
    answer: str | None
    complete: bool
    error: str | None = None

    def to_dict(self) -> dict:
        return {
            "subtask_id": self.subtask_id, "findings": self.findings,
            "citations": [list(c) for c in self.citations], "trajectory_id": self.trajectory_id,
            "answer": self.answer, "complete": self.complete, "error": self.error,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SubReport":
        return cls(d["subtask_id"], d["findings"], tuple(tuple(c) for c in d["citations"]), d["trajectory_id"],
                   d["answer"], d["complete"], d.get("error"))


def _sources(step: Step) -> tuple[str, ...]:
    if step.action.tool == "crawl":
        return (step.action.argument,)
    return tuple(step.observation.hits)


def _first_sentence(text: str) -> str:
    m = re.search(r"^.*?\.(?=\s|$)", text.strip())
    return m.group(0) if m else text.strip()


def _sentence_about(doc: str, anchor: str) -> str:
    for s in re.split(r"(?<=\.)\s+", doc):
        if anchor and anchor in s and not s.startswith(anchor + " is a"):
            return s.strip()
    return _first_sentence(doc)


def free_text_search(goal: str, sub_id: str, env: SearchEnv, limits: Limits, seed: int) -> Trajectory:
    """Deterministic fallback agent for goals with no synthesized instance:
    search the goal, read the top hit, answer with its title."""
    layer = env.new_layer()
    layer.begin_trajectory()
    rng = np.random.default_rng(np.random.SeedSequence(seed).spawn(2)[1])
    steps: list[Step] = []
    call = ToolCall("web_search", goal, 1)
    obs = execute(call, layer, rng)
    steps.append(Step(f"I search for: {goal}.", call, obs, True, int(obs.status == "ok")))
    answer = None
    if obs.status == "ok" and obs.hits and limits.max_steps >= 3:
        top = obs.hits[0]
        call = ToolCall("crawl", top, 2)
        page = execute(call, layer, rng)
        steps.append(Step(f"The best match is {env.corpus.titles.get(top, top)}; I read its page.", call, page, True, int(page.status == "ok")))
        answer = env.corpus.titles.get(top, top)
        steps.append(Step(f"My answer is {answer}.", ToolCall("answer", answer, 3), Observation("ok", f"answer submitted: {answer}"), True, 1))
    return Trajectory(sub_id, tuple(steps), answer, seed, None, {"goal": goal})


def remote_search(goal: str, sub_id: str, env: SearchEnv, limits: Limits, seed: int, backend: AgentBackend) -> Trajectory:
    """ReAct loop driven by a chat model emitting <tool_call> blocks."""
    layer = env.new_layer()
    layer.begin_trajectory()
    rng = np.random.default_rng(np.random.SeedSequence(seed).spawn(2)[1])
    messages = [
        {"role": "system", "content": (
            "You answer questions by calling tools. Each turn, think briefly, then emit exactly one "
            '<tool_call>{"tool": ..., "argument": ...}</tool_call>. Tools: web_search, internal_search, '
            "academic_search, crawl (argument: entity id), reflect, answer."
        )},
        {"role": "user", "content": goal},
    ]
    steps, final = [], None
    for i in range(1, limits.max_steps + 1):
        raw = backend.chat(messages)
        call = parse_emission(raw, i)
        thought = raw.split("<tool_call>")[0].strip()
        if call is None:
            obs = Observation.error("malformed-action", "expected exactly one valid tool call")
            steps.append(Step(thought, ToolCall("reflect", "", i), obs, False, 0))
        elif call.tool == "answer":
            final = call.argument
            steps.append(Step(thought, call, Observation("ok", f"answer submitted: {final}"), True, 1))
            break
        elif call.tool == "reflect":
            steps.append(Step(thought, call, Observation("ok", thought or "reflecting"), True, 1))
        else:
            obs = execute(call, layer, rng)
            steps.append(Step(thought, call, obs, True, int(obs.status == "ok")))
        messages += [{"role": "assistant", "content": raw}, {"role": "user", "content": steps[-1].observation.payload}]
    return Trajectory(sub_id, tuple(steps), final, seed, None, {"goal": goal})


def _summarize(sub: Subtask, traj: Trajectory, env: SearchEnv) -> tuple[str, tuple[tuple[str, str], ...]]:
    lines, cites = [], []
    prev = ""
    for i, s in enumerate(traj.steps, start=1):
        if not s.format_valid or s.action.tool not in RETRIEVAL_TOOLS or s.observation.status != "ok":
            continue
        src = _sources(s)
        if not src or src[0] not in env.corpus.documents:
            continue
        top = src[0]
        sentence = _sentence_about(env.corpus.documents[top], prev)
        lines.append(sentence)
        cites.append((f"{sub.id}:{i}/{top}", sentence))
        prev = env.corpus.titles.get(top, top)
    if traj.final_answer is not None:
        lines.append(f"Answer to this part: {traj.final_answer}.")
    return " ".join(lines) or "No evidence was found.", tuple(cites)


def _record(memory: Memory, sub: Subtask, traj: Trajectory, agent_id: str) -> None:
    for i, s in enumerate(traj.steps, start=1):
        links = ()
        if s.format_valid and s.action.tool in RETRIEVAL_TOOLS:
            d, h = digest_payload(s.observation.payload)
            memory.add_tool(ToolRecord(sub.id, i, s.action.tool, s.action.argument, s.observation.status, d, h, _sources(s)))
            links = (f"{sub.id}:{i}",)
        memory.add_thought(XoTEntry(agent_id, sub.id, i, s.thought, links))


def run_subtask(sub: Subtask, index: int, env: SearchEnv, backend: AgentBackend, limits: Limits, seed: int, memory: Memory) -> tuple[SubReport, Trajectory | None]:
    s = derive_seed(seed, index)
    agent = f"deepsearch-{sub.id}"
    try:
        if backend.kind == "remote_chat":
            traj = remote_search(sub.goal, sub.id, env, limits, s, backend)
        elif sub.target is not None:
            traj = rollout(backend.policy(), sub.target, env, limits, s)
        else:
            traj = free_text_search(sub.goal, sub.id, env, limits, s)
    except Exception as exc:  # context isolation: one failed agent must not sink the run
        memory.add_thought(XoTEntry(agent, sub.id, 0, f"failed: {exc}"))
        return SubReport(sub.id, "The agent failed before producing findings.", (), "", None, False, f"{type(exc).__name__}: {exc}"), None
    _record(memory, sub, traj, agent)
    findings, cites = _summarize(sub, traj, env)
    return SubReport(sub.id, findings, cites, f"{sub.id}@{s}", traj.final_answer, traj.final_answer is not None), traj


def run_subtasks(plan: Plan, env: SearchEnv, backend: AgentBackend, parallelism: int, seed: int, memory: Memory,
                 limits: Limits = Limits()) -> list[tuple[SubReport, Trajectory | None]]:
    """Run every subtask with its own agent and tool layer; results are ordered by subtask."""
    if parallelism < 1:
        raise ValueError("parallelism must be >= 1")
    memory.add_thought(XoTEntry("planner", "S0", 0, f"Plan for: {plan.query}", tuple(s.id for s in plan.subtasks)))
    jobs = list(enumerate(plan.subtasks, start=1))
    with ThreadPoolExecutor(max_workers=parallelism) as pool:
        futures = {sub.id: pool.submit(run_subtask, sub, i, env, backend, limits, seed, memory) for i, sub in jobs}
        return [futures[sub.id].result() for _, sub in jobs]
