"""ReAct rollout loop over the simulated environment."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Protocol, Sequence

import numpy as np

from drsandbox.kgforge.render import QueryInstance
from drsandbox.retrieval import Corpus
from drsandbox.searchenv.agent import VOCABULARY, AgentState, advance_chain, bind
from drsandbox.searchenv.tools import SEARCH_TOOLS, Observation, ToolCall, ToolLayer, ToolLayerConfig, execute
from drsandbox.searchenv.trajectory import Step, Trajectory, emit, parse_emission


class Policy(Protocol):
    vocabulary: tuple[str, ...]

    def distribution(self, state: AgentState) -> np.ndarray: ...


@dataclass(frozen=True)
class Limits:
    max_steps: int = 8
    max_context_units: int = 100_000

    def __post_init__(self):
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")
        if self.max_context_units < 1:
            raise ValueError("max_context_units must be >= 1")


@dataclass
class SearchEnv:
    """Immutable corpus plus the tool-layer configuration workers share."""

    corpus: Corpus
    cfg: ToolLayerConfig = field(default_factory=ToolLayerConfig)

    @classmethod
    def from_graph(cls, graph, cfg: ToolLayerConfig | None = None) -> "SearchEnv":
        return cls(Corpus.from_graph(graph), cfg or ToolLayerConfig())

    def new_layer(self) -> ToolLayer:
        return ToolLayer(self.corpus, self.cfg)


@dataclass(frozen=True)
class ScriptedPolicy:
    """Deterministic policy that plays a fixed list of template names."""

    script: tuple[str, ...]
    vocabulary: tuple[str, ...] = VOCABULARY

    def distribution(self, state: AgentState) -> np.ndarray:
        p = np.zeros(len(self.vocabulary))
        p[self.vocabulary.index(self.script[min(state.step, len(self.script) - 1)])] = 1.0
        return p


@dataclass(frozen=True)
class ChainPolicy:
    """Resolve the start entity, follow every hop, then answer."""

    vocabulary: tuple[str, ...] = VOCABULARY

    def distribution(self, state: AgentState) -> np.ndarray:
        if not state.started:
            name = "web_search:start"
        elif state.remaining > 0:
            name = "web_search:next"
        else:
            name = "answer:last"
        p = np.zeros(len(self.vocabulary))
        p[self.vocabulary.index(name)] = 1.0
        return p


@dataclass(frozen=True)
class UniformPolicy:
    vocabulary: tuple[str, ...] = VOCABULARY

    def distribution(self, state: AgentState) -> np.ndarray:
        return np.full(len(self.vocabulary), 1.0 / len(self.vocabulary))


def _sample(p: np.ndarray, rng: np.random.Generator) -> int:
    # inverse-CDF draw; deterministic given the generator state
    return int(min(np.searchsorted(np.cumsum(p), rng.random(), side="right"), len(p) - 1))


def rollout(
    policy: Policy,
    instance: QueryInstance,
    env: SearchEnv,
    limits: Limits = Limits(),
    seed: int = 0,
    layer: ToolLayer | None = None,
) -> Trajectory:
    """Alternate action selection and tool execution until an answer or a limit.

    The policy draw and the failure-injection draw use independent streams
    spawned from ``seed``, so toggling failure injection never perturbs
    which actions the policy samples.
    """
    layer = layer if layer is not None else env.new_layer()
    layer.begin_trajectory()
    policy_seq, tool_seq = np.random.SeedSequence(seed).spawn(2)
    policy_rng, tool_rng = np.random.default_rng(policy_seq), np.random.default_rng(tool_seq)
    state = AgentState(instance, limits.max_steps)
    steps: list[Step] = []
    log_probs: list[float] = []
    used = 0
    final = None
    while state.step < limits.max_steps:
        feats = state.features()
        p = policy.distribution(state)
        a = _sample(p, policy_rng)
        thought, tool, arg = bind(a, state)
        raw = emit(tool, arg)
        call = parse_emission(raw, state.step + 1)
        valid = call is not None
        if not valid:
            call_rec = ToolCall(tool, arg, state.step + 1)
            obs = Observation.error("malformed-action", f"{tool} requires a non-empty argument; nothing was executed")
        elif tool == "answer":
            call_rec, obs = call, Observation("ok", f"answer submitted: {arg}")
            final = arg
        elif tool == "reflect":
            call_rec, obs = call, Observation("ok", thought)
        else:
            call_rec = call
            obs = execute(call, layer, tool_rng)
            if obs.status == "ok" and tool in SEARCH_TOOLS:
                advance_chain(state, a, obs.hits, env.corpus.titles)
        steps.append(Step(thought, call_rec, obs, valid, int(obs.status == "ok"), a, tuple(feats)))
        log_probs.append(float(np.log(p[a])) if p[a] > 0 else float("-inf"))
        state.step += 1
        state.last_status = obs.status
        state.last_action = a
        used += 1 + len(obs.payload)
        if final is not None or used >= limits.max_context_units:
            break
    return Trajectory(
        instance.id, tuple(steps), final, seed, tuple(log_probs),
        {"hops": instance.hops, "difficulty": instance.difficulty},
    )


def rollout_many(policy: Policy, instances: Sequence[QueryInstance], env: SearchEnv, limits: Limits, seeds: Sequence[int], layer: ToolLayer | None = None) -> list[Trajectory]:
    layer = layer if layer is not None else env.new_layer()
    return [rollout(policy, inst, env, limits, s, layer) for inst, s in zip(instances, seeds)]
