"""Templated action vocabulary and agent state for the surrogate search agent.

The agent tracks a resolved chain ``x_0, x_1, ...``: a start search pins down
the entity matching the question's conditions, each follow-up search looks
for "<last resolved name> <next relation>" and takes the best unseen hit.
Templates bind to this chain; a search or crawl template with nothing to
bind to produces an emission with an empty argument, which the format check
rejects. Answering before anything is resolved submits an explicit guess.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from drsandbox.kgforge.graph import relation_phrase
from drsandbox.kgforge.render import QueryInstance
from drsandbox.kgforge.paths import MAX_HOPS

VOCABULARY = (
    "web_search:start",
    "web_search:next",
    "internal_search:next",
    "crawl:last",
    "reflect",
    "answer:last",
)
DIFFICULTIES = ("easy", "medium", "hard")
UNKNOWN_ANSWER = "unknown"
_STATUSES = ("none", "ok", "error")

FEATURE_NAMES = (
    ("bias", "started")
    + tuple(f"remaining={k}" for k in range(MAX_HOPS + 1))
    + tuple(f"last_status={s}" for s in _STATUSES)
    + tuple(f"last_action={a}" for a in VOCABULARY + ("none",))
    + ("step_fraction",)
    + tuple(f"difficulty={d}" for d in DIFFICULTIES)
    + tuple(f"resolved[{k}]" for k in range(MAX_HOPS + 1))
)
NUM_FEATURES = len(FEATURE_NAMES)


@dataclass
class AgentState:
    instance: QueryInstance
    max_steps: int
    step: int = 0  # steps taken so far
    chain: list[tuple[str, str]] = field(default_factory=list)  # (entity id, title)
    last_status: str = "none"
    last_action: int | None = None

    @property
    def started(self) -> bool:
        return bool(self.chain)

    @property
    def remaining(self) -> int:
        return self.instance.hops - (len(self.chain) - 1) if self.chain else self.instance.hops

    def features(self) -> np.ndarray:
        x = np.zeros(NUM_FEATURES)
        x[0] = 1.0
        i = 2
        if self.started:
            x[1] = 1.0
            x[i + max(0, min(self.remaining, MAX_HOPS))] = 1.0
        i += MAX_HOPS + 1
        x[i + _STATUSES.index(self.last_status)] = 1.0
        i += len(_STATUSES)
        x[i + (len(VOCABULARY) if self.last_action is None else self.last_action)] = 1.0
        i += len(VOCABULARY) + 1
        x[i] = self.step / self.max_steps
        i += 1
        x[i + DIFFICULTIES.index(self.instance.difficulty)] = 1.0
        i += len(DIFFICULTIES)
        for k in range(min(len(self.chain), MAX_HOPS + 1)):
            x[i + k] = 1.0
        return x


def start_query(instance: QueryInstance) -> str:
    conds = instance.provenance.start_conditions
    kind = [c.text for c in conds if c.attribute == "kind"]
    rest = [c.phrase() for c in conds if c.attribute != "kind"]
    return " ".join(kind + rest)


def bind(action_id: int, state: AgentState) -> tuple[str, str, str]:
    """Return (thought, tool, argument) for a template in the current state."""
    name = VOCABULARY[action_id]
    tool, _, slot = name.partition(":")
    relations = state.instance.provenance.relations
    last = state.chain[-1][1] if state.chain else ""
    if slot == "start":
        arg = start_query(state.instance)
        return f"I first need the entity described by: {arg}.", tool, arg
    if slot == "next":
        k = len(state.chain) - 1
        if not state.chain or k >= len(relations):
            return "I want to follow the next relation, but there is none to follow.", tool, ""
        phrase = relation_phrase(relations[k])
        return f"So far I have {last}. Next I look up the {phrase} of {last}.", tool, f"{last} {phrase}"
    if slot == "last":
        ident = state.chain[-1][0] if state.chain else ""
        if tool == "crawl":
            return (f"Let me read the full page of {last}." if last else "Nothing to read yet."), tool, ident
        if not last:
            return "I have resolved nothing, so I can only guess.", tool, UNKNOWN_ANSWER
        return f"My answer is {last}.", tool, last
    chain = " -> ".join(t for _, t in state.chain) or "nothing yet"
    return f"Chain so far: {chain}; {state.remaining} hop(s) remaining.", tool, ""


def advance_chain(state: AgentState, action_id: int, hits: tuple[str, ...], titles) -> None:
    """Update the resolved chain after a successful search."""
    name = VOCABULARY[action_id]
    if not hits:
        return
    if name.endswith(":start"):
        state.chain = [(hits[0], titles.get(hits[0], hits[0]))]
    elif name.endswith(":next"):
        seen = {e for e, _ in state.chain}
        pick = next((h for h in hits if h not in seen), None)
        if pick is not None:
            state.chain.append((pick, titles.get(pick, pick)))
