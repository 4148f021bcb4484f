"""Reasoning paths, the brute-force answer oracle and constrained path sampling."""

from __future__ import annotations

import itertools
import random
from dataclasses import dataclass
from typing import Iterable, NamedTuple, Sequence

from drsandbox import SandboxError
from drsandbox.kgforge.graph import KnowledgeGraph, attribute_phrase, relation_phrase
from drsandbox.text import contains

MAX_HOPS = 5
MAX_DRAWS = 1000


class NoValidPath(SandboxError):
    pass


class Hop(NamedTuple):
    source: str
    relation: str
    target: str


@dataclass(frozen=True)
class Condition:
    """Attribute constraint on the start entity.

    ``values`` is the accepted value set; ``text`` is how the constraint is
    worded in a question (the exact value, or a weakened description).
    """

    attribute: str
    values: frozenset[str]
    text: str

    @classmethod
    def exact(cls, attribute: str, value: str) -> "Condition":
        return cls(attribute, frozenset([value]), value)

    def matches(self, graph: KnowledgeGraph, entity_id: str) -> bool:
        return graph.entities[entity_id].attributes.get(self.attribute) in self.values

    def phrase(self) -> str:
        return f"{attribute_phrase(self.attribute)} is {self.text}"

    def to_dict(self) -> dict:
        return {"attribute": self.attribute, "values": sorted(self.values), "text": self.text}

    @classmethod
    def from_dict(cls, d: dict) -> "Condition":
        return cls(d["attribute"], frozenset(d["values"]), d["text"])


@dataclass(frozen=True)
class ReasoningPath:
    hops: tuple[Hop, ...]
    start_conditions: tuple[Condition, ...]

    def __post_init__(self):
        object.__setattr__(self, "hops", tuple(Hop(*h) for h in self.hops))
        object.__setattr__(self, "start_conditions", tuple(self.start_conditions))
        if not 1 <= len(self.hops) <= MAX_HOPS:
            raise ValueError(f"hop count {len(self.hops)} outside [1, {MAX_HOPS}]")
        for a, b in zip(self.hops, self.hops[1:]):
            if a.target != b.source:
                raise ValueError(f"hops not chain-connected at {a} -> {b}")

    @property
    def start_entity(self) -> str:
        return self.hops[0].source

    @property
    def answer_entity(self) -> str:
        return self.hops[-1].target

    @property
    def relations(self) -> tuple[str, ...]:
        return tuple(h.relation for h in self.hops)

    @property
    def entities(self) -> tuple[str, ...]:
        return (self.hops[0].source,) + tuple(h.target for h in self.hops)

    def to_dict(self) -> dict:
        return {
            "hops": [list(h) for h in self.hops],
            "start_conditions": [c.to_dict() for c in self.start_conditions],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ReasoningPath":
        return cls(
            tuple(Hop(*h) for h in d["hops"]),
            tuple(Condition.from_dict(c) for c in d["start_conditions"]),
        )


def start_candidates(graph: KnowledgeGraph, conditions: Iterable[Condition]) -> set[str]:
    conds = list(conditions)
    return {eid for eid in graph.entities if all(c.matches(graph, eid) for c in conds)}


def answer_candidates(
    graph: KnowledgeGraph,
    conditions: Sequence[Condition],
    relations: Sequence[str],
    drop: int | None = None,
) -> set[str]:
    """Exhaustive solve of the chain constraint set.

    Variables x_0..x_H; constraints are ``conditions`` on x_0 and one edge
    constraint per relation between x_{k-1} and x_k. ``drop=k`` (1-based)
    deletes the k-th edge constraint, decoupling x_k from its predecessor.
    Returns the set of values x_H can take.
    """
    frontier = start_candidates(graph, conditions)
    for k, rel in enumerate(relations, 1):
        if drop == k:
            frontier = set(graph.entities)
            if k == len(relations):
                break
            continue
        frontier = {t for s in frontier for t in graph.targets(s, rel)}
    if drop is not None and drop == len(relations):
        return set(graph.entities)
    return frontier


def check_necessity(graph: KnowledgeGraph, path: ReasoningPath | None) -> bool:
    """True iff deleting any single hop leaves at least two answer candidates."""
    try:
        if path is None or not path.hops:
            return False
        if any(e not in graph.entities for e in path.entities):
            return False
    except (AttributeError, TypeError):
        return False
    for k in range(1, len(path.hops) + 1):
        if len(answer_candidates(graph, path.start_conditions, path.relations, drop=k)) < 2:
            return False
    return True


def is_reachable(graph: KnowledgeGraph, path: ReasoningPath) -> bool:
    """Each hop target's document states the relation phrase and names its source."""
    for h in path.hops:
        doc = graph.documents[h.target]
        if not (contains(doc, relation_phrase(h.relation)) and contains(doc, graph.name(h.source))):
            return False
    return True


def is_shortcut_free(graph: KnowledgeGraph, path: ReasoningPath) -> bool:
    """No edge joins two path entities that are not consecutive on the path."""
    ents = path.entities
    for i, j in itertools.combinations(range(len(ents)), 2):
        if j - i >= 2 and graph.adjacent(ents[i], ents[j]):
            return False
    return True


def _choose_conditions(
    graph: KnowledgeGraph, start: str, relations: Sequence[str], answer: str, rng: random.Random
) -> tuple[Condition, ...] | None:
    attrs = graph.entities[start].attributes
    base = [Condition.exact("kind", attrs["kind"])] if "kind" in attrs else []
    others = sorted(a for a in attrs if a != "kind")
    rng.shuffle(others)
    for size in range(0, len(others) + 1):
        for combo in itertools.combinations(others, size):
            conds = tuple(base + [Condition.exact(a, attrs[a]) for a in combo])
            if not conds:
                continue
            if start_candidates(graph, conds) != {start}:
                continue
            if answer_candidates(graph, conds, relations) == {answer}:
                return conds
    return None


def validate_path(graph: KnowledgeGraph, path: ReasoningPath) -> str | None:
    """Return the name of the first violated sampling constraint, or None."""
    if answer_candidates(graph, path.start_conditions, path.relations) != {path.answer_entity}:
        return "non-unique"
    if not is_reachable(graph, path):
        return "unreachable"
    if not is_shortcut_free(graph, path):
        return "shortcut"
    if not check_necessity(graph, path):
        return "unnecessary-hop"
    return None


def sample_path(graph: KnowledgeGraph, hops: int, seed: int, max_draws: int = MAX_DRAWS) -> ReasoningPath:
    """Draw a reachable, necessary, shortcut-free chain of ``hops`` hops.

    Deterministic in ``(graph, hops, seed)``. Raises :class:`NoValidPath`
    after ``max_draws`` rejected candidates.
    """
    if not 1 <= hops <= MAX_HOPS:
        raise NoValidPath(f"hops must be in [1, {MAX_HOPS}], got {hops}")
    rng = random.Random(seed)
    starts = [eid for eid in graph.entities if graph.out_edges(eid)]
    if not starts:
        raise NoValidPath("graph has no edges")
    for _ in range(max_draws):
        cur = rng.choice(starts)
        chain: list[Hop] = []
        seen = {cur}
        for _ in range(hops):
            options = [
                (rel, t) for rel, ts in sorted(graph.out_edges(cur).items()) for t in ts if t not in seen
            ]
            if not options:
                break
            rel, nxt = rng.choice(options)
            chain.append(Hop(cur, rel, nxt))
            seen.add(nxt)
            cur = nxt
        if len(chain) != hops:
            continue
        rels = [h.relation for h in chain]
        conds = _choose_conditions(graph, chain[0].source, rels, chain[-1].target, rng)
        if conds is None:
            continue
        path = ReasoningPath(tuple(chain), conds)
        if validate_path(graph, path) is None:
            return path
    raise NoValidPath(f"no valid {hops}-hop path after {max_draws} draws")
