"""Template-based question rendering."""

from __future__ import annotations

import hashlib
import json
import random
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

from drsandbox import SandboxError
from drsandbox.kgforge.graph import KnowledgeGraph, relation_phrase
from drsandbox.kgforge.paths import ReasoningPath
from drsandbox.text import contains

DIFFICULTY_BY_HOPS = {1: "easy", 2: "easy", 3: "medium", 4: "hard", 5: "hard"}


class MissingTemplate(SandboxError):
    pass


class LeakageError(SandboxError):
    """Rendered text names an entity it must keep hidden."""


def difficulty_for(hops: int) -> str:
    return DIFFICULTY_BY_HOPS[hops]


@dataclass(frozen=True)
class QueryInstance:
    id: str
    query_text: str
    entities: tuple[str, ...]
    answer: str
    hops: int
    difficulty: str
    provenance: ReasoningPath
    obfuscation_log: tuple[tuple[str, str], ...] = ()

    def __post_init__(self):
        if not self.entities:
            raise ValueError("entity set must be non-empty")
        if not self.answer:
            raise ValueError("answer must be non-empty")
        if difficulty_for(self.hops) != self.difficulty:
            raise ValueError(f"difficulty {self.difficulty!r} inconsistent with {self.hops} hops")

    def to_record(self) -> dict:
        """The public JSON Lines record (id, query, entities, answer, hops, difficulty)
        plus the provenance needed to re-run the oracle."""
        return {
            "id": self.id,
            "query": self.query_text,
            "entities": list(self.entities),
            "answer": self.answer,
            "hops": self.hops,
            "difficulty": self.difficulty,
            "provenance": self.provenance.to_dict(),
            "obfuscation_log": [list(x) for x in self.obfuscation_log],
        }

    @classmethod
    def from_record(cls, rec: Mapping) -> "QueryInstance":
        return cls(
            id=rec["id"],
            query_text=rec["query"],
            entities=tuple(rec["entities"]),
            answer=rec["answer"],
            hops=int(rec["hops"]),
            difficulty=rec["difficulty"],
            provenance=ReasoningPath.from_dict(rec["provenance"]),
            obfuscation_log=tuple(tuple(x) for x in rec.get("obfuscation_log", ())),
        )


@dataclass(frozen=True)
class TemplateBank:
    """Question templates.

    ``openers`` take ``{head}``; each relation's hop templates take
    ``{phrase}``; ``closers`` end the question.
    """

    openers: tuple[str, ...]
    hops: Mapping[str, tuple[str, ...]]
    closers: tuple[str, ...]
    head_nouns: Mapping[str, str] = field(default_factory=dict)

    @classmethod
    def generic(cls, relations: Sequence[str]) -> "TemplateBank":
        hop_forms = (
            "Take the {phrase} of it.",
            "Move on to its {phrase}.",
            "Identify the {phrase} of that one.",
        )
        return cls(
            openers=("Consider {head}.", "Start from {head}.", "There is {head}."),
            hops={r: hop_forms for r in relations},
            closers=("What is the name of the entity you end at?", "Name the final entity.", "Which entity is it?"),
        )


def entity_set(graph: KnowledgeGraph, path: ReasoningPath) -> tuple[str, ...]:
    """Key entities E: the intermediate chain entities, or the start entity for 1-hop paths."""
    ids = [h.target for h in path.hops[:-1]] or [path.start_entity]
    return tuple(graph.name(i) for i in ids)


def _head(path: ReasoningPath, bank: TemplateBank) -> str:
    kind = next((c.text for c in path.start_conditions if c.attribute == "kind"), None)
    noun = bank.head_nouns.get(kind, kind) if kind else "entity"
    clauses = [c for c in path.start_conditions if c.attribute != "kind"]
    if not clauses:
        return f"a certain {noun}"
    return f"the {noun} whose " + " and whose ".join(c.phrase() for c in clauses)


def _instance_id(path: ReasoningPath, seed: int) -> str:
    blob = json.dumps([path.to_dict(), seed], sort_keys=True).encode()
    return "q-" + hashlib.sha1(blob).hexdigest()[:12]


def check_leakage(text: str, names: Sequence[str]) -> list[str]:
    return [n for n in names if contains(text, n)]


def render_text(path: ReasoningPath, bank: TemplateBank, seed: int) -> str:
    for rel in path.relations:
        if not bank.hops.get(rel):
            raise MissingTemplate(f"no template for relation {rel!r}")
    rng = random.Random(seed)
    parts = [rng.choice(bank.openers).format(head=_head(path, bank))]
    for rel in path.relations:
        parts.append(rng.choice(bank.hops[rel]).format(phrase=relation_phrase(rel)))
    parts.append(rng.choice(bank.closers))
    return " ".join(parts)


def render_query(graph: KnowledgeGraph, path: ReasoningPath, template_bank: TemplateBank, seed: int) -> QueryInstance:
    """Turn a reasoning path into a question that hides every chain entity."""
    text = render_text(path, template_bank, seed)
    hidden = [graph.name(e) for e in path.entities]
    leaked = check_leakage(text, hidden)
    if leaked:
        raise LeakageError(f"question names hidden entities {leaked}")
    hops = len(path.hops)
    return QueryInstance(
        id=_instance_id(path, seed),
        query_text=text,
        entities=entity_set(graph, path),
        answer=graph.name(path.answer_entity),
        hops=hops,
        difficulty=difficulty_for(hops),
        provenance=path,
    )


def with_path(instance: QueryInstance, path: ReasoningPath, text: str, log) -> QueryInstance:
    return replace(instance, provenance=path, query_text=text, obfuscation_log=tuple(log))
