"""Knowledge-graph types and record ingestion."""

from __future__ import annotations

import json
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from types import MappingProxyType
from typing import Iterable, Mapping

from drsandbox import SandboxError
from drsandbox.text import contains, normalize


class GraphError(SandboxError):
    """Raised by :func:`build_graph`; ``kind`` is one of
    ``duplicate-entity``, ``dangling-edge``, ``empty-document`` or ``bad-record``."""

    def __init__(self, kind: str, detail: str):
        super().__init__(f"{kind}: {detail}")
        self.kind = kind
        self.detail = detail


@dataclass(frozen=True)
class Entity:
    id: str
    name: str
    attributes: Mapping[str, str] = field(default_factory=dict)
    partitions: tuple[str, ...] = ("web",)

    @property
    def kind(self) -> str | None:
        return self.attributes.get("kind")


@dataclass(frozen=True, order=True)
class Edge:
    source: str
    relation: str
    target: str


def relation_phrase(relation: str) -> str:
    """Surface phrase for a relation label (``home_city`` -> ``home city``)."""
    return relation.replace("_", " ")


def attribute_phrase(attribute: str) -> str:
    return attribute.replace("_", " ")


class KnowledgeGraph:
    """Immutable entity/edge/document store with adjacency indexes.

    Build instances with :func:`build_graph`; the constructor assumes the
    records were already validated.
    """

    def __init__(self, entities: Iterable[Entity], edges: Iterable[Edge], documents: Mapping[str, str]):
        ents = sorted(entities, key=lambda e: e.id)
        self.entities: Mapping[str, Entity] = MappingProxyType({e.id: e for e in ents})
        self.edges: tuple[Edge, ...] = tuple(sorted(set(edges)))
        self.documents: Mapping[str, str] = MappingProxyType({k: documents[k] for k in sorted(documents)})
        out: dict[str, dict[str, list[str]]] = defaultdict(lambda: defaultdict(list))
        inc: dict[str, dict[str, list[str]]] = defaultdict(lambda: defaultdict(list))
        for e in self.edges:
            out[e.source][e.relation].append(e.target)
            inc[e.target][e.relation].append(e.source)
        self._out = {s: {r: tuple(t) for r, t in rs.items()} for s, rs in out.items()}
        self._in = {t: {r: tuple(s) for r, s in rs.items()} for t, rs in inc.items()}
        self._by_name = {normalize(e.name): e.id for e in ents}
        self._adjacent = {frozenset((e.source, e.target)) for e in self.edges}

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, KnowledgeGraph):
            return NotImplemented
        return (
            dict(self.entities) == dict(other.entities)
            and self.edges == other.edges
            and dict(self.documents) == dict(other.documents)
        )

    def __hash__(self) -> int:  # identity-hashable so it can key caches
        return id(self)

    def __repr__(self) -> str:
        return f"KnowledgeGraph(|V|={len(self.entities)}, |E|={len(self.edges)})"

    def name(self, entity_id: str) -> str:
        return self.entities[entity_id].name

    def by_name(self, name: str) -> str | None:
        return self._by_name.get(normalize(name))

    def out_edges(self, entity_id: str) -> Mapping[str, tuple[str, ...]]:
        return self._out.get(entity_id, {})

    def targets(self, entity_id: str, relation: str) -> tuple[str, ...]:
        return self._out.get(entity_id, {}).get(relation, ())

    def relation_targets(self, relation: str) -> set[str]:
        return {e.target for e in self.edges if e.relation == relation}

    def relation_sources(self, relation: str) -> set[str]:
        return {e.source for e in self.edges if e.relation == relation}

    def adjacent(self, a: str, b: str) -> bool:
        """True if any edge (either direction, any relation) joins ``a`` and ``b``."""
        return frozenset((a, b)) in self._adjacent

    @property
    def relations(self) -> tuple[str, ...]:
        return tuple(sorted({e.relation for e in self.edges}))

    def to_records(self) -> list[dict]:
        recs: list[dict] = []
        for e in self.entities.values():
            recs.append(
                {
                    "kind": "entity",
                    "id": e.id,
                    "name": e.name,
                    "attributes": dict(sorted(e.attributes.items())),
                    "partitions": list(e.partitions),
                }
            )
        for ed in self.edges:
            recs.append({"kind": "edge", "source": ed.source, "relation": ed.relation, "target": ed.target})
        for eid, text in self.documents.items():
            recs.append({"kind": "document", "entity": eid, "text": text})
        return recs


def build_graph(records: Iterable[Mapping]) -> KnowledgeGraph:
    """Validate entity/edge/document records and build a graph.

    The result does not depend on record order.
    """
    entities: dict[str, Entity] = {}
    names: dict[str, str] = {}
    edges: list[Edge] = []
    docs: dict[str, str] = {}
    for rec in records:
        kind = rec.get("kind")
        if kind == "entity":
            eid, name = str(rec["id"]), str(rec["name"])
            key = normalize(name)
            if eid in entities:
                raise GraphError("duplicate-entity", f"id {eid!r} defined twice")
            if key in names:
                raise GraphError("duplicate-entity", f"name {name!r} used by {names[key]!r} and {eid!r}")
            names[key] = eid
            attrs = {str(k): str(v) for k, v in (rec.get("attributes") or {}).items()}
            parts = tuple(sorted(rec.get("partitions") or ("web",)))
            entities[eid] = Entity(eid, name, MappingProxyType(attrs), parts)
        elif kind == "edge":
            edges.append(Edge(str(rec["source"]), str(rec["relation"]), str(rec["target"])))
        elif kind == "document":
            eid = str(rec["entity"])
            if eid in docs:
                raise GraphError("bad-record", f"second document for {eid!r}")
            docs[eid] = str(rec["text"])
        else:
            raise GraphError("bad-record", f"unknown record kind {kind!r}")

    for ed in edges:
        for end in (ed.source, ed.target):
            if end not in entities:
                raise GraphError("dangling-edge", f"{ed.source} -{ed.relation}-> {ed.target}: unknown {end!r}")
    for eid in docs:
        if eid not in entities:
            raise GraphError("dangling-edge", f"document for unknown entity {eid!r}")
    for eid, ent in entities.items():
        text = docs.get(eid, "")
        if not text.strip():
            raise GraphError("empty-document", f"entity {eid!r} has no document")
        if not contains(text, ent.name):
            raise GraphError("empty-document", f"document of {eid!r} does not mention {ent.name!r}")
    return KnowledgeGraph(entities.values(), edges, docs)


def load_records(path: str | Path) -> list[dict]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                out.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise GraphError("bad-record", f"{path}:{lineno}: {exc}") from exc
    return out


def load_graph(path: str | Path) -> KnowledgeGraph:
    return build_graph(load_records(path))


def save_graph(graph: KnowledgeGraph, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in graph.to_records():
            fh.write(json.dumps(rec, ensure_ascii=False, sort_keys=True) + "\n")
