"""Deterministic synthetic encyclopedia used as the bundled knowledge graph."""

from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Iterable, Mapping

from drsandbox.kgforge.graph import KnowledgeGraph, attribute_phrase, build_graph, relation_phrase
from drsandbox.text import normalize

_SYLLABLES = (
    "bar cel dor fen gav hul jin kor lom mav nep orv pim quel ras sov tem ulv vask wex yar zol "
    "bri cai dru eth fyn gor hes ilm jas kev lur mir nox opa pry rul sef tav umb vel"
).split()

SECTORS = ("aerospace", "biotech", "retail", "logistics", "energy", "software", "textiles", "mining")
SIZES = ("small", "midsize", "large")
REGIONS = ("northern", "southern", "eastern", "western", "central", "coastal")
CLIMATES = ("arid", "temperate", "humid", "alpine", "maritime")
PROFESSIONS = ("engineer", "economist", "chemist", "architect", "novelist", "physician", "lawyer")
SPECIALTIES = ("medicine", "law", "engineering", "arts", "sciences")

RELATIONS = (
    "founder", "home_city", "parent_company", "alma_mater", "birthplace",
    "mentor", "mayor", "rector", "campus_city",
)


@dataclass(frozen=True)
class CorpusSpec:
    cities: int = 20
    companies: int = 40
    persons: int = 64
    universities: int = 12
    seed: int = 20240501


def _reserved_vocabulary() -> set[str]:
    words = set(SECTORS + SIZES + REGIONS + CLIMATES + PROFESSIONS + SPECIALTIES)
    words |= {relation_phrase(r) for r in RELATIONS}
    words |= {"city", "company", "person", "university", "founding year", "birth year"}
    return {normalize(w) for w in words}


class _NameMaker:
    def __init__(self, rng: random.Random):
        self.rng = rng
        self.used: list[str] = []
        self.reserved = _reserved_vocabulary()

    def _ok(self, cand: str) -> bool:
        c = normalize(cand)
        if any(c in u or u in c for u in self.used):
            return False
        return not any(c in w or (len(w) > 3 and w in c) for w in self.reserved)

    def token(self) -> str:
        while True:
            n = self.rng.choice((2, 3, 3))
            cand = "".join(self.rng.choice(_SYLLABLES) for _ in range(n)).capitalize()
            if self._ok(cand):
                self.used.append(normalize(cand))
                return cand


def bundled_records(spec: CorpusSpec = CorpusSpec()) -> list[dict]:
    rng = random.Random(spec.seed)
    names = _NameMaker(rng)
    ents: dict[str, dict] = {}

    def add(prefix: str, i: int, name: str, attrs: dict, parts: tuple[str, ...]) -> str:
        eid = f"{prefix}{i:03d}"
        ents[eid] = {"kind": "entity", "id": eid, "name": name, "attributes": attrs, "partitions": list(parts)}
        return eid

    cities = [
        add("C", i, names.token(), {
            "kind": "city", "region": rng.choice(REGIONS), "climate": rng.choice(CLIMATES),
            "founding_year": str(rng.randint(1700, 1950)),
        }, ("internal", "web"))
        for i in range(spec.cities)
    ]
    companies = [
        add("K", i, names.token(), {
            "kind": "company", "sector": rng.choice(SECTORS), "size": rng.choice(SIZES),
            "founding_year": str(rng.randint(1900, 2020)),
        }, ("internal", "web"))
        for i in range(spec.companies)
    ]
    persons = [
        add("P", i, f"{names.token()} {names.token()}", {
            "kind": "person", "profession": rng.choice(PROFESSIONS),
            "birth_year": str(rng.randint(1930, 1995)),
        }, ("academic", "web"))
        for i in range(spec.persons)
    ]
    univs = [
        add("U", i, names.token(), {
            "kind": "university", "specialty": rng.choice(SPECIALTIES),
            "founding_year": str(rng.randint(1600, 1990)),
        }, ("academic", "web"))
        for i in range(spec.universities)
    ]

    edges: list[tuple[str, str, str]] = []
    for k in companies:
        edges.append((k, "founder", rng.choice(persons)))
        edges.append((k, "home_city", rng.choice(cities)))
        if rng.random() < 1 / 3:
            edges.append((k, "parent_company", rng.choice([c for c in companies if c != k])))
    for p in persons:
        edges.append((p, "alma_mater", rng.choice(univs)))
        edges.append((p, "birthplace", rng.choice(cities)))
        if rng.random() < 0.3:
            edges.append((p, "mentor", rng.choice([q for q in persons if q != p])))
    for c in cities:
        edges.append((c, "mayor", rng.choice(persons)))
    for u in univs:
        edges.append((u, "rector", rng.choice(persons)))
        edges.append((u, "campus_city", rng.choice(cities)))

    return make_records(
        {eid: (r["name"], r["attributes"], tuple(r["partitions"])) for eid, r in ents.items()}, edges
    )


def make_records(
    entities: Mapping[str, tuple[str, Mapping[str, str], tuple[str, ...]]],
    edges: Iterable[tuple[str, str, str]],
) -> list[dict]:
    """Records for a graph whose documents are generated from its facts.

    Each document lists the entity's attributes and one sentence per incoming
    edge ("<target> is the <relation> of <source>."), which makes every hop
    retrievable by searching the source name plus the relation phrase.
    """
    edges = list(edges)
    incoming: dict[str, list[str]] = {eid: [] for eid in entities}
    for s, r, t in sorted(edges, key=lambda e: (e[2], e[1], e[0])):
        incoming[t].append(f"{entities[t][0]} is the {relation_phrase(r)} of {entities[s][0]}.")
    records: list[dict] = []
    for eid, (name, attrs, parts) in entities.items():
        records.append(
            {"kind": "entity", "id": eid, "name": name, "attributes": dict(attrs), "partitions": list(parts)}
        )
    records += [{"kind": "edge", "source": s, "relation": r, "target": t} for s, r, t in edges]
    for eid, (name, attrs, _) in entities.items():
        head = f"{name} is a {attrs['kind']}." if "kind" in attrs else f"{name}."
        body = [head]
        body += [f"Its {attribute_phrase(a)} is {v}." for a, v in sorted(attrs.items()) if a != "kind"]
        body += incoming[eid]
        records.append({"kind": "document", "entity": eid, "text": " ".join(body)})
    return records


def bundled_graph(spec: CorpusSpec = CorpusSpec()) -> KnowledgeGraph:
    return build_graph(bundled_records(spec))
