"""Token-overlap document retrieval over an entity corpus."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, NamedTuple

from drsandbox import SandboxError
from drsandbox.text import token_set

SNIPPET_CHARS = 400


class EmptyCorpus(SandboxError):
    pass


class UnknownEntity(SandboxError):
    pass


class Hit(NamedTuple):
    entity_id: str
    score: int
    snippet: str
    title: str = ""


@dataclass(frozen=True)
class Corpus:
    documents: Mapping[str, str]
    partitions: Mapping[str, tuple[str, ...]]
    _tokens: Mapping[str, frozenset[str]]
    titles: Mapping[str, str] = field(default_factory=dict)

    @classmethod
    def from_documents(
        cls,
        documents: Mapping[str, str],
        partitions: Mapping[str, tuple[str, ...]] | None = None,
        titles: Mapping[str, str] | None = None,
    ) -> "Corpus":
        docs = {k: documents[k] for k in sorted(documents)}
        parts = {k: tuple((partitions or {}).get(k, ("web",))) for k in docs}
        names = {k: (titles or {}).get(k, k) for k in docs}
        return cls(docs, parts, {k: token_set(v) for k, v in docs.items()}, names)

    @classmethod
    def from_graph(cls, graph) -> "Corpus":
        ents = graph.entities.values()
        return cls.from_documents(graph.documents, {e.id: e.partitions for e in ents}, {e.id: e.name for e in ents})

    def ids(self, partition: str | None = None) -> list[str]:
        if partition is None:
            return list(self.documents)
        return [k for k in self.documents if partition in self.partitions[k]]


def search(corpus: Corpus, query_text: str, k: int, partition: str | None = None) -> list[Hit]:
    """Top-k documents by distinct shared (non-stopword) tokens.

    Ties break by ascending entity id. Snippets are the first 400 characters.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    ids = corpus.ids(partition)
    if not ids:
        raise EmptyCorpus(f"no documents in partition {partition!r}")
    q = token_set(query_text)
    scored = sorted(((-len(q & corpus._tokens[i]), i) for i in ids))
    return [Hit(i, -neg, corpus.documents[i][:SNIPPET_CHARS], corpus.titles.get(i, i)) for neg, i in scored[:k]]


def crawl(corpus: Corpus, entity_id: str) -> str:
    try:
        return corpus.documents[entity_id]
    except KeyError:
        raise UnknownEntity(f"unknown entity {entity_id!r}") from None
