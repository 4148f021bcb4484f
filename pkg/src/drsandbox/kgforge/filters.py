"""Quality filters applied to rendered instances."""

from __future__ import annotations

from dataclasses import dataclass

from drsandbox.kgforge.graph import KnowledgeGraph, relation_phrase
from drsandbox.kgforge.paths import answer_candidates
from drsandbox.kgforge.render import QueryInstance
from drsandbox.retrieval import Corpus, search
from drsandbox.text import contains

REJECT_REASONS = ("direct_answer", "non_unique_answer", "broken_chain", "none")


@dataclass(frozen=True)
class FilterVerdict:
    passed: bool
    rejected_by: str
    detail: str = ""

    def __post_init__(self):
        if self.rejected_by not in REJECT_REASONS:
            raise ValueError(self.rejected_by)
        if self.passed != (self.rejected_by == "none"):
            raise ValueError("passed must coincide with rejected_by == 'none'")


def _reject(reason: str, detail: str) -> FilterVerdict:
    return FilterVerdict(False, reason, detail)


def filter_instance(instance: QueryInstance, graph: KnowledgeGraph, corpus: Corpus | None = None) -> FilterVerdict:
    """Direct-answer test, then oracle uniqueness, then chain integrity.

    Direct answer: a single search with the whole question scores the answer's
    document at least as high as any other document.
    """
    path = instance.provenance
    corpus = corpus or Corpus.from_graph(graph)
    hits = search(corpus, instance.query_text, k=len(corpus.documents))
    top = hits[0].score
    answer_score = next(h.score for h in hits if h.entity_id == path.answer_entity)
    if top > 0 and answer_score >= top:
        return _reject("direct_answer", f"answer document scores {answer_score} (top {top}) on one search")
    cands = answer_candidates(graph, path.start_conditions, path.relations)
    if len(cands) != 1 or path.answer_entity not in cands:
        return _reject("non_unique_answer", f"oracle finds {len(cands)} answers")
    for h in path.hops:
        doc = graph.documents[h.target]
        if not (contains(doc, relation_phrase(h.relation)) and contains(doc, graph.name(h.source))):
            return _reject("broken_chain", f"document of {h.target} lacks '{relation_phrase(h.relation)}' link")
    return FilterVerdict(True, "none")
