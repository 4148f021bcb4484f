"""End-to-end synthesis: sample -> render -> obfuscate -> filter."""

from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Iterable, Sequence

from drsandbox.kgforge.filters import filter_instance
from drsandbox.kgforge.graph import KnowledgeGraph
from drsandbox.kgforge.obfuscate import Rule, obfuscate
from drsandbox.kgforge.paths import NoValidPath, sample_path
from drsandbox.kgforge.render import LeakageError, QueryInstance, TemplateBank, render_query
from drsandbox.retrieval import Corpus

log = logging.getLogger(__name__)


def default_bank(graph: KnowledgeGraph) -> TemplateBank:
    return TemplateBank.generic(graph.relations)


def synthesize(
    graph: KnowledgeGraph,
    hops: int | Sequence[int],
    count: int,
    seed: int,
    bank: TemplateBank | None = None,
    rules: Sequence[Rule] = (),
    unique_paths: bool = True,
    max_attempts: int | None = None,
) -> list[QueryInstance]:
    """Emit up to ``count`` instances that pass every filter.

    ``hops`` may be a list, cycled over attempts. Per-attempt seeds are derived
    from ``seed`` so the output is a pure function of the arguments.
    """
    hop_list = [hops] if isinstance(hops, int) else list(hops)
    bank = bank or default_bank(graph)
    corpus = Corpus.from_graph(graph)
    out: list[QueryInstance] = []
    seen: set = set()
    attempts = max_attempts if max_attempts is not None else 40 * count
    for i in range(attempts):
        if len(out) >= count:
            break
        sub = seed * 1_000_003 + i
        h = hop_list[i % len(hop_list)]
        try:
            path = sample_path(graph, h, sub)
        except NoValidPath:
            continue
        if unique_paths and path.hops in seen:
            continue
        try:
            inst = render_query(graph, path, bank, sub)
        except LeakageError:
            continue
        inst = obfuscate(inst, rules, graph)
        verdict = filter_instance(inst, graph, corpus)
        if not verdict.passed:
            log.debug("rejected %s: %s", inst.id, verdict.detail)
            continue
        seen.add(path.hops)
        out.append(inst)
    return out


def write_instances(instances: Iterable[QueryInstance], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for inst in instances:
            fh.write(json.dumps(inst.to_record(), ensure_ascii=False, sort_keys=True) + "\n")


def read_instances(path: str | Path) -> list[QueryInstance]:
    with open(path, encoding="utf-8") as fh:
        return [QueryInstance.from_record(json.loads(line)) for line in fh if line.strip()]
