"""Condition obfuscation with oracle-checked rollback."""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Mapping, Protocol, Sequence

from drsandbox.kgforge.graph import KnowledgeGraph
from drsandbox.kgforge.paths import Condition, ReasoningPath, answer_candidates
from drsandbox.kgforge.render import QueryInstance, with_path

DEFAULT_MIN_SELECTIVITY = 0.2


def selectivity(graph: KnowledgeGraph, attribute: str, value: str) -> float:
    """Fraction of entities carrying ``attribute`` whose value equals ``value``."""
    vals = [e.attributes[attribute] for e in graph.entities.values() if attribute in e.attributes]
    if not vals:
        return 0.0
    return sum(v == value for v in vals) / len(vals)


class Rule(Protocol):
    name: str
    attribute: str
    min_selectivity: float

    def weaken(self, cond: Condition) -> Condition | None: ...


_YEAR = re.compile(r"^(1[0-9]|20)\d\d$")


@dataclass(frozen=True)
class PeriodRule:
    """Exact year -> early/mid/late decade ("2015" -> "mid-2010s")."""

    attribute: str
    min_selectivity: float = DEFAULT_MIN_SELECTIVITY
    name: str = "period"

    def weaken(self, cond: Condition) -> Condition | None:
        if len(cond.values) != 1:
            return None
        (value,) = cond.values
        if not _YEAR.match(value):
            return None
        year = int(value)
        decade, within = divmod(year, 10)
        decade *= 10
        if within <= 3:
            label, years = "early", range(decade, decade + 4)
        elif within <= 6:
            label, years = "mid", range(decade + 4, decade + 7)
        else:
            label, years = "late", range(decade + 7, decade + 10)
        return Condition(cond.attribute, frozenset(str(y) for y in years), f"{label}-{decade}s")


@dataclass(frozen=True)
class CoarsenRule:
    """Replace a value with the label of the group containing it."""

    attribute: str
    groups: Mapping[str, frozenset[str]]
    min_selectivity: float = DEFAULT_MIN_SELECTIVITY
    name: str = "coarsen"

    def weaken(self, cond: Condition) -> Condition | None:
        if len(cond.values) != 1:
            return None
        (value,) = cond.values
        for label, members in sorted(self.groups.items()):
            if value in members:
                return Condition(cond.attribute, frozenset(members), label)
        return None


def obfuscate(instance: QueryInstance, rules: Sequence[Rule], graph: KnowledgeGraph) -> QueryInstance:
    """Apply weakening rules to eligible start conditions.

    A rule applies to a condition on its attribute when the exact value's
    selectivity exceeds the rule's threshold. If the weakened question no
    longer has a unique oracle answer the change is rolled back. Every
    attempt is logged as ``(rule:attribute, "applied" | "rolled_back")``.
    """
    if not rules:
        return instance
    path = instance.provenance
    text = instance.query_text
    log = list(instance.obfuscation_log)
    conds = list(path.start_conditions)
    for rule in rules:
        for i, cond in enumerate(conds):
            if cond.attribute != rule.attribute or len(cond.values) != 1:
                continue
            (value,) = cond.values
            if selectivity(graph, cond.attribute, value) <= rule.min_selectivity:
                continue
            new = rule.weaken(cond)
            if new is None or cond.phrase() not in text:
                continue
            trial = conds[:i] + [new] + conds[i + 1:]
            tag = f"{rule.name}:{cond.attribute}"
            if answer_candidates(graph, trial, path.relations) == {path.answer_entity}:
                text = text.replace(cond.phrase(), new.phrase(), 1)
                conds = trial
                log.append((tag, "applied"))
            else:
                log.append((tag, "rolled_back"))
    if not log[len(instance.obfuscation_log):]:
        return instance
    return with_path(instance, ReasoningPath(path.hops, tuple(conds)), text, log)
