"""Knowledge-graph multi-hop query synthesis."""

from drsandbox.kgforge.corpus import CorpusSpec, bundled_graph, bundled_records, make_records
from drsandbox.kgforge.filters import FilterVerdict, filter_instance
from drsandbox.kgforge.graph import (
    Edge,
    Entity,
    GraphError,
    KnowledgeGraph,
    build_graph,
    load_graph,
    save_graph,
)
from drsandbox.kgforge.obfuscate import CoarsenRule, PeriodRule, obfuscate, selectivity
from drsandbox.kgforge.paths import (
    Condition,
    Hop,
    NoValidPath,
    ReasoningPath,
    answer_candidates,
    check_necessity,
    sample_path,
)
from drsandbox.kgforge.render import (
    LeakageError,
    MissingTemplate,
    QueryInstance,
    TemplateBank,
    difficulty_for,
    render_query,
)
from drsandbox.kgforge.synth import read_instances, synthesize, write_instances

__all__ = [
    "CoarsenRule", "Condition", "CorpusSpec", "Edge", "Entity", "FilterVerdict", "GraphError",
    "Hop", "KnowledgeGraph", "LeakageError", "MissingTemplate", "NoValidPath", "PeriodRule",
    "QueryInstance", "ReasoningPath", "TemplateBank", "answer_candidates", "build_graph",
    "bundled_graph", "bundled_records", "check_necessity", "difficulty_for", "filter_instance",
    "load_graph", "make_records", "obfuscate", "read_instances", "render_query", "sample_path", "save_graph",
    "selectivity", "synthesize", "write_instances",
]
