import itertools

import pytest

from drsandbox.kgforge import build_graph, bundled_graph, make_records


def graph_from(entities, edges):
    """entities: {id: (name, attrs)}; edges: [(src, rel, dst)]."""
    ents = {eid: (name, attrs, ("web",)) for eid, (name, attrs) in entities.items()}
    return build_graph(make_records(ents, edges))


def brute_force_answers(graph, conditions, relations, drop=None):
    """Enumerate every assignment of the chain variables; independent of the
    frontier propagation used by the library."""
    ids = list(graph.entities)
    edge_set = {(e.source, e.relation, e.target) for e in graph.edges}
    answers = set()
    for combo in itertools.product(ids, repeat=len(relations) + 1):
        x0 = graph.entities[combo[0]]
        if drop != 0 and not all(x0.attributes.get(c.attribute) in c.values for c in conditions):
            continue
        ok = True
        for k, rel in enumerate(relations, 1):
            if k == drop:
                continue
            if (combo[k - 1], rel, combo[k]) not in edge_set:
                ok = False
                break
        if ok:
            answers.add(combo[-1])
    return answers


@pytest.fixture(scope="session")
def bundled():
    return bundled_graph()


@pytest.fixture
def chain_graph():
    """A -founder-> B -alma_mater-> C plus distractors so every relation has
    at least two targets."""
    return graph_from(
        {
            "A": ("Quorvex", {"kind": "company", "sector": "mining"}),
            "A2": ("Halvane", {"kind": "company", "sector": "retail"}),
            "B": ("Tamsin Orrell", {"kind": "person"}),
            "B2": ("Dovic Pennat", {"kind": "person"}),
            "C": ("Brelmoor", {"kind": "university"}),
            "C2": ("Castelund", {"kind": "university"}),
        },
        [("A", "founder", "B"), ("A2", "founder", "B2"), ("B", "alma_mater", "C"), ("B2", "alma_mater", "C2")],
    )


@pytest.fixture(scope="session")
def bundled_env(bundled):
    from drsandbox.searchenv import SearchEnv

    return SearchEnv.from_graph(bundled)


@pytest.fixture(scope="session")
def two_hop(bundled):
    from drsandbox.kgforge import synthesize

    return synthesize(bundled, 2, 12, seed=3)
