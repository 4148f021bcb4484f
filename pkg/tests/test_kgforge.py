import itertools

import pytest
from hypothesis import given, settings, strategies as st

from drsandbox.kgforge import (
    CoarsenRule,
    Condition,
    GraphError,
    Hop,
    NoValidPath,
    PeriodRule,
    ReasoningPath,
    TemplateBank,
    answer_candidates,
    build_graph,
    check_necessity,
    filter_instance,
    obfuscate,
    render_query,
    sample_path,
    synthesize,
)
from drsandbox.kgforge.render import MissingTemplate, difficulty_for
from drsandbox.text import contains, normalize

from conftest import brute_force_answers, graph_from

TWO = [
    {"kind": "entity", "id": "x", "name": "Velmora", "attributes": {"kind": "city"}},
    {"kind": "entity", "id": "y", "name": "Ashgrove Holt", "attributes": {"kind": "person"}},
    {"kind": "edge", "source": "x", "relation": "mayor", "target": "y"},
    {"kind": "document", "entity": "x", "text": "Velmora is a city."},
    {"kind": "document", "entity": "y", "text": "Ashgrove Holt is the mayor of Velmora."},
]


# --- build_graph -----------------------------------------------------------

def test_build_graph_counts():
    g = build_graph(TWO)
    assert len(g.entities) == 2 and len(g.edges) == 1


def test_build_graph_order_independent():
    assert build_graph(TWO) == build_graph(list(reversed(TWO)))
    assert build_graph(TWO).to_records() == build_graph(list(reversed(TWO))).to_records()


@pytest.mark.parametrize(
    "mutate, kind",
    [
        (lambda r: r + [{"kind": "edge", "source": "x", "relation": "mayor", "target": "nope"}], "dangling-edge"),
        (lambda r: r + [{"kind": "entity", "id": "z", "name": "VELMORA ", "attributes": {}}], "duplicate-entity"),
        (lambda r: r[:3] + r[4:], "empty-document"),
        (lambda r: r[:3] + [{"kind": "document", "entity": "x", "text": "no name here"}] + r[4:], "empty-document"),
    ],
)
def test_build_graph_errors(mutate, kind):
    with pytest.raises(GraphError) as exc:
        build_graph(mutate(list(TWO)))
    assert exc.value.kind == kind


def test_bundled_graph_invariants(bundled):
    assert len(bundled.entities) >= 60
    names = [normalize(e.name) for e in bundled.entities.values()]
    assert len(set(names)) == len(names)
    for e in bundled.edges:
        assert e.source in bundled.entities and e.target in bundled.entities
    for eid, ent in bundled.entities.items():
        assert contains(bundled.documents[eid], ent.name)
    # no name is a substring of another (keeps PRM matching unambiguous)
    for a, b in itertools.permutations(names, 2):
        assert a not in b


# --- answer oracle -----------------------------------------------------------

def test_answer_candidates_agree_with_enumeration(chain_graph):
    conds = (Condition.exact("kind", "company"), Condition.exact("sector", "mining"))
    rels = ("founder", "alma_mater")
    for drop in (None, 1, 2):
        assert answer_candidates(chain_graph, conds, rels, drop) == brute_force_answers(chain_graph, conds, rels, drop)


# --- sample_path -------------------------------------------------------------

def _line_graph(n=6):
    ents = {f"N{i}": (name, {"kind": "place", "rank": str(i)}) for i, name in enumerate(
        ["Ardwyn", "Belquor", "Cinvale", "Drumhal", "Elsmark", "Fentrow"][:n])}
    ents.update({f"M{i}": (name, {"kind": "place", "rank": f"m{i}"}) for i, name in enumerate(
        ["Gorvith", "Hathel", "Ivmoor", "Jarnel", "Kestwin", "Lorvane"][:n])})
    edges = [(f"N{i}", "next", f"N{i+1}") for i in range(n - 1)]
    edges += [(f"M{i}", "next", f"M{i+1}") for i in range(n - 1)]
    return graph_from(ents, edges)


def test_sample_path_deterministic():
    g = _line_graph()
    p1 = sample_path(g, 3, seed=7)
    assert len(p1.hops) == 3
    assert sample_path(g, 3, seed=7) == p1


def test_sample_path_star_graph_infeasible():
    ents = {"hub": ("Centrix", {"kind": "hub"})}
    ents.update({f"s{i}": (n, {"kind": "spoke", "i": str(i)}) for i, n in enumerate(["Oltar", "Pemvy", "Rusk", "Sundral"])})
    g = graph_from(ents, [("hub", "spoke", f"s{i}") for i in range(4)])
    with pytest.raises(NoValidPath):
        sample_path(g, 4, seed=0)


def _all_paths(g, hops):
    out = []

    def walk(chain):
        if len(chain) == hops:
            out.append(tuple(chain))
            return
        cur = chain[-1].target if chain else None
        for e in g.edges:
            if (cur is None or e.source == cur) and e.target not in {h.source for h in chain}:
                walk(chain + [Hop(e.source, e.relation, e.target)])

    walk([])
    return out


def test_sample_path_rejects_shortcuts():
    # A->B->C with a direct A->C shortcut; D->E->F is clean.
    g = graph_from(
        {
            "A": ("Aldmere", {"kind": "firm", "tag": "a"}),
            "B": ("Bristane", {"kind": "firm", "tag": "b"}),
            "C": ("Corvalis", {"kind": "firm", "tag": "c"}),
            "D": ("Dunhallow", {"kind": "firm", "tag": "d"}),
            "E": ("Eskerby", {"kind": "firm", "tag": "e"}),
            "F": ("Fallowmere", {"kind": "firm", "tag": "f"}),
        },
        [("A", "owner", "B"), ("B", "partner", "C"), ("A", "rival", "C"),
         ("D", "owner", "E"), ("E", "partner", "F")],
    )
    shortcut_paths = [p for p in _all_paths(g, 2) if {p[0].source, p[-1].target} == {"A", "C"}]
    assert shortcut_paths, "fixture must contain a shortcut-bearing path"
    for seed in range(40):
        try:
            path = sample_path(g, 2, seed)
        except NoValidPath:
            continue
        ents = path.entities
        for e in g.edges:  # exhaustive edge scan
            i, j = ents.index(e.source) if e.source in ents else None, ents.index(e.target) if e.target in ents else None
            if i is not None and j is not None:
                assert abs(i - j) == 1, f"shortcut {e} in {path}"


def test_sampled_paths_satisfy_constraints(bundled):
    for seed in range(15):
        path = sample_path(bundled, 2 + seed % 3, seed)
        rels = path.relations
        assert answer_candidates(bundled, path.start_conditions, rels) == {path.answer_entity}
        assert check_necessity(bundled, path)


# --- check_necessity ---------------------------------------------------------

def test_necessity_false_when_last_relation_identifies_answer():
    # "curator" has a single target globally, so deleting hop 1 still pins the answer.
    g = graph_from(
        {
            "A": ("Amberlyn", {"kind": "museum", "city": "x"}),
            "A2": ("Bellhaven", {"kind": "museum", "city": "y"}),
            "B": ("Corrin Vale", {"kind": "person"}),
            "B2": ("Delwyn Aster", {"kind": "person"}),
            "C": ("Eldermoor", {"kind": "gallery"}),
        },
        [("A", "director", "B"), ("A2", "director", "B2"), ("B", "curator", "C")],
    )
    path = ReasoningPath((Hop("A", "director", "B"), Hop("B", "curator", "C")), (Condition.exact("city", "x"),))
    rels = path.relations
    assert brute_force_answers(g, path.start_conditions, rels, drop=1) == {"C"}
    assert check_necessity(g, path) is False


def test_necessity_true_when_only_conjunction_is_unique(chain_graph):
    path = ReasoningPath(
        (Hop("A", "founder", "B"), Hop("B", "alma_mater", "C")),
        (Condition.exact("kind", "company"), Condition.exact("sector", "mining")),
    )
    for drop in (1, 2):
        assert len(brute_force_answers(chain_graph, path.start_conditions, path.relations, drop)) >= 2
    assert check_necessity(chain_graph, path) is True


def test_necessity_false_on_malformed_path(chain_graph):
    assert check_necessity(chain_graph, None) is False
    bogus = ReasoningPath((Hop("A", "founder", "ZZ"),), ())
    assert check_necessity(chain_graph, bogus) is False


# --- render_query ------------------------------------------------------------

def _chain_path():
    return ReasoningPath(
        (Hop("A", "founder", "B"), Hop("B", "alma_mater", "C")),
        (Condition.exact("kind", "company"), Condition.exact("sector", "mining")),
    )


def test_render_two_hop(chain_graph):
    bank = TemplateBank.generic(chain_graph.relations)
    inst = render_query(chain_graph, _chain_path(), bank, seed=0)
    assert inst.entities == ("Tamsin Orrell",)
    assert inst.answer == "Brelmoor"
    assert inst.hops == 2 and inst.difficulty == "easy"
    assert "mining" in inst.query_text and "founder" in inst.query_text and "alma mater" in inst.query_text


def test_render_no_leakage_and_paraphrase(chain_graph):
    bank = TemplateBank.generic(chain_graph.relations)
    texts = set()
    for seed in range(12):
        inst = render_query(chain_graph, _chain_path(), bank, seed)
        for name in ("Quorvex", "Tamsin Orrell", "Brelmoor"):
            assert normalize(name) not in normalize(inst.query_text)
        assert (inst.entities, inst.answer) == (("Tamsin Orrell",), "Brelmoor")
        texts.add(inst.query_text)
    assert len(texts) > 1


def test_render_missing_template(chain_graph):
    bank = TemplateBank.generic(["founder"])
    with pytest.raises(MissingTemplate):
        render_query(chain_graph, _chain_path(), bank, 0)


def test_difficulty_mapping():
    assert [difficulty_for(h) for h in range(1, 6)] == ["easy", "easy", "medium", "hard", "hard"]


# --- obfuscate -----------------------------------------------------------------

def _year_graph():
    # Five companies; 2015 shared by two (selectivity 0.4); sector separates them.
    ents = {
        "K1": ("Arnholt", {"kind": "company", "founding_year": "2015", "sector": "mining"}),
        "K2": ("Bexley", {"kind": "company", "founding_year": "2015", "sector": "retail"}),
        "K3": ("Caldris", {"kind": "company", "founding_year": "2014", "sector": "retail"}),
        "K4": ("Dornach", {"kind": "company", "founding_year": "1990", "sector": "mining"}),
        "K5": ("Emberly", {"kind": "company", "founding_year": "1991", "sector": "energy"}),
        "P1": ("Fenna Ostrow", {"kind": "person"}),
        "P2": ("Galen Marsh", {"kind": "person"}),
        "P3": ("Hester Quill", {"kind": "person"}),
        "P4": ("Isolde Brack", {"kind": "person"}),
        "P5": ("Jorund Vale", {"kind": "person"}),
    }
    edges = [(f"K{i}", "founder", f"P{i}") for i in range(1, 6)]
    return graph_from(ents, edges)


def _year_instance(g, conds):
    path = ReasoningPath((Hop("K1", "founder", "P1"),), conds)
    return render_query(g, path, TemplateBank.generic(g.relations), 3)


def test_obfuscate_applies_when_unique():
    g = _year_graph()
    inst = _year_instance(g, (Condition.exact("kind", "company"), Condition.exact("founding_year", "2015"),
                              Condition.exact("sector", "mining")))
    out = obfuscate(inst, [PeriodRule("founding_year")], g)
    assert out.obfuscation_log == (("period:founding_year", "applied"),)
    assert "mid-2010s" in out.query_text and "2015" not in out.query_text
    assert (out.answer, out.entities, out.hops) == (inst.answer, inst.entities, inst.hops)
    assert brute_force_answers(g, out.provenance.start_conditions, out.provenance.relations) == {"P1"}


def test_obfuscate_rolls_back_when_ambiguous():
    g = _year_graph()
    # founding year alone is unique-by-pairing with sector "mining"? No: use year only.
    inst = _year_instance(g, (Condition.exact("kind", "company"), Condition.exact("sector", "mining"),
                              Condition.exact("founding_year", "2015")))
    rule = CoarsenRule("sector", {"industrial": frozenset({"mining", "retail", "energy"})})
    out = obfuscate(inst, [rule], g)
    # "industrial" + 2015 admits K1 and K2 -> rolled back
    assert out.obfuscation_log == (("coarsen:sector", "rolled_back"),)
    assert out.query_text == inst.query_text
    weakened = [Condition.exact("kind", "company"), Condition("sector", rule.groups["industrial"], "industrial"),
                Condition.exact("founding_year", "2015")]
    assert len(brute_force_answers(g, weakened, ["founder"])) == 2


def test_obfuscate_rollback_three_candidates():
    g = _year_graph()
    inst = _year_instance(g, (Condition.exact("kind", "company"), Condition.exact("founding_year", "2015"),
                              Condition.exact("sector", "mining")))
    rule = CoarsenRule("founding_year", {"recent": frozenset({"2014", "2015", "1990"})})
    coarse = [Condition.exact("kind", "company"), Condition("founding_year", rule.groups["recent"], "recent"),
              Condition.exact("sector", "mining")]
    assert len(brute_force_answers(g, coarse, ["founder"])) == 2
    # weaken sector too so three companies satisfy
    rules = [CoarsenRule("sector", {"any": frozenset({"mining", "retail", "energy"})}, min_selectivity=0.0)]
    out = obfuscate(inst, rules, g)
    assert out.obfuscation_log[-1][1] == "rolled_back"


def test_obfuscate_empty_rules_identity(chain_graph):
    inst = render_query(chain_graph, _chain_path(), TemplateBank.generic(chain_graph.relations), 0)
    assert obfuscate(inst, [], chain_graph) is inst


# --- filter_instance -----------------------------------------------------------

def test_filter_direct_answer():
    ents = {
        "A": ("Quorvex", {"kind": "company", "sector": "mining"}),
        "A2": ("Halvane", {"kind": "company", "sector": "retail"}),
        "B": ("Tamsin Orrell", {"kind": "person"}),
        "B2": ("Dovic Pennat", {"kind": "person"}),
    }
    g0 = graph_from(ents, [("A", "founder", "B"), ("A2", "founder", "B2")])
    recs = g0.to_records()
    for r in recs:  # answer document restates every condition of the question
        if r["kind"] == "document" and r["entity"] == "B":
            r["text"] += " Tamsin Orrell is the founder of the mining company, a company whose sector is mining."
    g = build_graph(recs)
    path = ReasoningPath((Hop("A", "founder", "B"),), (Condition.exact("kind", "company"), Condition.exact("sector", "mining")))
    inst = render_query(g, path, TemplateBank.generic(g.relations), 0)
    assert filter_instance(inst, g).rejected_by == "direct_answer"


def test_filter_pipeline_instance_passes(bundled):
    (inst,) = synthesize(bundled, 2, 1, seed=5)
    v = filter_instance(inst, bundled)
    assert v.passed and v.rejected_by == "none"
    assert answer_candidates(bundled, inst.provenance.start_conditions, inst.provenance.relations) == {
        inst.provenance.answer_entity}


def test_filter_broken_chain(chain_graph):
    inst = render_query(chain_graph, _chain_path(), TemplateBank.generic(chain_graph.relations), 0)
    recs = chain_graph.to_records()
    for r in recs:
        if r["kind"] == "document" and r["entity"] == "C":
            r["text"] = "Brelmoor is a university."
    g = build_graph(recs)
    assert filter_instance(inst, g).rejected_by == "broken_chain"


def test_filter_non_unique(bundled):
    (inst,) = synthesize(bundled, 2, 1, seed=5)
    p = inst.provenance
    loose = ReasoningPath(p.hops, tuple(c for c in p.start_conditions if c.attribute == "kind"))
    assert len(brute_force_answers(bundled, loose.start_conditions, loose.relations)) >= 2
    weak = render_query(bundled, loose, TemplateBank.generic(bundled.relations), 0)
    assert filter_instance(weak, bundled).rejected_by == "non_unique_answer"


# --- pipeline properties ---------------------------------------------------------

@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000), hops=st.integers(1, 4))
def test_pipeline_soundness(bundled, seed, hops):
    insts = synthesize(bundled, hops, 1, seed)
    for inst in insts:
        p = inst.provenance
        assert answer_candidates(bundled, p.start_conditions, p.relations) == {p.answer_entity}
        assert bundled.name(p.answer_entity) == inst.answer
        assert check_necessity(bundled, p)
        for name in inst.entities + (inst.answer,):
            assert not contains(inst.query_text, name)
        assert inst.difficulty == difficulty_for(inst.hops)
        assert inst.answer not in inst.entities


def test_synthesize_deterministic(bundled):
    a = synthesize(bundled, [1, 2, 3], 20, seed=3)
    b = synthesize(bundled, [1, 2, 3], 20, seed=3)
    assert [i.to_record() for i in a] == [i.to_record() for i in b]
