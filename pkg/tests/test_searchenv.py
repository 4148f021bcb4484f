import numpy as np
import pytest

from drsandbox.retrieval import Corpus, EmptyCorpus, UnknownEntity, crawl, search
from drsandbox.rewards import prm
from drsandbox.searchenv import (
    VOCABULARY,
    ChainPolicy,
    Limits,
    Observation,
    ScriptedPolicy,
    SearchEnv,
    Step,
    ToolCall,
    ToolLayer,
    ToolLayerConfig,
    Trajectory,
    UniformPolicy,
    emit,
    execute,
    merge_caches,
    read_trajectories,
    rollout,
    step_format_valid,
    write_trajectories,
)
from drsandbox.text import token_set

DOCS = {
    "e1": "alpha beta gamma",
    "e2": "alpha delta",
    "e3": "omega",
}


def small_layer(**cfg):
    return ToolLayer(Corpus.from_documents(DOCS), ToolLayerConfig(**cfg))


# --- search / crawl ----------------------------------------------------------

def test_search_self_retrieval(bundled_env):
    corpus = bundled_env.corpus
    for eid in list(corpus.documents)[:10]:
        assert search(corpus, corpus.documents[eid], 3)[0].entity_id == eid


def test_search_zero_overlap_ties_by_id():
    hits = search(Corpus.from_documents(DOCS), "zzz unrelated", 3)
    assert [h.entity_id for h in hits] == ["e1", "e2", "e3"]
    assert all(h.score == 0 for h in hits)


def test_search_ranking_matches_hand_count():
    query = "alpha beta"
    corpus = Corpus.from_documents(DOCS)
    expected = sorted(DOCS, key=lambda i: (-len(token_set(query) & token_set(DOCS[i])), i))
    hits = search(corpus, query, 3)
    assert [h.entity_id for h in hits] == expected == ["e1", "e2", "e3"]
    assert [h.score for h in hits] == [2, 1, 0]


def test_search_errors():
    with pytest.raises(ValueError):
        search(Corpus.from_documents(DOCS), "alpha", 0)
    with pytest.raises(EmptyCorpus):
        search(Corpus.from_documents({}), "alpha", 1)


def test_crawl(bundled_env):
    corpus = bundled_env.corpus
    eid = next(iter(corpus.documents))
    assert crawl(corpus, eid) == crawl(corpus, eid) == corpus.documents[eid]
    with pytest.raises(UnknownEntity):
        crawl(corpus, "no-such-id")
    for hit in search(corpus, "founder company", 3):
        assert crawl(corpus, hit.entity_id).startswith(hit.snippet)


# --- tool layer ----------------------------------------------------------------

def test_cache_hit_identical_payload():
    layer = small_layer()
    rng = np.random.default_rng(0)
    call = ToolCall("web_search", "alpha")
    a, b = execute(call, layer, rng), execute(call, layer, rng)
    assert not a.from_cache and b.from_cache
    assert a.payload == b.payload and a.hits == b.hits


def test_forced_failure_exhausts_after_three_attempts():
    layer = small_layer(failure_injection_rate=1.0, max_retries=2)
    obs = execute(ToolCall("web_search", "alpha"), layer, np.random.default_rng(0))
    assert obs.status == "error" and obs.error_kind == "exhausted-retries"
    assert obs.attempts == 3 and obs.payload


def test_no_injection_no_errors_monte_carlo():
    layer = small_layer(failure_injection_rate=0.0, cache_capacity=0, rate_limit=10**5)
    rng = np.random.default_rng(1)
    errors = sum(execute(ToolCall("web_search", f"alpha {i}"), layer, rng).status == "error" for i in range(10_000))
    assert errors == 0


def test_partial_injection_recovers_by_retry():
    layer = small_layer(failure_injection_rate={"web_search": 0.5}, max_retries=2, cache_capacity=0, rate_limit=10**5)
    rng = np.random.default_rng(2)
    obs = [execute(ToolCall("web_search", "alpha"), layer, rng) for _ in range(4000)]
    fail = np.mean([o.status == "error" for o in obs])
    assert abs(fail - 0.5**3) < 0.03


def test_rate_limit_and_unknown_tool():
    layer = small_layer(rate_limit=2)
    rng = np.random.default_rng(0)
    statuses = [execute(ToolCall("web_search", "alpha"), layer, rng).status for _ in range(3)]
    assert statuses == ["ok", "ok", "error"]
    limited = execute(ToolCall("web_search", "beta"), layer, rng)
    assert limited.error_kind == "rate-limited" and "limit" in limited.payload
    layer.begin_trajectory()
    assert execute(ToolCall("web_search", "beta"), layer, rng).status == "ok"
    bad = execute(ToolCall("answer", "x"), layer, rng)
    assert bad.error_kind == "unknown-tool"


def test_crawl_unknown_entity_is_error_observation():
    obs = execute(ToolCall("crawl", "nope"), small_layer(), np.random.default_rng(0))
    assert obs.status == "error" and obs.error_kind == "unknown-entity"


def test_routing_uses_partitions(bundled_env):
    layer = bundled_env.new_layer()
    rng = np.random.default_rng(0)
    parts = bundled_env.corpus.partitions
    for tool, tag in [("internal_search", "internal"), ("academic_search", "academic")]:
        obs = execute(ToolCall(tool, "founding year"), layer, rng)
        assert obs.hits and all(tag in parts[h] for h in obs.hits)


def test_cache_capacity_evicts_oldest():
    layer = small_layer(cache_capacity=2)
    rng = np.random.default_rng(0)
    for q in ("alpha", "beta", "gamma"):
        execute(ToolCall("web_search", q), layer, rng)
    assert list(layer.cache) == [("web_search", "beta"), ("web_search", "gamma")]


def test_merge_caches_first_writer_wins():
    a, b = small_layer(), small_layer()
    rng = np.random.default_rng(0)
    execute(ToolCall("web_search", "alpha"), a, rng)
    execute(ToolCall("web_search", "alpha"), b, rng)
    execute(ToolCall("crawl", "e3"), b, rng)
    merged = merge_caches([a, b])
    assert len(merged) == 2 and merged[("web_search", "alpha")] is a.cache[("web_search", "alpha")]


def test_config_validation():
    with pytest.raises(ValueError):
        ToolLayerConfig(failure_injection_rate=1.5)
    with pytest.raises(ValueError):
        ToolLayerConfig(max_retries=-1)
    with pytest.raises(ValueError):
        Observation("error", "  ")


# --- format validity -------------------------------------------------------------

def test_step_format_valid():
    assert step_format_valid(emit("web_search", "alpha"))
    assert step_format_valid(emit("reflect", ""))
    assert not step_format_valid(emit("web_search", "a") + emit("answer", "b"))
    assert not step_format_valid(emit("answer", ""))
    assert not step_format_valid("<tool_call>{not json}</tool_call>")
    assert not step_format_valid('<tool_call>{"tool": "teleport", "argument": "x"}</tool_call>')
    assert not step_format_valid("web_search alpha")


# --- rollout ---------------------------------------------------------------------

def test_immediate_answer_is_one_step(bundled_env, two_hop):
    t = rollout(ScriptedPolicy(("answer:last",)), two_hop[0], bundled_env, Limits(5), seed=0)
    assert len(t) == 1 and t.final_answer == "unknown" and t.steps[0].format_valid


def test_unbindable_template_is_format_invalid(bundled_env, two_hop):
    t = rollout(ScriptedPolicy(("web_search:next", "answer:last")), two_hop[0], bundled_env, Limits(5), seed=0)
    first = t.steps[0]
    assert not first.format_valid and first.tool_success == 0
    assert first.observation.error_kind == "malformed-action"
    assert len(t) == 2


def test_uniform_policy_respects_step_limit(bundled_env, two_hop):
    for i, q in enumerate(two_hop):
        for seed in range(5):
            t = rollout(UniformPolicy(), q, bundled_env, Limits(max_steps=5), seed=seed * 100 + i)
            assert 1 <= len(t) <= 5


def test_context_limit_stops_early(bundled_env, two_hop):
    t = rollout(ScriptedPolicy(("web_search:start", "crawl:last")), two_hop[0], bundled_env, Limits(8, 50), seed=0)
    assert len(t) == 1 and t.final_answer is None


def test_oracle_policy_full_coverage(bundled_env, two_hop):
    for q in two_hop:
        t = rollout(ChainPolicy(), q, bundled_env, Limits(8), seed=0)
        assert prm(t, q.entities) == 1.0
        assert t.final_answer == q.answer
        assert [bundled_env.corpus.titles[s.observation.hits[0]] for s in t.steps[1:-1]] == list(q.entities) + [q.answer]


def test_rollout_replay_determinism(bundled_env, two_hop):
    cfg = ToolLayerConfig(failure_injection_rate=0.3)
    env = SearchEnv(bundled_env.corpus, cfg)
    a = rollout(UniformPolicy(), two_hop[1], env, Limits(8), seed=42)
    b = rollout(UniformPolicy(), two_hop[1], env, Limits(8), seed=42)
    assert a == b


def test_failure_injection_does_not_change_actions(bundled_env, two_hop):
    noisy = SearchEnv(bundled_env.corpus, ToolLayerConfig(failure_injection_rate=0.5))
    a = rollout(UniformPolicy(), two_hop[2], bundled_env, Limits(3), seed=5)
    b = rollout(UniformPolicy(), two_hop[2], noisy, Limits(3), seed=5)
    assert a.action_ids[0] == b.action_ids[0]


def test_log_probs_match_policy(bundled_env, two_hop):
    from drsandbox.policyopt import PolicyParams

    params = PolicyParams.random(7, scale=1.0)
    t = rollout(params, two_hop[0], bundled_env, Limits(8), seed=3)
    for s, lp in zip(t.steps, t.action_log_probs):
        p = params.probs(np.array(s.features))[s.action_id]
        assert abs(np.exp(lp) - p) <= 1e-12


def test_trajectory_invariants():
    ok = Observation("ok", "x")
    ans = Step("t", ToolCall("answer", "A"), ok, True, 1)
    srch = Step("t", ToolCall("web_search", "q"), ok, True, 1)
    with pytest.raises(ValueError):
        Trajectory("q", ())
    with pytest.raises(ValueError):
        Trajectory("q", (ans, srch))
    with pytest.raises(ValueError):
        Trajectory("q", (srch,), action_log_probs=(0.0, 0.0))
    with pytest.raises(ValueError):
        Step("t", ToolCall("web_search", "q"), Observation.error("x", "boom"), True, 1)


def test_trace_round_trip(tmp_path, bundled_env, two_hop):
    trajs = [rollout(UniformPolicy(), q, bundled_env, Limits(6), seed=i) for i, q in enumerate(two_hop[:4])]
    path = tmp_path / "traces.jsonl"
    write_trajectories(trajs, path)
    assert read_trajectories(path) == trajs


def test_vocabulary_is_fixed():
    assert VOCABULARY[0] == "web_search:start" and "answer:last" in VOCABULARY
