import math

import numpy as np
import pytest

from drsandbox.alignment import (
    EmptyHighQualitySet,
    PreferencePair,
    QualityWeights,
    Scored,
    dpo_loss,
    draft_report,
    fit_dpo,
    fit_self_sft,
    instance_rubric,
    make_pairs,
    partition,
    passage_sources,
    quality_score,
    read_pairs,
    read_samples,
    reference_report,
    score_samples,
    self_sample,
    self_sft_loss,
    write_pairs,
    write_samples,
)
from drsandbox.policyopt import PolicyParams, bc_loss
from drsandbox.policyopt.gradcheck import finite_difference, relative_error
from drsandbox.reportrewards import CriterionScores, parse_report
from drsandbox.searchenv import ChainPolicy, rollout


class ConstJudge:
    def __init__(self, value):
        self.value = value

    def score(self, task, report, rubric, reference=None):
        return CriterionScores.constant(rubric, self.value)


@pytest.fixture(scope="module")
def samples(bundled_env, two_hop):
    return self_sample(PolicyParams.random(0, 1.0), two_hop[:4], 6, 7, bundled_env)


@pytest.fixture(scope="module")
def scored(samples, two_hop, bundled_env):
    return score_samples(samples.samples, two_hop[:4], bundled_env)


@pytest.fixture(scope="module")
def pairs(scored):
    return make_pairs(*partition(scored))


# ---- sampling ----------------------------------------------------------------


def test_deterministic_policy_flags_zero_diversity(bundled_env, two_hop):
    ss = self_sample(ChainPolicy(), two_hop[:2], 3, 0, bundled_env)
    assert all(ss.zero_diversity.values())
    reports = {s.report for s in ss.samples if s.input_id == two_hop[0].id}
    assert len(reports) == 1


def test_stochastic_samples_record_seeds(samples, two_hop):
    mine = [s for s in samples.samples if s.input_id == two_hop[0].id]
    assert len(mine) == 6 and len({s.seed for s in mine}) == 6
    assert not all(samples.zero_diversity.values())
    assert all(s.trajectory.seed == s.seed for s in mine)


def test_sampling_deterministic(bundled_env, two_hop, samples):
    again = self_sample(PolicyParams.random(0, 1.0), two_hop[:4], 6, 7, bundled_env)
    assert [s.to_record() for s in again.samples] == [s.to_record() for s in samples.samples]


def test_k_must_be_at_least_two(bundled_env, two_hop):
    with pytest.raises(ValueError):
        self_sample(ChainPolicy(), two_hop[:1], 1, 0, bundled_env)


def test_reference_report_is_clean(bundled_env, two_hop):
    q = two_hop[0]
    body = reference_report(q, bundled_env)
    r = parse_report(body)
    assert r.final_answer_ok and r.n_citations == q.hops + 1
    s = quality_score(body, instance_rubric(q, bundled_env.corpus), body,
                      passage_sources([c.target for c in r.citations], [c.description for c in r.citations], bundled_env.corpus))
    assert s.rule == 0.0 and s.judge == pytest.approx(1.0)


def test_malformed_steps_break_numbering(bundled_env, two_hop):
    from drsandbox.searchenv import ScriptedPolicy

    q = two_hop[0]
    # the third follow-up has no relation left to bind, so step 4 is malformed
    script = ("web_search:start", "web_search:next", "web_search:next", "web_search:next", "answer:last")
    t = rollout(ScriptedPolicy(script), q, bundled_env)
    body = draft_report(t, q, bundled_env.corpus)
    assert not t.steps[3].format_valid
    assert "3. web_search" in body and "4. " not in body and "5. answer" in body
    assert quality_score(body, instance_rubric(q, bundled_env.corpus), body).detail["format"] == -1


# ---- quality score --------------------------------------------------------------


def test_all_ten_clean_report_scores_w_judge(bundled_env, two_hop):
    q = two_hop[0]
    body = reference_report(q, bundled_env)
    r = parse_report(body)
    src = {c.target: c.description for c in r.citations}
    w = QualityWeights(w_judge=0.8)
    s = quality_score(body, instance_rubric(q, bundled_env.corpus), body, src, [ConstJudge(10.0)], w)
    assert s.combined == pytest.approx(0.8, abs=1e-12)


def test_two_format_violations(bundled_env, two_hop):
    q = two_hop[0]
    body = reference_report(q, bundled_env)
    broken = body.replace("<final_answer>", "").replace("2. web_search", "5. web_search")
    s = quality_score(broken, instance_rubric(q, bundled_env.corpus), body, {}, [ConstJudge(5.0)], QualityWeights(lambda_c=0.0))
    assert s.detail["format"] == -2
    assert s.rule == pytest.approx(-0.2, abs=1e-12)


def test_temporal_penalty(bundled_env, two_hop):
    q = two_hop[0]
    body = reference_report(q, bundled_env)
    dated = body.replace("## Search log", "The market will double by 2024.\n\n## Search log")
    rub = instance_rubric(q, bundled_env.corpus)
    s = quality_score(dated, rub, body, {}, [ConstJudge(5.0)], QualityWeights(lambda_c=0.0), now="2026-01-01")
    assert s.detail["tense_errors"] == 1 and s.rule == pytest.approx(-0.05)


def test_rule_penalties_never_increase(scored, samples):
    for s in scored:
        assert s.score <= 1.0


def test_judge_mean_over_evaluators(bundled_env, two_hop):
    q = two_hop[0]
    body = reference_report(q, bundled_env)
    s = quality_score(body, instance_rubric(q, bundled_env.corpus), body, {}, [ConstJudge(10.0), ConstJudge(4.0)], QualityWeights(lambda_c=0.0))
    assert s.judge == pytest.approx(0.7)


# ---- partition and pairs ----------------------------------------------------------


class _S:
    def __init__(self, i, input_id="x", h="h"):
        self.i, self.input_id, self.policy_hash = i, input_id, h


def fake(scores, input_id="x"):
    return [Scored(_S(i, input_id), v) for i, v in enumerate(scores)]


def test_partition_median_bipartition():
    items = fake([1, 2, 3, 3, 4, 5])
    plus, minus = partition(items, 3.0, 3.0)
    assert sorted(s.score for s in plus) == [4, 5] and sorted(s.score for s in minus) == [1, 2]


def test_partition_all_equal():
    plus, minus = partition(fake([2, 2, 2, 2]))
    assert plus == [] and minus == []
    plus, minus = partition(fake([2, 2, 2]), 1.0, 0.0)
    assert len(plus) == 3 and minus == []


def test_partition_properties(scored):
    plus, minus = partition(scored)
    assert len(plus) + len(minus) <= len(scored)
    assert not {id(s) for s in plus} & {id(s) for s in minus}
    prev = len(scored) + 1
    for hi in np.linspace(0, 1.2, 13):
        n = len(partition(scored, float(hi), 0.0)[0])
        assert n <= prev
        prev = n
    with pytest.raises(ValueError):
        partition(scored, 0.1, 0.5)


def test_percentile_thresholds_are_per_input():
    items = fake([0, 1, 2, 3], "a") + fake([10, 11, 12, 13], "b")
    plus, minus = partition(items)
    assert {(s.input_id, s.score) for s in plus} == {("a", 3), ("b", 13)}
    assert {(s.input_id, s.score) for s in minus} == {("a", 0), ("b", 10)}


def test_pairs_stay_within_input(pairs):
    assert pairs
    for p in pairs:
        assert p.chosen.input_id == p.rejected.input_id == p.input_id
        assert p.gap > 0 and p.chosen.policy_hash == p.policy_hash


def test_pair_validation():
    with pytest.raises(ValueError):
        PreferencePair("x", _S(0), _S(1), 0.0, "h")
    with pytest.raises(ValueError):
        PreferencePair("x", _S(0), _S(1, "y"), 0.5, "h")
    with pytest.raises(ValueError):
        PreferencePair("x", _S(0), _S(1, "x", "other"), 0.5, "h")


# ---- losses -------------------------------------------------------------------------


def test_dpo_zero_margin_is_ln2(pairs):
    p = PolicyParams.random(0, 1.0)
    assert dpo_loss(p, p, pairs, 0.1).value == pytest.approx(math.log(2), abs=1e-12)


def test_dpo_swap_antisymmetry(pairs):
    p, ref = PolicyParams.random(3, 1.0), PolicyParams.random(0, 1.0)
    a = dpo_loss(p, ref, pairs[:1], 0.5)
    b = dpo_loss(p, ref, [pairs[0].swapped()], 0.5)
    m = a.diagnostics["margin_mean"]
    assert b.diagnostics["margin_mean"] == pytest.approx(-m, abs=1e-12)
    assert b.value == pytest.approx(np.logaddexp(0, m), abs=1e-12)


def test_dpo_large_margin_limit(pairs):
    ref = PolicyParams.random(0, 1.0)
    fitted = fit_dpo(ref, pairs[:2], beta=1.0, steps=400, lr=2.0)
    assert fitted.losses[-1] < 0.05


def test_dpo_gradient_matches_fd(pairs):
    p, ref = PolicyParams.random(5, 0.5), PolicyParams.random(0, 1.0)
    rep = dpo_loss(p, ref, pairs[:4], 0.3)
    fd = finite_difference(lambda q: dpo_loss(q, ref, pairs[:4], 0.3).value, p)
    assert relative_error(rep.gradient, fd) < 1e-5


def test_dpo_fifty_steps_strictly_decrease(pairs):
    fr = fit_dpo(PolicyParams.random(0, 1.0), pairs, beta=0.1, steps=50, lr=0.5)
    assert all(b < a for a, b in zip(fr.losses, fr.losses[1:]))


def test_self_sft_equals_bc(scored):
    plus, _ = partition(scored)
    p = PolicyParams.random(2, 0.7)
    a = self_sft_loss(p, plus)
    b = bc_loss(p, [s.sample.trajectory for s in plus])
    assert a.value == pytest.approx(b.value, abs=1e-12)
    assert np.allclose(a.gradient, b.gradient, atol=1e-12)


def test_self_sft_empty():
    with pytest.raises(EmptyHighQualitySet):
        self_sft_loss(PolicyParams.zeros(), [])


def test_self_sft_near_zero_on_own_greedy_samples(bundled_env, two_hop):
    sharp = PolicyParams.random(4, 60.0)
    ss = self_sample(sharp, two_hop[:3], 2, 0, bundled_env)
    assert self_sft_loss(sharp, ss.samples).value < 1e-3


def test_self_sft_descent(scored):
    plus, _ = partition(scored)
    fr = fit_self_sft(PolicyParams.random(2, 0.7), plus, steps=1, lr=0.1)
    assert fr.losses[1] < fr.losses[0]


def test_jsonl_round_trip(samples, pairs, tmp_path):
    write_samples(samples.samples, tmp_path / "s.jsonl")
    back = read_samples(tmp_path / "s.jsonl")
    assert [s.to_record() for s in back] == [s.to_record() for s in samples.samples]
    write_pairs(pairs, tmp_path / "p.jsonl")
    again = read_pairs(tmp_path / "p.jsonl")
    assert len(again) == len(pairs)
    assert all(a.policy_hash == PolicyParams.random(0, 1.0).digest() for a in again)
    p = PolicyParams.random(1, 1.0)
    assert dpo_loss(p, p.with_weights(p.weights * 0.5), again, 0.2).value == pytest.approx(
        dpo_loss(p, p.with_weights(p.weights * 0.5), pairs, 0.2).value, abs=1e-12)
