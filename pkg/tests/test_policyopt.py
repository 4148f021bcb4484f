import math

import numpy as np
import pytest
from scipy.stats import binom

from drsandbox.policyopt import (
    ActionSeq,
    DegenerateBatch,
    OutOfVocabulary,
    PolicyParams,
    StopCriterionConfig,
    TrainConfig,
    TrajectoryGroup,
    bc_loss,
    dapo_filter,
    dapo_objective,
    group_advantages,
    grpo_loss,
    gspo_objective,
    gspo_ratio,
    kl_per_state,
    load_policy,
    save_policy,
    sft_stop_threshold,
    train,
    write_metrics_csv,
)
from drsandbox.policyopt.gradcheck import finite_difference, random_groups, random_params, random_seq, relative_error


def perturbed(rng, params, scale=0.05):
    return params.with_weights(params.weights + rng.normal(0, scale, params.shape))


# --- policy ---------------------------------------------------------------------

def test_softmax_normalized_and_finite():
    rng = np.random.default_rng(0)
    p = random_params(rng, 5, 6, scale=30.0)
    probs = np.exp(p.log_probs(rng.normal(0, 1, (20, 5))))
    assert np.all(np.abs(probs.sum(axis=1) - 1) <= 1e-12)
    with pytest.raises(ValueError):
        PolicyParams(np.full((2, 2), np.nan), ("a", "b"), ("x", "y"))
    with pytest.raises(ValueError):
        PolicyParams(np.zeros((2, 0)), (), ("x", "y"))


def test_policy_json_round_trip(tmp_path):
    p = PolicyParams.random(3)
    save_policy(p, tmp_path / "p.json")
    q = load_policy(tmp_path / "p.json")
    assert np.array_equal(p.weights, q.weights) and p.vocabulary == q.vocabulary and p.digest() == q.digest()


# --- behaviour cloning -------------------------------------------------------------

def test_bc_uniform_one_step_is_log_v():
    p = PolicyParams(np.zeros((3, 5)), tuple("abcde"), ("x", "y", "z"))
    rep = bc_loss(p, [ActionSeq(np.ones((1, 3)), [2])])
    assert rep.value == pytest.approx(math.log(5), abs=1e-12)


def test_bc_optimum_near_zero():
    W = np.zeros((2, 3))
    W[0, 1] = 40.0
    p = PolicyParams(W, ("a", "b", "c"), ("bias", "x"))
    rep = bc_loss(p, [ActionSeq(np.array([[1.0, 0.0]] * 4), [1, 1, 1, 1])])
    assert rep.value < 1e-15 and np.linalg.norm(rep.gradient) < 1e-15


def test_bc_out_of_vocabulary():
    p = PolicyParams(np.zeros((2, 3)), ("a", "b", "c"), ("x", "y"))
    with pytest.raises(OutOfVocabulary):
        bc_loss(p, [ActionSeq(np.ones((1, 2)), [3])])


def test_bc_gradient_matches_fd():
    rng = np.random.default_rng(1)
    for _ in range(10):
        p = random_params(rng, 4, 5)
        seqs = [random_seq(rng, p) for _ in range(3)]
        fd = finite_difference(lambda q: bc_loss(q, seqs).value, p)
        assert relative_error(bc_loss(p, seqs).gradient, fd) < 1e-5


# --- advantages -------------------------------------------------------------------

def test_group_advantages():
    assert np.allclose(group_advantages([1, 0, 0, 1]), [0.5, -0.5, -0.5, 0.5])
    assert np.all(group_advantages([0.3] * 4) == 0)
    rng = np.random.default_rng(0)
    for _ in range(100):
        r = rng.normal(0, 3, int(rng.integers(2, 10)))
        a = group_advantages(r)
        assert abs(a.sum()) <= 1e-9
        assert np.allclose(group_advantages(r + rng.normal(0, 100)), a, atol=1e-9)
    with pytest.raises(ValueError):
        group_advantages([1.0])


# --- GRPO ---------------------------------------------------------------------------

def test_grpo_zero_advantage_zero_gradient():
    rng = np.random.default_rng(2)
    p = random_params(rng, 4, 5)
    groups = [TrajectoryGroup("g", tuple(random_seq(rng, p) for _ in range(3)), np.ones(3))]
    rep = grpo_loss(p, perturbed(rng, p), groups, beta=0.0)
    assert np.all(rep.gradient == 0)


def test_grpo_kl_zero_at_reference():
    rng = np.random.default_rng(3)
    p = random_params(rng, 4, 5)
    rep = grpo_loss(p, p, random_groups(rng, p), beta=0.7)
    assert rep.diagnostics["kl"] == 0.0
    assert np.all(kl_per_state(perturbed(rng, p), p, rng.normal(0, 1, (5, 4))) >= 0)


def test_grpo_gradient_matches_fd():
    rng = np.random.default_rng(4)
    for _ in range(10):
        p = random_params(rng, 4, 5)
        ref = perturbed(rng, p, 0.3)
        groups = random_groups(rng, p)
        beta = float(rng.uniform(0, 1))
        fd = finite_difference(lambda q: grpo_loss(q, ref, groups, beta).value, p)
        assert relative_error(grpo_loss(p, ref, groups, beta).gradient, fd) < 1e-5


# --- GSPO ---------------------------------------------------------------------------

def test_gspo_ratio_identities():
    rng = np.random.default_rng(5)
    p = random_params(rng, 3, 4)
    seq = random_seq(rng, p, old=p)
    assert gspo_ratio(p, p, seq) == pytest.approx(1.0, abs=1e-15)
    assert gspo_ratio(p, None, seq) == pytest.approx(1.0, abs=1e-15)
    # two actions with per-action ratios 4 and 1
    s = ActionSeq(np.ones((2, 3)), [0, 1], p.log_probs(np.ones((2, 3)))[[0, 1], [0, 1]] - [math.log(4), 0.0])
    assert gspo_ratio(p, None, s) == pytest.approx(2.0, abs=1e-12)


def test_gspo_ratio_is_root_of_product():
    rng = np.random.default_rng(6)
    for _ in range(50):
        p = random_params(rng, 3, 5)
        old = perturbed(rng, p, 0.2)
        seq = random_seq(rng, p, old=old)
        per = np.exp(p.log_probs(seq.features)[np.arange(len(seq)), seq.actions] - seq.old_log_probs)
        assert abs(gspo_ratio(p, old, seq) - np.prod(per) ** (1 / len(seq))) <= 1e-12


def test_gspo_on_policy_is_mean_advantage():
    rng = np.random.default_rng(7)
    p = random_params(rng, 4, 5)
    rep = gspo_objective(p, p, random_groups(rng, p, p), eps=0.2)
    assert abs(rep.value) <= 1e-9 and rep.diagnostics["clip_fraction"] == 0.0


def test_gspo_clip_branch():
    p = PolicyParams(np.zeros((1, 2)), ("a", "b"), ("bias",))
    eps = 0.1
    s = 1 + 2 * eps
    old = math.log(0.5) - math.log(s)
    members = (ActionSeq(np.ones((1, 1)), [0], [old]), ActionSeq(np.ones((1, 1)), [0], [math.log(0.5)]))
    g = TrajectoryGroup("g", members, np.array([1.0, 0.0]))
    rep = gspo_objective(p, None, [g], eps)
    # member 0: A=+0.5 clipped at (1+eps); member 1: A=-0.5 at s=1
    assert rep.value == pytest.approx(((1 + eps) * 0.5 + 1.0 * -0.5) / 2, abs=1e-12)
    assert rep.diagnostics["clip_fraction"] == 0.5


def away_from_clip(rng, p, eps_lo, eps_hi, token_level):
    while True:
        old = perturbed(rng, p, 0.15)
        groups = random_groups(rng, p, old)
        ratios = []
        for g in groups:
            for m in g.members:
                d = p.log_probs(m.features)[np.arange(len(m)), m.actions] - m.old_log_probs
                ratios.extend(np.exp(d) if token_level else [np.exp(d.mean())])
        r = np.array(ratios)
        if np.all(np.abs(r - (1 - eps_lo)) > 1e-3) and np.all(np.abs(r - (1 + eps_hi)) > 1e-3):
            return old, groups


def test_gspo_gradient_matches_fd():
    rng = np.random.default_rng(8)
    for _ in range(10):
        p = random_params(rng, 4, 5)
        old, groups = away_from_clip(rng, p, 0.1, 0.1, token_level=False)
        fd = finite_difference(lambda q: gspo_objective(q, None, groups, 0.1).value, p)
        assert relative_error(gspo_objective(p, None, groups, 0.1).gradient, fd) < 1e-5


# --- DAPO ---------------------------------------------------------------------------

def test_dapo_filters_uniform_groups():
    rng = np.random.default_rng(9)
    p = random_params(rng, 4, 5)
    flat = TrajectoryGroup("flat", tuple(random_seq(rng, p, old=p) for _ in range(4)), np.ones(4))
    live = random_groups(rng, p, p)
    assert dapo_filter([flat] + live) == live
    a = dapo_objective(p, None, [flat] + live, 0.2, 0.28)
    b = dapo_objective(p, None, live, 0.2, 0.28)
    assert a.value == b.value and np.array_equal(a.gradient, b.gradient)
    with pytest.raises(DegenerateBatch):
        dapo_objective(p, None, [flat], 0.2, 0.28)
    with pytest.raises(ValueError):
        dapo_objective(p, None, live, 0.3, 0.2)


def test_dapo_on_policy_value():
    rng = np.random.default_rng(10)
    p = random_params(rng, 4, 5)
    groups = random_groups(rng, p, p)
    rep = dapo_objective(p, None, groups, 0.2, 0.28)
    num = sum(a * len(m) for g in groups for a, m in zip(group_advantages(g.rewards), g.members))
    den = sum(len(m) for g in groups for m in g.members)
    assert rep.value == pytest.approx(num / den, abs=1e-12)


def test_dapo_token_weighting_differs_from_sequence_mean():
    p = PolicyParams(np.zeros((1, 3)), ("a", "b", "c"), ("bias",))
    lp = math.log(1 / 3)
    short = ActionSeq(np.ones((2, 1)), [0, 0], [lp, lp])
    long = ActionSeq(np.ones((8, 1)), [1] * 8, [lp] * 8)
    g = TrajectoryGroup("g", (short, long), np.array([1.0, 0.0]))
    rep = dapo_objective(p, None, [g], 0.2, 0.28)
    # token-level oracle: each action's score gradient weighted by A_i / total tokens
    probs = np.full(3, 1 / 3)
    token = (2 * 0.5 * (np.eye(3)[0] - probs) + 8 * -0.5 * (np.eye(3)[1] - probs)) / 10
    seqmean = (0.5 * (np.eye(3)[0] - probs) + -0.5 * (np.eye(3)[1] - probs)) / 2
    assert np.allclose(rep.gradient[0], token, atol=1e-12)
    assert not np.allclose(rep.gradient[0], seqmean)


def test_dapo_gradient_matches_fd():
    rng = np.random.default_rng(11)
    for _ in range(10):
        p = random_params(rng, 4, 5)
        old, groups = away_from_clip(rng, p, 0.2, 0.28, token_level=True)
        f = lambda q: dapo_objective(q, None, groups, 0.2, 0.28).value
        assert relative_error(dapo_objective(p, None, groups, 0.2, 0.28).gradient, finite_difference(f, p)) < 1e-5


# --- stop threshold -------------------------------------------------------------------

def test_stop_threshold_closed_forms():
    assert sft_stop_threshold(StopCriterionConfig(8, 8, 0.95)) == pytest.approx(1 - 0.95 ** (1 / 8), abs=1e-8)
    assert sft_stop_threshold(StopCriterionConfig(8, 1, 0.95)) == pytest.approx(0.05 ** (1 / 8), abs=1e-8)


def test_stop_threshold_monotone_in_confidence():
    vals = [sft_stop_threshold(StopCriterionConfig(8, 2, c)) for c in (0.5, 0.8, 0.9, 0.95, 0.99)]
    assert all(a > b for a, b in zip(vals, vals[1:]))


def test_stop_threshold_naive_model_value():
    # the plain binomial model for "at least 2 of 8 valid at 95%" permits p far above 0.0253
    p = sft_stop_threshold(StopCriterionConfig(8, 2, 0.95))
    assert binom.sf(1, 8, 1 - p) == pytest.approx(0.95, abs=1e-8)
    assert p > 0.5


def test_stop_config_validation():
    with pytest.raises(ValueError):
        StopCriterionConfig(4, 5, 0.9)
    with pytest.raises(ValueError):
        StopCriterionConfig(4, 2, 1.0)


# --- training loop ----------------------------------------------------------------------

def test_train_zero_steps_keeps_params(bundled_env, two_hop):
    p = PolicyParams.random(5)
    res = train(TrainConfig(steps=0), two_hop, bundled_env, params=p)
    assert res.params is p and res.log == []


def test_train_deterministic(bundled_env, two_hop, tmp_path):
    cfg = TrainConfig(steps=3, batch_queries=2, group_size=3, seed=9)
    a, b = train(cfg, two_hop, bundled_env), train(cfg, two_hop, bundled_env)
    write_metrics_csv(a.log, tmp_path / "a.csv")
    write_metrics_csv(b.log, tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    assert np.array_equal(a.params.weights, b.params.weights)


@pytest.mark.parametrize("objective", ["gspo", "dapo"])
def test_train_other_objectives_run(bundled_env, two_hop, objective):
    res = train(TrainConfig(objective=objective, steps=3, batch_queries=2, group_size=4, seed=1), two_hop, bundled_env)
    assert len(res.log) == 3 and np.all(np.isfinite(res.params.weights))
