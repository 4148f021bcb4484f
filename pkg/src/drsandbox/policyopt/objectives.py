"""Policy objectives with analytic gradients.

Every function returns a :class:`LossReport`. Objectives that are maximized
(GRPO, GSPO, DAPO) store the objective itself with ``sense="maximize"``;
losses (behaviour cloning, DPO, Self-SFT) store the loss with
``sense="minimize"``. ``report.ascent()`` always points uphill in reward.

One "token" is one action selection. Gradients use the identity
d log pi(a|x) / dW = outer(x, onehot(a) - pi(.|x)), so every objective
reduces to a per-row weight vector applied through :func:`_score_grad`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from drsandbox import SandboxError
from drsandbox.policyopt.policy import ActionSeq, PolicyParams, as_seq, check_vocabulary


class DegenerateBatch(SandboxError):
    """Every group was removed by the dynamic sampling filter."""


@dataclass(frozen=True)
class LossReport:
    value: float
    gradient: np.ndarray
    sense: str = "minimize"
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.sense not in ("minimize", "maximize"):
            raise ValueError(self.sense)
        if not np.all(np.isfinite(self.gradient)):
            raise FloatingPointError("non-finite gradient")
        cf = self.diagnostics.get("clip_fraction", 0.0)
        if not 0.0 <= cf <= 1.0:
            raise ValueError("clip fraction outside [0, 1]")

    def ascent(self) -> np.ndarray:
        return self.gradient if self.sense == "maximize" else -self.gradient


@dataclass(frozen=True)
class TrajectoryGroup:
    """G sampled sequences for one query with their scalar rewards."""

    query_id: str
    members: tuple[ActionSeq, ...]
    rewards: np.ndarray

    def __post_init__(self):
        members = tuple(as_seq(m) for m in self.members)
        r = np.asarray(self.rewards, dtype=float).reshape(-1)
        if len(members) < 2:
            raise ValueError("a group needs G >= 2 members")
        if r.size != len(members):
            raise ValueError("one reward per member")
        object.__setattr__(self, "members", members)
        object.__setattr__(self, "rewards", r)

    @property
    def G(self) -> int:
        return len(self.members)


def group_advantages(rewards) -> np.ndarray:
    r = np.asarray(getattr(rewards, "rewards", rewards), dtype=float)
    if r.size < 2:
        raise ValueError("group advantages need G >= 2")
    return r - r.mean()


# ---- batched helpers --------------------------------------------------------


@dataclass(frozen=True)
class _Batch:
    X: np.ndarray
    A: np.ndarray
    seg: np.ndarray  # sequence index per row
    lengths: np.ndarray


def _stack(seqs: Sequence[ActionSeq]) -> _Batch:
    lengths = np.array([len(s) for s in seqs])
    return _Batch(
        np.vstack([s.features for s in seqs]),
        np.concatenate([s.actions for s in seqs]),
        np.repeat(np.arange(len(seqs)), lengths),
        lengths,
    )


def _logp(params: PolicyParams, b: _Batch) -> tuple[np.ndarray, np.ndarray]:
    """Full log-prob table and the chosen-action column."""
    table = params.log_probs(b.X)
    return table, table[np.arange(len(b.A)), b.A]


def _score_grad(b: _Batch, table: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Gradient of sum_n w_n log pi(a_n|x_n)."""
    G = -np.exp(table) * w[:, None]
    G[np.arange(len(b.A)), b.A] += w
    return b.X.T @ G


def _entropy(table: np.ndarray) -> float:
    return float(-(np.exp(table) * table).sum(axis=1).mean())


def _old_logp(old_params: PolicyParams | None, seqs: Sequence[ActionSeq], b: _Batch) -> np.ndarray:
    if old_params is not None:
        return _logp(old_params, b)[1]
    if any(s.old_log_probs is None for s in seqs):
        raise ValueError("old log-probs are neither recorded nor computable")
    return np.concatenate([s.old_log_probs for s in seqs])


def _flatten(groups: Sequence[TrajectoryGroup]) -> tuple[list[ActionSeq], np.ndarray, np.ndarray]:
    seqs, adv, gid = [], [], []
    for g_i, g in enumerate(groups):
        seqs.extend(g.members)
        adv.extend(group_advantages(g.rewards))
        gid.extend([g_i] * g.G)
    return seqs, np.array(adv), np.array(gid)


# ---- objectives -------------------------------------------------------------


def bc_loss(params: PolicyParams, trajectories: Sequence) -> LossReport:
    """Negative log-likelihood of each expert sequence, averaged over sequences."""
    seqs = [as_seq(t) for t in trajectories]
    if not seqs:
        raise ValueError("no trajectories")
    check_vocabulary(params, seqs)
    b = _stack(seqs)
    table, lp = _logp(params, b)
    n = len(seqs)
    grad = -_score_grad(b, table, np.full(len(lp), 1.0 / n))
    return LossReport(float(-lp.sum() / n), grad, "minimize", {"entropy": _entropy(table), "actions": int(len(lp))})


def kl_per_state(params: PolicyParams, ref_params: PolicyParams, X: np.ndarray) -> np.ndarray:
    lp, lq = params.log_probs(X), ref_params.log_probs(X)
    return (np.exp(lp) * (lp - lq)).sum(axis=1)


def grpo_loss(params: PolicyParams, ref_params: PolicyParams, groups: Sequence[TrajectoryGroup], beta: float) -> LossReport:
    """J = mean_i A_i * log pi(H_i|x) - beta * mean over visited states of KL(pi || pi_ref)."""
    if beta < 0:
        raise ValueError("beta must be >= 0")
    seqs, adv, _ = _flatten(groups)
    check_vocabulary(params, seqs)
    b = _stack(seqs)
    table, lp = _logp(params, b)
    n = len(seqs)
    w = adv[b.seg] / n
    pg = float(w @ lp)
    grad = _score_grad(b, table, w)
    kl = 0.0
    if beta > 0:
        ref = ref_params.log_probs(b.X)
        p = np.exp(table)
        kl_n = (p * (table - ref)).sum(axis=1)
        kl = float(kl_n.mean())
        # d KL_n / d z_b = p_b (log p_b - log q_b - KL_n)
        dz = p * (table - ref - kl_n[:, None])
        grad = grad - beta * (b.X.T @ dz) / len(kl_n)
    return LossReport(
        pg - beta * kl, grad, "maximize",
        {"kl": kl, "policy_term": pg, "entropy": _entropy(table), "clip_fraction": 0.0, "mean_ratio": 1.0},
    )


def gspo_ratio(params: PolicyParams, old_params: PolicyParams | None, trajectory) -> float:
    """Length-normalized sequence importance ratio exp(mean_t log(pi/pi_old))."""
    seq = as_seq(trajectory)
    b = _stack([seq])
    lp = _logp(params, b)[1]
    return float(np.exp(np.mean(lp - _old_logp(old_params, [seq], b))))


def _clip_weights(ratio: np.ndarray, adv: np.ndarray, lo: float, hi: float) -> tuple[np.ndarray, np.ndarray]:
    """Per-item min(r*A, clip(r)*A) and the mask where the unclipped branch is active."""
    unclipped = ratio * adv
    clipped = np.clip(ratio, lo, hi) * adv
    active = unclipped <= clipped
    return np.where(active, unclipped, clipped), active


def gspo_objective(params: PolicyParams, old_params: PolicyParams | None, groups: Sequence[TrajectoryGroup], eps: float) -> LossReport:
    """J = mean over groups of (1/G) sum_i min(s_i A_i, clip(s_i, 1-eps, 1+eps) A_i)."""
    if eps <= 0:
        raise ValueError("eps must be > 0")
    seqs, adv, gid = _flatten(groups)
    check_vocabulary(params, seqs)
    b = _stack(seqs)
    table, lp = _logp(params, b)
    diff = lp - _old_logp(old_params, seqs, b)
    s = np.exp(np.bincount(b.seg, diff) / b.lengths)
    coef = np.array([1.0 / (len(groups) * groups[g].G) for g in gid])
    val, active = _clip_weights(s, adv, 1 - eps, 1 + eps)
    # d s_i = s_i / |y_i| * sum_t d log pi_t
    w_seq = np.where(active, coef * adv * s / b.lengths, 0.0)
    grad = _score_grad(b, table, w_seq[b.seg])
    return LossReport(
        float((coef * val).sum()), grad, "maximize",
        {"clip_fraction": float(1 - active.mean()), "mean_ratio": float(s.mean()), "entropy": _entropy(table)},
    )


def dapo_filter(groups: Sequence[TrajectoryGroup]) -> list[TrajectoryGroup]:
    """Keep groups whose members do not all share one reward value."""
    return [g for g in groups if np.unique(g.rewards).size > 1]


def dapo_objective(
    params: PolicyParams,
    old_params: PolicyParams | None,
    groups: Sequence[TrajectoryGroup],
    eps_low: float,
    eps_high: float,
) -> LossReport:
    """Token-level clipped objective over the filtered batch, normalized by the
    total action count of all retained members; no KL term."""
    if not 0 <= eps_low < eps_high:
        raise ValueError("need 0 <= eps_low < eps_high")
    kept = dapo_filter(groups)
    if not kept:
        raise DegenerateBatch("all groups filtered: every group has identical rewards")
    seqs, adv, _ = _flatten(kept)
    check_vocabulary(params, seqs)
    b = _stack(seqs)
    table, lp = _logp(params, b)
    r = np.exp(lp - _old_logp(old_params, seqs, b))
    a_row = adv[b.seg]
    val, active = _clip_weights(r, a_row, 1 - eps_low, 1 + eps_high)
    n_tok = float(b.lengths.sum())
    grad = _score_grad(b, table, np.where(active, a_row * r / n_tok, 0.0))
    return LossReport(
        float(val.sum() / n_tok), grad, "maximize",
        {
            "clip_fraction": float(1 - active.mean()), "mean_ratio": float(r.mean()), "entropy": _entropy(table),
            "kept_groups": len(kept), "filtered_groups": len(groups) - len(kept),
        },
    )


def dpo_loss(params: PolicyParams, ref_params: PolicyParams, pairs: Sequence, beta: float) -> LossReport:
    """-mean log sigmoid(beta * (chosen log-ratio - rejected log-ratio)).

    ``pairs`` holds (chosen, rejected) sequences or objects with
    ``chosen``/``rejected`` attributes.
    """
    if beta <= 0:
        raise ValueError("beta must be > 0")
    if not pairs:
        raise ValueError("no preference pairs")
    chosen, rejected = [], []
    for p in pairs:
        c, r = (p.chosen, p.rejected) if hasattr(p, "chosen") else p
        chosen.append(as_seq(c))
        rejected.append(as_seq(r))
    check_vocabulary(params, chosen + rejected)
    bc, br = _stack(chosen), _stack(rejected)
    tc, lpc = _logp(params, bc)
    tr, lpr = _logp(params, br)
    refc, refr = _logp(ref_params, bc)[1], _logp(ref_params, br)[1]
    n = len(chosen)
    m = beta * (np.bincount(bc.seg, lpc - refc, n) - np.bincount(br.seg, lpr - refr, n))
    loss = np.logaddexp(0.0, -m)  # -log sigmoid(m)
    g = -beta * np.exp(-np.logaddexp(0.0, m)) / n  # d loss / d (chosen - rejected) = -beta * sigmoid(-m) / n
    grad = _score_grad(bc, tc, g[bc.seg]) - _score_grad(br, tr, g[br.seg])
    return LossReport(
        float(loss.mean()), grad, "minimize",
        {"margin_mean": float(m.mean()), "accuracy": float((m > 0).mean()), "entropy": _entropy(np.vstack([tc, tr]))},
    )
