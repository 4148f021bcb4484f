"""Preference and self-SFT losses over sampled outputs, plus simple fitting loops."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from drsandbox import SandboxError
from drsandbox.policyopt import LossReport, PolicyParams, bc_loss
from drsandbox.policyopt import dpo_loss as _dpo


class EmptyHighQualitySet(SandboxError):
    pass


def _traj(item):
    return getattr(item, "trajectory", item)


def _unwrap(item):
    return getattr(item, "sample", item)


def dpo_loss(params: PolicyParams, ref_params: PolicyParams, pairs: Sequence, beta: float) -> LossReport:
    """DPO on preference pairs of samples, trajectories or action sequences."""
    raw = []
    for p in pairs:
        c, r = (p.chosen, p.rejected) if hasattr(p, "chosen") else p
        raw.append((_traj(_unwrap(c)), _traj(_unwrap(r))))
    return _dpo(params, ref_params, raw, beta)


def self_sft_loss(params: PolicyParams, d_plus: Sequence) -> LossReport:
    """Negative mean log-likelihood of the high-quality set."""
    if not d_plus:
        raise EmptyHighQualitySet("D+ is empty")
    return bc_loss(params, [_traj(_unwrap(s)) for s in d_plus])


@dataclass
class FitResult:
    params: PolicyParams
    losses: list[float]


def fit(loss_fn, params: PolicyParams, steps: int, lr: float) -> FitResult:
    """Plain gradient descent; ``loss_fn(params)`` returns a LossReport."""
    if steps < 0 or lr <= 0:
        raise ValueError("need steps >= 0 and lr > 0")
    losses = []
    for _ in range(steps):
        rep = loss_fn(params)
        losses.append(rep.value)
        params = params.with_weights(params.weights + lr * rep.ascent())
    losses.append(loss_fn(params).value)
    return FitResult(params, losses)


def fit_dpo(params: PolicyParams, pairs: Sequence, beta: float = 0.1, steps: int = 50, lr: float = 0.5) -> FitResult:
    """The reference policy is the snapshot of ``params`` at the start."""
    ref = params
    return fit(lambda p: dpo_loss(p, ref, pairs, beta), params, steps, lr)


def fit_self_sft(params: PolicyParams, d_plus: Sequence, steps: int = 50, lr: float = 0.5) -> FitResult:
    return fit(lambda p: self_sft_loss(p, d_plus), params, steps, lr)
