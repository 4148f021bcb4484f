"""Central finite differences and random fixtures for gradient verification."""

from __future__ import annotations

from typing import Callable

import numpy as np

from drsandbox.policyopt.objectives import TrajectoryGroup
from drsandbox.policyopt.policy import ActionSeq, PolicyParams


def finite_difference(value: Callable[[PolicyParams], float], params: PolicyParams, h: float = 1e-5) -> np.ndarray:
    W = params.weights
    out = np.zeros_like(W)
    for idx in np.ndindex(W.shape):
        up, down = W.copy(), W.copy()
        up[idx] += h
        down[idx] -= h
        out[idx] = (value(params.with_weights(up)) - value(params.with_weights(down))) / (2 * h)
    return out


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    scale = max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)
    return float(np.linalg.norm(a - b) / scale)


def random_params(rng: np.random.Generator, n_features: int, n_actions: int, scale: float = 0.5) -> PolicyParams:
    names_f = tuple(f"f{i}" for i in range(n_features))
    names_a = tuple(f"a{i}" for i in range(n_actions))
    return PolicyParams(rng.normal(0, scale, (n_features, n_actions)), names_a, names_f)


def random_seq(rng: np.random.Generator, params: PolicyParams, max_len: int = 8, old: PolicyParams | None = None) -> ActionSeq:
    T = int(rng.integers(1, max_len + 1))
    X = rng.normal(0, 1, (T, params.shape[0]))
    X[:, 0] = 1.0
    A = rng.integers(0, params.shape[1], T)
    lp = None
    if old is not None:
        lp = old.log_probs(X)[np.arange(T), A]
    return ActionSeq(X, A, lp)


def random_groups(
    rng: np.random.Generator,
    params: PolicyParams,
    old: PolicyParams | None = None,
    n_groups: int = 2,
    max_len: int = 8,
    binary_rewards: bool = False,
) -> list[TrajectoryGroup]:
    groups = []
    for g in range(n_groups):
        G = int(rng.integers(2, 5))
        members = tuple(random_seq(rng, params, max_len, old) for _ in range(G))
        r = rng.integers(0, 2, G).astype(float) if binary_rewards else rng.normal(0, 1, G)
        groups.append(TrajectoryGroup(f"g{g}", members, r))
    return groups
