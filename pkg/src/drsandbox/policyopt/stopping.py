"""SFT early-stop threshold: how error-prone may a single sampled trajectory be?"""

from __future__ import annotations

from dataclasses import dataclass

from scipy.stats import binom


@dataclass(frozen=True)
class StopCriterionConfig:
    G: int = 8
    min_valid: int = 2
    confidence: float = 0.95

    def __post_init__(self):
        if not 1 <= self.min_valid <= self.G:
            raise ValueError("need 1 <= min_valid <= G")
        if not 0.0 < self.confidence < 1.0:
            raise ValueError("confidence must lie in (0, 1)")


def prob_enough_valid(p: float, cfg: StopCriterionConfig) -> float:
    """P(at least min_valid of G trajectories valid) when each fails w.p. p."""
    return float(binom.sf(cfg.min_valid - 1, cfg.G, 1.0 - p))


def sft_stop_threshold(cfg: StopCriterionConfig, tol: float = 1e-9) -> float:
    """Largest per-trajectory failure probability p that still meets ``confidence``.

    The success probability is strictly decreasing in p, so bisection on [0, 1]
    brackets the crossing.
    """
    lo, hi = 0.0, 1.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if prob_enough_valid(mid, cfg) >= cfg.confidence:
            lo = mid
        else:
            hi = mid
    return lo
