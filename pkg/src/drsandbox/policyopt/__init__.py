"""Surrogate policy, policy-gradient and preference objectives, and the training loop."""

from drsandbox.policyopt.objectives import (
    DegenerateBatch,
    LossReport,
    TrajectoryGroup,
    bc_loss,
    dapo_filter,
    dapo_objective,
    dpo_loss,
    group_advantages,
    grpo_loss,
    gspo_objective,
    gspo_ratio,
    kl_per_state,
)
from drsandbox.policyopt.policy import (
    ActionSeq,
    OutOfVocabulary,
    PolicyParams,
    load_policy,
    save_policy,
    sequence_log_prob,
)
from drsandbox.policyopt.stopping import StopCriterionConfig, prob_enough_valid, sft_stop_threshold
from drsandbox.policyopt.train import TrainConfig, TrainResult, evaluate, train, write_metrics_csv

__all__ = [name for name in dir() if not name.startswith("_")]
