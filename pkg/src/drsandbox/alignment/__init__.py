"""Preference alignment on the policy's own samples: DPO and Self-SFT."""

from drsandbox.alignment.io import read_pairs, read_samples, read_scored, write_pairs, write_samples, write_scored
from drsandbox.alignment.losses import (
    EmptyHighQualitySet,
    FitResult,
    dpo_loss,
    fit,
    fit_dpo,
    fit_self_sft,
    self_sft_loss,
)
from drsandbox.alignment.quality import (
    PreferencePair,
    QualityScore,
    QualityWeights,
    Scored,
    make_pairs,
    partition,
    quality_score,
)
from drsandbox.alignment.samples import (
    Sample,
    SampleSet,
    draft_report,
    instance_rubric,
    passage_sources,
    policy_hash,
    reference_report,
    score_samples,
    self_sample,
)

__all__ = [name for name in dir() if not name.startswith("_")]
