"""Desk-scale deep-research training sandbox.

Subpackages:

- ``kgforge``: knowledge-graph query synthesis
- ``searchenv``: simulated search tools and ReAct rollouts
- ``rewards``: Search-RL reward signals and schedules
- ``policyopt``: surrogate policy and policy-gradient objectives
- ``reportrewards``: report scoring and the temporal tense detector
- ``alignment``: self-sampling, DPO and Self-SFT
- ``orchestrator``: planning / deep-search / report pipeline
- ``harness``: configuration, module evaluation and the CLI
"""

__version__ = "0.1.0"


class SandboxError(Exception):
    """Base class for all errors raised by this package."""
