"""Simulated multi-tool search environment and ReAct rollouts."""

from drsandbox.retrieval import Corpus, EmptyCorpus, Hit, UnknownEntity, crawl, search
from drsandbox.searchenv.agent import FEATURE_NAMES, NUM_FEATURES, VOCABULARY, AgentState, bind
from drsandbox.searchenv.rollout import (
    ChainPolicy,
    Limits,
    Policy,
    ScriptedPolicy,
    SearchEnv,
    UniformPolicy,
    rollout,
    rollout_many,
)
from drsandbox.searchenv.tools import (
    RETRIEVAL_TOOLS,
    SEARCH_TOOLS,
    TOOLS,
    Observation,
    ToolCall,
    ToolLayer,
    ToolLayerConfig,
    execute,
    merge_caches,
)
from drsandbox.searchenv.trajectory import (
    Step,
    Trajectory,
    emit,
    parse_emission,
    read_trajectories,
    step_format_valid,
    write_trajectories,
)

__all__ = [name for name in dir() if not name.startswith("_")]
