"""Run configuration, the end-to-end pipeline, module metrics and the CLI."""

from drsandbox.harness.config import STAGES, ConfigError, RunConfig, config_from_dict, dump_config, load_config
from drsandbox.harness.metrics import EmptyInput, MetricsReport, headings, hierarchy_errors, module_eval, normalize_heading
from drsandbox.harness.pipeline import StageFailed, run_pipeline, sha256_file

__all__ = [name for name in dir() if not name.startswith("_")]
