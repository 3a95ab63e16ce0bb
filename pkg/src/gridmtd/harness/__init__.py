"""Scenario synthesis, the event-triggered cycle, metrics, and figures."""

from .config import (CampaignConfig, ConfigError, ProfileConfig, ScenarioConfig,
                     load_config, load_scenario, scenario_from_dict)
from .cycle import (EpisodeRecord, IdentOutcome, MtdOutcome, PostOutcome,
                    flow_lambda_target, identify_step, read_episodes, run_cycle,
                    write_episodes)
from .metrics import (MetricsReport, RocCurve, corner_setpoint, evaluate,
                      roc_curve, write_metrics_csv, write_roc_csv)
from .plots import plot_metric_bars, plot_roc
from .scenario import (Dataset, Stream, StreamStep, apply_campaign,
                       generate_dataset, load_grid, load_profile,
                       sliding_windows, split_indices, synthetic_profile,
                       training_windows)

__all__ = [
    "CampaignConfig", "ConfigError", "ProfileConfig", "ScenarioConfig",
    "load_config", "load_scenario", "scenario_from_dict",
    "EpisodeRecord", "IdentOutcome", "MtdOutcome", "PostOutcome",
    "flow_lambda_target", "identify_step", "read_episodes", "run_cycle",
    "write_episodes",
    "MetricsReport", "RocCurve", "corner_setpoint", "evaluate",
    "roc_curve", "write_metrics_csv", "write_roc_csv",
    "plot_metric_bars", "plot_roc",
    "Dataset", "Stream", "StreamStep", "apply_campaign", "generate_dataset",
    "load_grid", "load_profile", "sliding_windows", "split_indices",
    "synthetic_profile", "training_windows",
]
