"""Co-design orchestration: the bi-update loop and its analyses."""

from .config import (
    OptimizerConfig,
    PolicyTrainConfig,
    RunConfig,
    SimulatorConfig,
    default_config,
    load_config,
    config_to_yaml,
)
from .runner import DesignArtifacts, RunArtifacts, load_artifacts, run
from .analysis import (
    ContributionResult,
    DecompositionTable,
    contribution_report,
    decompose,
    pretrained_vs_finetuned_ratio,
)

__all__ = [
    "OptimizerConfig",
    "PolicyTrainConfig",
    "RunConfig",
    "SimulatorConfig",
    "default_config",
    "load_config",
    "config_to_yaml",
    "DesignArtifacts",
    "RunArtifacts",
    "load_artifacts",
    "run",
    "ContributionResult",
    "DecompositionTable",
    "contribution_report",
    "decompose",
    "pretrained_vs_finetuned_ratio",
]
