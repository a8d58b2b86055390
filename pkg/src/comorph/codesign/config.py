"""Run configuration: YAML sections run / optimizer / simulator / policy.

Numeric defaults are the experimental protocol values: 100 iterations of 3
rounds x 10 samples, buffer size 5, 10-episode evaluation averaging, and the
published hyperparameter sets of all four optimizers.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from pathlib import Path

import yaml

from ..errors import ConfigError
from ..optim import KINDS


@dataclass(frozen=True)
class OptimizerConfig:
    kind: str = "evolutionary"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"optimizer kind must be one of {KINDS}")


@dataclass(frozen=True)
class SimulatorConfig:
    max_time: float = 10.0
    tilt_limit_deg: float = 135.0
    angvel_limit_deg: float = 400.0


@dataclass(frozen=True)
class PolicyTrainConfig:
    v_max: float = 2.0
    population: int = 32
    elite_frac: float = 0.25
    std_floor: float = 0.01
    pretrain_init_std: float = 0.2
    finetune_init_std: float = 0.05
    pretrain_episodes_per_design: int = 2
    finetune_episodes_per_morph: int = 2


@dataclass(frozen=True)
class RunConfig:
    iterations: int = 100          # N_i
    rounds: int = 3                # N_r
    samples_per_round: int = 10    # N_s
    buffer_capacity: int = 5       # K
    evaluation_episodes: int = 10
    pretrain_budget: int = 128     # candidate evaluations (coarse by design)
    finetune_budget: int = 65      # candidate evaluations per iteration
    master_seed: int = 0
    designs: tuple[str, ...] = ("alpha", "beta")
    design_space: str = "builtin"
    output_dir: str = "codesign_out"
    jobs: int | None = None
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    simulator: SimulatorConfig = field(default_factory=SimulatorConfig)
    policy: PolicyTrainConfig = field(default_factory=PolicyTrainConfig)

    def __post_init__(self):
        for name in (
            "iterations",
            "rounds",
            "samples_per_round",
            "buffer_capacity",
            "evaluation_episodes",
        ):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if not self.designs:
            raise ConfigError("need at least one design")


def default_config() -> RunConfig:
    return RunConfig()


def _section(doc: dict, name: str) -> dict:
    sec = doc.get(name, {})
    if sec is None:
        return {}
    if not isinstance(sec, dict):
        raise ConfigError(f"section {name!r} must be a mapping")
    return sec


def load_config(path, overrides: dict | None = None) -> RunConfig:
    """Read a run config file; `overrides` wins over file values."""
    path = Path(path)
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = yaml.safe_load(fh) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: not valid YAML: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: config must be a mapping")
    return config_from_dict(doc, overrides or {})


def config_from_dict(doc: dict, overrides: dict | None = None) -> RunConfig:
    run = dict(_section(doc, "run"))
    run.update(overrides or {})
    known = {
        "iterations",
        "rounds",
        "samples_per_round",
        "buffer_capacity",
        "evaluation_episodes",
        "pretrain_budget",
        "finetune_budget",
        "master_seed",
        "designs",
        "design_space",
        "output_dir",
        "jobs",
    }
    unknown = set(run) - known
    if unknown:
        raise ConfigError(f"unknown run options: {sorted(unknown)}")
    if "designs" in run:
        run["designs"] = tuple(str(d) for d in run["designs"])
    try:
        return RunConfig(
            **run,
            optimizer=OptimizerConfig(**_section(doc, "optimizer")),
            simulator=SimulatorConfig(**_section(doc, "simulator")),
            policy=PolicyTrainConfig(**_section(doc, "policy")),
        )
    except TypeError as exc:
        raise ConfigError(f"bad config field: {exc}") from exc


def config_to_yaml(config: RunConfig) -> str:
    doc = {
        "run": {
            "iterations": config.iterations,
            "rounds": config.rounds,
            "samples_per_round": config.samples_per_round,
            "buffer_capacity": config.buffer_capacity,
            "evaluation_episodes": config.evaluation_episodes,
            "pretrain_budget": config.pretrain_budget,
            "finetune_budget": config.finetune_budget,
            "master_seed": config.master_seed,
            "designs": list(config.designs),
            "design_space": config.design_space,
            "output_dir": config.output_dir,
            "jobs": config.jobs,
        },
        "optimizer": asdict(config.optimizer),
        "simulator": asdict(config.simulator),
        "policy": asdict(config.policy),
    }
    return yaml.safe_dump(doc, sort_keys=False)
