"""The iterative bi-update loop: sample, evaluate, merge, finetune.

Per design and iteration: the buffer is reevaluated under the current
policy, fresh morphologies are asked from the optimizer and scored, the
buffer keeps the top-K of the union, and the policy is finetuned on the
buffer members. All evaluation seeds are derived from the master seed, and
per-design state is persisted after every iteration so a killed run resumes
bit-identically. Timestamps appear only in the event log (`events.jsonl`,
field `ts`); every other output is byte-reproducible.
"""

from __future__ import annotations

import json
import logging
import os
import pickle
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..buffer import BufferEntry, PriorityBuffer, merge_topk, reevaluate
from ..errors import CheckpointCorrupt, ConfigError
from ..mjcf import parse_file, load_link_map
from ..morphology import Morphology, materialize, write_morphology
from ..morphspace import MorphParams, from_normalized, load_space
from ..optim import make_optimizer
from ..parallel import default_jobs, parallel_map
from ..policy import GuardSpec, PolicyParams, finetune, load_policy, pretrain, save_policy
from ..seeding import derive_rng, derive_seed
from ..sim2d import build_model, builtin_design_dir, evaluate, load_robot
from ..sim2d.env import SimSettings
from .config import RunConfig, config_to_yaml

log = logging.getLogger(__name__)

_DATA_DIR = Path(__file__).resolve().parent.parent / "data"
STATE_VERSION = 1


@dataclass(frozen=True)
class DesignContext:
    name: str
    base_model: object
    base_doc: object
    link_map: dict
    mjcf_path: Path


@dataclass
class DesignArtifacts:
    name: str
    buffer: PriorityBuffer
    checkpoints: list[Path]
    records: list[dict]
    buffer_rows: list[dict]
    sample_rows: list[dict]
    base_heldout: float
    final_heldout: float | None


@dataclass
class RunArtifacts:
    config: RunConfig
    out_dir: Path
    designs: dict[str, DesignArtifacts] = field(default_factory=dict)


def _resolve_design(spec: str) -> DesignContext:
    """A design is a built-in name or a path to a robot description file."""
    path = Path(spec)
    if not path.suffix:
        path = builtin_design_dir(spec) / "robot.yaml"
    if not path.is_file():
        raise ConfigError(f"design description not found: {path}")
    base_model = load_robot(path)
    import yaml

    with open(path, "r", encoding="utf-8") as fh:
        doc = yaml.safe_load(fh)
    mjcf_path = (path.parent / doc.get("mjcf", "model.xml")).resolve()
    linkmap_path = (path.parent / doc.get("linkmap", "linkmap.yaml")).resolve()
    return DesignContext(
        name=base_model.name,
        base_model=base_model,
        base_doc=parse_file(mjcf_path),
        link_map=load_link_map(linkmap_path, from_file=True),
        mjcf_path=mjcf_path,
    )


def _resolve_space(spec: str):
    if spec == "builtin":
        return load_space(_DATA_DIR / "humanoid_space.yaml")
    return load_space(spec)


def _atomic_write(path: Path, data: bytes):
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)


def _log_event(out_dir: Path, event: str, **fields):
    record = {"ts": time.time(), "event": event}
    record.update(fields)
    with open(out_dir / "events.jsonl", "a", encoding="utf-8") as fh:
        fh.write(json.dumps(record, sort_keys=True) + "\n")


def _save_state(path: Path, state: dict):
    state = dict(state)
    state["version"] = STATE_VERSION
    _atomic_write(path, pickle.dumps(state))


def _load_state(path: Path) -> dict:
    try:
        with open(path, "rb") as fh:
            state = pickle.load(fh)
    except Exception as exc:
        raise CheckpointCorrupt(f"cannot load {path}: {exc}") from exc
    required = {"version", "iteration", "optimizer", "buffer", "policy",
                "records", "buffer_rows", "sample_rows", "base_heldout"}
    if not isinstance(state, dict) or not required.issubset(state):
        raise CheckpointCorrupt(f"{path}: missing fields")
    if state["version"] != STATE_VERSION:
        raise CheckpointCorrupt(f"{path}: unsupported state version")
    return state


class _DesignRunner:
    """Everything needed to advance one design through its iterations."""

    def __init__(self, config: RunConfig, ctx: DesignContext, space, out_dir: Path,
                 shared_policy: PolicyParams, jobs: int):
        self.config = config
        self.ctx = ctx
        self.space = space
        self.jobs = jobs
        self.design_dir = out_dir / "designs" / ctx.name
        self.morph_dir = self.design_dir / "morphologies"
        self.ckpt_dir = self.design_dir / "checkpoints"
        self.state_path = out_dir / "state" / f"{ctx.name}.pkl"
        for d in (self.morph_dir, self.ckpt_dir):
            d.mkdir(parents=True, exist_ok=True)
        self.settings = SimSettings(
            max_time=config.simulator.max_time,
            tilt_limit_deg=config.simulator.tilt_limit_deg,
            angvel_limit_deg=config.simulator.angvel_limit_deg,
        )
        self.seed_train = derive_seed(config.master_seed, "train-eval", ctx.name)
        self.seed_heldout = derive_seed(config.master_seed, "heldout-eval", ctx.name)
        self.shared_policy = shared_policy

    # -- state ------------------------------------------------------------

    def fresh_state(self) -> dict:
        optimizer = make_optimizer(
            self.config.optimizer.kind,
            dim=self.space.free_dim_count,
            seed=derive_seed(self.config.master_seed, "optimizer", self.ctx.name),
            **self.config.optimizer.params,
        )
        base_heldout = evaluate(
            self.ctx.base_model,
            self.shared_policy,
            self.config.evaluation_episodes,
            self.seed_heldout,
            self.settings,
        ).mean
        self.save_checkpoint(0, self.shared_policy)
        return {
            "iteration": -1,
            "optimizer": optimizer,
            "buffer": PriorityBuffer(capacity=self.config.buffer_capacity),
            "policy": self.shared_policy,
            "records": [],
            "buffer_rows": [],
            "sample_rows": [],
            "base_heldout": base_heldout,
        }

    def load_or_create(self, resume: bool) -> dict:
        if resume and self.state_path.exists():
            return _load_state(self.state_path)
        if self.state_path.exists():
            raise ConfigError(
                f"{self.state_path} exists; pass resume=True or use a clean "
                "output directory"
            )
        return self.fresh_state()

    def save_checkpoint(self, index: int, policy: PolicyParams) -> Path:
        path = self.ckpt_dir / f"policy_{index:04d}.json"
        save_policy(
            policy,
            path,
            metadata={
                "design": self.ctx.name,
                "iteration": index,
                "train_seed": self.seed_train,
                "master_seed": self.config.master_seed,
            },
        )
        return path

    # -- evaluation helpers -------------------------------------------------

    def model_for(self, params: MorphParams):
        return build_model(self.ctx.base_model, params)

    def eval_morph(self, params: MorphParams, policy: PolicyParams, seed: int) -> float:
        return evaluate(
            self.model_for(params),
            policy,
            self.config.evaluation_episodes,
            seed,
            self.settings,
        ).mean

    # -- one iteration ------------------------------------------------------

    def run_iteration(self, state: dict, iteration: int):
        cfg = self.config
        policy: PolicyParams = state["policy"]
        buffer: PriorityBuffer = state["buffer"]
        optimizer = state["optimizer"]

        if buffer.entries:
            buffer = reevaluate(
                buffer,
                lambda morph: self.eval_morph(morph.params, policy, self.seed_train),
                iteration,
                episodes=cfg.evaluation_episodes,
            )

        fresh: list[BufferEntry] = []
        for round_idx in range(cfg.rounds):
            points = optimizer.ask(cfg.samples_per_round)
            results = parallel_map(
                lambda x: self._evaluate_sample(x, policy), points, self.jobs
            )
            scores = []
            for sample_idx, (morph, score) in enumerate(results):
                scores.append(score)
                state["sample_rows"].append(
                    {
                        "iteration": iteration,
                        "round": round_idx,
                        "sample": sample_idx,
                        "id": morph.id_hex if morph else "",
                        "score": score,
                    }
                )
                if morph is not None:
                    fresh.append(
                        BufferEntry(
                            morphology=morph,
                            score=score,
                            evaluated_at_iteration=iteration,
                            episodes=cfg.evaluation_episodes,
                        )
                    )
            optimizer.tell(points, scores)

        buffer = merge_topk(buffer, fresh)
        self._write_new_morphologies(buffer)
        for rank, entry in enumerate(buffer.entries):
            state["buffer_rows"].append(
                {
                    "iteration": iteration,
                    "rank": rank,
                    "id": entry.morphology.id_hex,
                    "score": entry.score,
                    "episodes": entry.episodes,
                    "values": [float(v) for v in entry.morphology.params.values],
                }
            )

        best = buffer.best
        if best is None:
            from ..errors import EvaluatorFailure

            raise EvaluatorFailure(
                f"{self.ctx.name}: every sample failed at iteration {iteration}; "
                "nothing to keep in the buffer"
            )
        guard = GuardSpec(
            model=self.model_for(best.morphology.params),
            episodes=cfg.evaluation_episodes,
            seed=self.seed_train,
            incumbent_score=best.score,
        )
        models = [self.model_for(e.morphology.params) for e in buffer.entries]
        next_policy, report = finetune(
            policy,
            models,
            cfg.finetune_budget,
            derive_rng(cfg.master_seed, "finetune", self.ctx.name, iteration),
            population=cfg.policy.population,
            elite_frac=cfg.policy.elite_frac,
            init_std=cfg.policy.finetune_init_std,
            std_floor=cfg.policy.std_floor,
            episodes_per_model=cfg.policy.finetune_episodes_per_morph,
            guard=guard,
            settings=self.settings,
            jobs=self.jobs,
        )
        self.save_checkpoint(iteration + 1, next_policy)
        heldout_best = evaluate(
            guard.model,
            next_policy,
            cfg.evaluation_episodes,
            self.seed_heldout,
            self.settings,
        ).mean

        scores_in_buffer = [e.score for e in buffer.entries]
        state["records"].append(
            {
                "iteration": iteration,
                "best_id": best.morphology.id_hex,
                "best_score": best.score,
                "buffer_mean": float(np.mean(scores_in_buffer)),
                "buffer_min": float(np.min(scores_in_buffer)),
                "finetune_before": report.incumbent_before,
                "finetune_after": report.incumbent_after,
                "heldout_best": heldout_best,
            }
        )
        state["iteration"] = iteration
        state["buffer"] = buffer
        state["policy"] = next_policy
        _save_state(self.state_path, state)
        self.write_logs(state)
        _log_event(
            self.design_dir.parent.parent,
            "iteration",
            design=self.ctx.name,
            iteration=iteration,
            best_id=best.morphology.id_hex,
            best_score=best.score,
        )

    def _evaluate_sample(self, x: np.ndarray, policy: PolicyParams):
        """Returns (Morphology | None, score); failures score 0 and are
        excluded from the buffer."""
        try:
            params = from_normalized(x, self.space)
            morph = materialize(self.ctx.base_doc, params, self.ctx.link_map)
            score = self.eval_morph(params, policy, self.seed_train)
            return morph, score
        except Exception as exc:  # noqa: BLE001 - samples may fail, loop survives
            log.warning("%s: sample discarded: %s", self.ctx.name, exc)
            return None, 0.0

    def _write_new_morphologies(self, buffer: PriorityBuffer):
        for entry in buffer.entries:
            xml_path = self.morph_dir / f"{entry.morphology.id_hex}.xml"
            if not xml_path.exists():
                write_morphology(
                    entry.morphology, self.morph_dir, parent_file=str(self.ctx.mjcf_path)
                )

    # -- logs ---------------------------------------------------------------

    def write_logs(self, state: dict):
        scores_path = self.design_dir / "scores.csv"
        fields = [
            "iteration", "best_id", "best_score", "buffer_mean", "buffer_min",
            "finetune_before", "finetune_after", "heldout_best",
        ]
        rows = [
            ",".join(
                [
                    str(rec["iteration"]), rec["best_id"], repr(rec["best_score"]),
                    repr(rec["buffer_mean"]), repr(rec["buffer_min"]),
                    repr(rec["finetune_before"]), repr(rec["finetune_after"]),
                    repr(rec["heldout_best"]),
                ]
            )
            for rec in state["records"]
        ]
        _atomic_write(
            scores_path, ("\n".join([",".join(fields)] + rows) + "\n").encode()
        )

        samples_path = self.design_dir / "samples.csv"
        rows = [
            f'{r["iteration"]},{r["round"]},{r["sample"]},{r["id"]},{r["score"]!r}'
            for r in state["sample_rows"]
        ]
        _atomic_write(
            samples_path,
            ("\n".join(["iteration,round,sample,id,score"] + rows) + "\n").encode(),
        )

        buffer_path = self.design_dir / "buffer.jsonl"
        lines = [json.dumps(row, sort_keys=True) for row in state["buffer_rows"]]
        _atomic_write(buffer_path, ("\n".join(lines) + "\n").encode())


def run(
    config: RunConfig,
    resume: bool = False,
    iteration_callback=None,
) -> RunArtifacts:
    """Execute the co-design loop for every design in the config."""
    out_dir = Path(config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "state").mkdir(exist_ok=True)

    config_snapshot = config_to_yaml(config)
    config_path = out_dir / "run_config.yaml"
    if config_path.exists():
        if config_path.read_text(encoding="utf-8") != config_snapshot:
            raise ConfigError(
                f"{config_path} differs from the requested config; "
                "refusing to mix runs in one directory"
            )
    else:
        config_path.write_text(config_snapshot, encoding="utf-8")

    jobs = config.jobs if config.jobs is not None else default_jobs()
    space = _resolve_space(config.design_space)
    contexts = [_resolve_design(d) for d in config.designs]
    names = [c.name for c in contexts]
    if len(set(names)) != len(names):
        raise ConfigError(f"duplicate design names: {names}")

    shared_policy = _pretrain_shared(config, contexts, out_dir, jobs)

    artifacts = RunArtifacts(config=config, out_dir=out_dir)
    for ctx in contexts:
        runner = _DesignRunner(config, ctx, space, out_dir, shared_policy, jobs)
        state = runner.load_or_create(resume)
        start = state["iteration"] + 1
        if start < config.iterations:
            log.info("%s: iterations %d..%d", ctx.name, start, config.iterations - 1)
            _log_event(out_dir, "design_start", design=ctx.name, from_iteration=start)
        for i in range(start, config.iterations):
            runner.run_iteration(state, i)
            if iteration_callback is not None:
                iteration_callback(ctx.name, i)
        final_heldout = (
            state["records"][-1]["heldout_best"] if state["records"] else None
        )
        artifacts.designs[ctx.name] = DesignArtifacts(
            name=ctx.name,
            buffer=state["buffer"],
            checkpoints=sorted(runner.ckpt_dir.glob("policy_*.json")),
            records=list(state["records"]),
            buffer_rows=list(state["buffer_rows"]),
            sample_rows=list(state["sample_rows"]),
            base_heldout=state["base_heldout"],
            final_heldout=final_heldout,
        )
    _write_summary(artifacts)
    return artifacts


def _pretrain_shared(config: RunConfig, contexts, out_dir: Path, jobs: int) -> PolicyParams:
    ckpt = out_dir / "state" / "pretrain.json"
    if ckpt.exists():
        return load_policy(ckpt)
    settings = SimSettings(
        max_time=config.simulator.max_time,
        tilt_limit_deg=config.simulator.tilt_limit_deg,
        angvel_limit_deg=config.simulator.angvel_limit_deg,
    )
    policy, report = pretrain(
        [c.base_model for c in contexts],
        config.pretrain_budget,
        derive_rng(config.master_seed, "pretrain"),
        population=config.policy.population,
        elite_frac=config.policy.elite_frac,
        init_std=config.policy.pretrain_init_std,
        std_floor=config.policy.std_floor,
        episodes_per_design=config.policy.pretrain_episodes_per_design,
        v_max=config.policy.v_max,
        settings=settings,
        jobs=jobs,
    )
    log.info("pretrain: %d evaluations, best fitness %.3f",
             report.evaluations, report.incumbent_after)
    save_policy(policy, ckpt, metadata={"phase": "pretrain"})
    _log_event(
        out_dir, "pretrain",
        evaluations=report.evaluations, fitness=report.incumbent_after,
    )
    return policy


def _write_summary(artifacts: RunArtifacts):
    path = artifacts.out_dir / "summary.csv"
    lines = ["design,base_return,final_return,improvement_pct"]
    for name, design in artifacts.designs.items():
        if design.final_heldout is None:
            continue
        improvement = (
            (design.final_heldout - design.base_heldout) / design.base_heldout * 100.0
        )
        lines.append(
            f"{name},{design.base_heldout!r},{design.final_heldout!r},{improvement!r}"
        )
    _atomic_write(path, ("\n".join(lines) + "\n").encode())


def load_artifacts(out_dir) -> RunArtifacts:
    """Reload a finished (or partial) run's artifacts from disk."""
    out_dir = Path(out_dir)
    config_path = out_dir / "run_config.yaml"
    if not config_path.exists():
        raise CheckpointCorrupt(f"{config_path} not found")
    import yaml

    from .config import config_from_dict

    with open(config_path, "r", encoding="utf-8") as fh:
        config = config_from_dict(yaml.safe_load(fh))
    artifacts = RunArtifacts(config=config, out_dir=out_dir)
    for state_path in sorted((out_dir / "state").glob("*.pkl")):
        ctx_name = state_path.stem
        state = _load_state(state_path)
        design_dir = out_dir / "designs" / ctx_name
        artifacts.designs[ctx_name] = DesignArtifacts(
            name=ctx_name,
            buffer=state["buffer"],
            checkpoints=sorted((design_dir / "checkpoints").glob("policy_*.json")),
            records=list(state["records"]),
            buffer_rows=list(state["buffer_rows"]),
            sample_rows=list(state["sample_rows"]),
            base_heldout=state["base_heldout"],
            final_heldout=(
                state["records"][-1]["heldout_best"] if state["records"] else None
            ),
        )
    return artifacts
