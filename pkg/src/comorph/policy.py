"""Feedforward fall-recovery controller and its elitist trainer.

The controller is a deterministic 27 -> 32 (tanh) -> 5 network whose
outputs are squashed to [-v_max, v_max] rad/s. Training is cross-entropy
method search over the flat weight vector; fitness evaluations reuse one
fixed seed set per call, so the incumbent comparison is exact and the
returned policy is always an evaluated candidate.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DimensionMismatch
from .parallel import parallel_map
from .sim2d import evaluate
from .sim2d.env import DEFAULT_SETTINGS, SimSettings
from .sim2d.kernel import ACT_DIM, HIDDEN_DIM, OBS_DIM

CHECKPOINT_FORMAT = 1

N_PARAMS = HIDDEN_DIM * OBS_DIM + HIDDEN_DIM + ACT_DIM * HIDDEN_DIM + ACT_DIM


@dataclass(frozen=True)
class PolicyParams:
    """Flat parameter vector of the controller network."""

    weights: np.ndarray
    v_max: float = 2.0

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.shape != (N_PARAMS,):
            raise DimensionMismatch(f"expected {N_PARAMS} weights, got {w.shape}")
        if not np.all(np.isfinite(w)):
            raise ValueError("policy weights must be finite")
        w = w.copy()
        w.flags.writeable = False
        object.__setattr__(self, "weights", w)

    def kernel_weights(self):
        w = self.weights
        i = 0
        w1 = w[i : i + HIDDEN_DIM * OBS_DIM].reshape(HIDDEN_DIM, OBS_DIM)
        i += HIDDEN_DIM * OBS_DIM
        b1 = w[i : i + HIDDEN_DIM]
        i += HIDDEN_DIM
        w2 = w[i : i + ACT_DIM * HIDDEN_DIM].reshape(ACT_DIM, HIDDEN_DIM)
        i += ACT_DIM * HIDDEN_DIM
        b2 = w[i : i + ACT_DIM]
        return (
            np.ascontiguousarray(w1),
            np.ascontiguousarray(b1),
            np.ascontiguousarray(w2),
            np.ascontiguousarray(b2),
            self.v_max,
        )

    def act(self, obs: np.ndarray) -> np.ndarray:
        obs = np.asarray(obs, dtype=float)
        if obs.shape != (OBS_DIM,):
            raise DimensionMismatch(f"observation must have length {OBS_DIM}")
        w1, b1, w2, b2, v_max = self.kernel_weights()
        hidden = np.tanh(w1 @ obs + b1)
        return v_max * np.tanh(w2 @ hidden + b2)


def zero_policy(v_max: float = 2.0) -> PolicyParams:
    return PolicyParams(weights=np.zeros(N_PARAMS), v_max=v_max)


@dataclass(frozen=True)
class TrainReport:
    generations: int
    evaluations: int
    best_per_generation: tuple[float, ...]
    incumbent_before: float
    incumbent_after: float


@dataclass(frozen=True)
class GuardSpec:
    """Acceptance constraint: the returned policy must score at least
    ``incumbent_score`` on ``model`` under the given seed/episode budget."""

    model: object
    episodes: int
    seed: int
    incumbent_score: float


@dataclass
class _CemProblem:
    models: list
    episodes: int
    seeds: list[int]
    settings: SimSettings
    v_max: float
    jobs: int

    def fitness(self, weights: np.ndarray) -> float:
        policy = PolicyParams(weights=weights, v_max=self.v_max)
        scores = [
            evaluate(m, policy, self.episodes, s, self.settings).mean
            for m, s in zip(self.models, self.seeds)
        ]
        return float(np.mean(scores))

    def fitness_batch(self, batch: list[np.ndarray]) -> list[float]:
        return parallel_map(self.fitness, batch, self.jobs)


def _derive_call_seeds(rng: np.random.Generator, count: int) -> list[int]:
    return [int(rng.integers(0, 2**63 - 1)) for _ in range(count)]


def pretrain(
    designs: list,
    budget: int,
    rng: np.random.Generator,
    *,
    population: int = 32,
    elite_frac: float = 0.25,
    init_std: float = 0.2,
    std_floor: float = 0.01,
    episodes_per_design: int = 2,
    v_max: float = 2.0,
    settings: SimSettings = DEFAULT_SETTINGS,
    jobs: int = 1,
) -> tuple[PolicyParams, TrainReport]:
    """Search a shared policy maximizing mean return across all designs.

    The zero policy is seeded into generation 0, and the best candidate ever
    evaluated is returned.
    """
    if not designs:
        raise ValueError("need at least one design")
    if budget < population:
        raise ValueError(f"budget {budget} smaller than the population {population}")
    problem = _CemProblem(
        models=list(designs),
        episodes=episodes_per_design,
        seeds=_derive_call_seeds(rng, len(designs)),
        settings=settings,
        v_max=v_max,
        jobs=jobs,
    )
    mean = np.zeros(N_PARAMS)
    std = np.full(N_PARAMS, init_std)
    generations = budget // population
    elite_count = max(1, int(round(elite_frac * population)))

    best_w: np.ndarray | None = None
    best_f = -np.inf
    curve: list[float] = []
    evaluations = 0
    for gen in range(generations):
        batch = [
            np.clip(mean + std * rng.standard_normal(N_PARAMS), -20.0, 20.0)
            for _ in range(population)
        ]
        if gen == 0:
            batch[0] = np.zeros(N_PARAMS)
        scores = problem.fitness_batch(batch)
        evaluations += len(batch)
        order = np.argsort(-np.asarray(scores), kind="stable")
        if scores[order[0]] > best_f:
            best_f = scores[order[0]]
            best_w = batch[order[0]].copy()
        curve.append(best_f)
        elites = np.stack([batch[i] for i in order[:elite_count]])
        mean = elites.mean(axis=0)
        std = elites.std(axis=0) + std_floor
    assert best_w is not None
    return (
        PolicyParams(weights=best_w, v_max=v_max),
        TrainReport(
            generations=generations,
            evaluations=evaluations,
            best_per_generation=tuple(curve),
            incumbent_before=float("nan"),
            incumbent_after=best_f,
        ),
    )


def finetune(
    policy: PolicyParams,
    morphologies: list,
    budget: int,
    rng: np.random.Generator,
    *,
    population: int = 32,
    elite_frac: float = 0.25,
    init_std: float = 0.05,
    std_floor: float = 0.01,
    episodes_per_model: int = 2,
    guard: GuardSpec | None = None,
    settings: SimSettings = DEFAULT_SETTINGS,
    jobs: int = 1,
) -> tuple[PolicyParams, TrainReport]:
    """Warm-started CEM around the incumbent policy.

    Guarantees fitness(returned) >= fitness(policy) on the call's training
    seeds. With a guard, the returned policy additionally keeps at least the
    incumbent's score on the guarded morphology, so buffer-level progress
    metrics stay monotone.
    """
    if not morphologies:
        raise ValueError("need at least one morphology")
    if budget <= population:
        return policy, TrainReport(
            generations=0,
            evaluations=0,
            best_per_generation=(),
            incumbent_before=float("nan"),
            incumbent_after=float("nan"),
        )
    problem = _CemProblem(
        models=list(morphologies),
        episodes=episodes_per_model,
        seeds=_derive_call_seeds(rng, len(morphologies)),
        settings=settings,
        v_max=policy.v_max,
        jobs=jobs,
    )
    incumbent_f = problem.fitness(policy.weights)
    evaluations = 1
    mean = policy.weights.copy()
    std = np.full(N_PARAMS, init_std)
    generations = (budget - 1) // population
    elite_count = max(1, int(round(elite_frac * population)))

    evaluated: list[tuple[np.ndarray, float]] = [(policy.weights.copy(), incumbent_f)]
    best_f = incumbent_f
    curve: list[float] = []
    for _gen in range(generations):
        batch = [
            np.clip(mean + std * rng.standard_normal(N_PARAMS), -20.0, 20.0)
            for _ in range(population)
        ]
        scores = problem.fitness_batch(batch)
        evaluations += len(batch)
        for w, s in zip(batch, scores):
            evaluated.append((w, s))
        best_f = max(best_f, max(scores))
        curve.append(best_f)
        # Elite update considers the incumbent best-ever as well, keeping the
        # search anchored to the improvement found so far.
        pool = list(zip(batch, scores)) + [max(evaluated, key=lambda it: it[1])]
        pool.sort(key=lambda it: -it[1])
        elites = np.stack([w for w, _ in pool[:elite_count]])
        mean = elites.mean(axis=0)
        std = elites.std(axis=0) + std_floor

    chosen_w, chosen_f = _select_guarded(
        evaluated, incumbent_f, policy, guard
    )
    return (
        PolicyParams(weights=chosen_w, v_max=policy.v_max),
        TrainReport(
            generations=generations,
            evaluations=evaluations,
            best_per_generation=tuple(curve),
            incumbent_before=incumbent_f,
            incumbent_after=chosen_f,
        ),
    )


def _select_guarded(
    evaluated: list[tuple[np.ndarray, float]],
    incumbent_f: float,
    incumbent: PolicyParams,
    guard: GuardSpec | None,
) -> tuple[np.ndarray, float]:
    """Best-by-fitness candidate that also passes the guard; the incumbent
    always qualifies and is the fallback."""
    ranked = sorted(evaluated[1:], key=lambda it: -it[1])
    for w, f in ranked:
        if f < incumbent_f:
            break
        if guard is None:
            return w, f
        candidate = PolicyParams(weights=w, v_max=incumbent.v_max)
        score = evaluate(
            guard.model, candidate, guard.episodes, guard.seed
        ).mean
        if score >= guard.incumbent_score:
            return w, f
    return incumbent.weights.copy(), incumbent_f


def save_policy(policy: PolicyParams, path, metadata: dict | None = None) -> None:
    payload = {
        "format": CHECKPOINT_FORMAT,
        "architecture": {
            "obs_dim": OBS_DIM,
            "hidden_dim": HIDDEN_DIM,
            "act_dim": ACT_DIM,
        },
        "v_max": policy.v_max,
        "weights": [float(v) for v in policy.weights],
        "metadata": metadata or {},
    }
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh)
        fh.write("\n")


def load_policy(path) -> PolicyParams:
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    if payload.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"unsupported checkpoint format in {path}")
    arch = payload["architecture"]
    if (arch["obs_dim"], arch["hidden_dim"], arch["act_dim"]) != (
        OBS_DIM,
        HIDDEN_DIM,
        ACT_DIM,
    ):
        raise ValueError(f"architecture mismatch in {path}")
    return PolicyParams(
        weights=np.asarray(payload["weights"], dtype=float),
        v_max=float(payload["v_max"]),
    )
