"""Improvement decomposition: how much came from the policy, how much from
the morphology.

The total improvement between checkpoints 0 and N splits exactly into a
policy term and a morphology term via a symmetric telescoping identity over
a lattice of cross-evaluations J(policy_i, morphology_j); the two terms sum
to Delta-J by construction, for any step size d dividing N.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import IncompleteTable
from ..morphspace import MorphParams
from ..policy import load_policy
from ..seeding import derive_seed
from ..sim2d import build_model, evaluate
from ..sim2d.env import SimSettings
from .runner import RunArtifacts, _resolve_design


@dataclass(frozen=True)
class DecompositionTable:
    """Cross-returns J over checkpoint indices: key (policy_i, morph_j)."""

    n_iterations: int
    values: dict[tuple[int, int], float]

    def at(self, i: int, j: int) -> float:
        try:
            return self.values[(i, j)]
        except KeyError:
            raise IncompleteTable(f"missing J(policy_{i}, morphology_{j})") from None


def decompose(table: DecompositionTable, d: int) -> tuple[float, float]:
    """Split J(N,N) - J(0,0) into (policy, morphology) contributions."""
    n = table.n_iterations
    if d < 1 or n % d != 0:
        raise IncompleteTable(f"step size {d} must divide the {n} iterations")
    policy_c = 0.0
    morph_c = 0.0
    for lam in range(n // d, 0, -1):
        hi, lo = lam * d, (lam - 1) * d
        policy_c += 0.5 * (
            (table.at(hi, hi) - table.at(lo, hi))
            + (table.at(hi, lo) - table.at(lo, lo))
        )
        morph_c += 0.5 * (
            (table.at(hi, hi) - table.at(hi, lo))
            + (table.at(lo, hi) - table.at(lo, lo))
        )
    return policy_c, morph_c


@dataclass(frozen=True)
class ContributionResult:
    design: str
    delta_j: float
    policy_contribution: float
    morph_contribution: float
    policy_share: float | None
    morph_share: float | None

    @property
    def degenerate(self) -> bool:
        return self.policy_share is None


def _shares(policy_c: float, morph_c: float, delta_j: float):
    if delta_j <= 0.0:
        return None, None
    policy_share = policy_c / delta_j
    return policy_share, 1.0 - policy_share  # exact sum to 1


def pretrained_vs_finetuned_ratio(base: float, pretrained: float, finetuned: float) -> float:
    """(pretrained - base) / (finetuned - base)."""
    if finetuned == base:
        raise ZeroDivisionError("finetuned return equals the base return")
    return (pretrained - base) / (finetuned - base)


class _CrossEvalCache:
    """JSONL cache of J(policy_i, morph_j) keyed by checkpoint, morphology
    id, seed, and episode count."""

    def __init__(self, path: Path):
        self.path = path
        self.values: dict[tuple, float] = {}
        if path.exists():
            with open(path, "r", encoding="utf-8") as fh:
                for line in fh:
                    rec = json.loads(line)
                    self.values[self._key_of(rec)] = rec["value"]

    @staticmethod
    def _key_of(rec: dict) -> tuple:
        return (
            rec["design"], rec["policy_iter"], rec["morph_id"],
            rec["seed"], rec["episodes"],
        )

    def get(self, key: tuple):
        return self.values.get(key)

    def put(self, key: tuple, value: float):
        self.values[key] = value
        rec = {
            "design": key[0], "policy_iter": key[1], "morph_id": key[2],
            "seed": key[3], "episodes": key[4], "value": value,
        }
        with open(self.path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def _buffer_best_at(artifacts_design, iteration: int) -> dict:
    rows = [
        r
        for r in artifacts_design.buffer_rows
        if r["iteration"] == iteration and r["rank"] == 0
    ]
    if not rows:
        raise IncompleteTable(
            f"{artifacts_design.name}: no buffer snapshot at iteration {iteration}"
        )
    return rows[0]


def build_cross_table(
    artifacts: RunArtifacts,
    design_name: str,
    d: int | None = None,
    episodes: int | None = None,
) -> DecompositionTable:
    """Cross-evaluate checkpoint policies against checkpoint morphologies.

    The morphology at checkpoint j is the buffer-best of iteration j (for
    j = 0, the best of the initial sampling round). Evaluations use a
    dedicated held-out seed per design and are cached on disk.
    """
    config = artifacts.config
    design = artifacts.designs[design_name]
    n = config.iterations
    d = n if d is None else d
    if d < 1 or n % d != 0:
        raise IncompleteTable(f"step size {d} must divide iterations {n}")
    episodes = config.evaluation_episodes if episodes is None else episodes
    spec = next(
        (s for s in config.designs if Path(s).stem == design_name or s == design_name),
        design_name,
    )
    ctx = _resolve_design(spec)
    space = _space_of(artifacts, design)
    seed = derive_seed(config.master_seed, "decomp-eval", design_name)
    settings = SimSettings(
        max_time=config.simulator.max_time,
        tilt_limit_deg=config.simulator.tilt_limit_deg,
        angvel_limit_deg=config.simulator.angvel_limit_deg,
    )
    cache = _CrossEvalCache(artifacts.out_dir / "decomp_cache.jsonl")

    # Checkpoint j's buffer-best corresponds to iteration index j - 1 in the
    # zero-based loop records; checkpoint 0 is the first iteration's buffer.
    lattice = [lam * d for lam in range(n // d + 1)]
    morphs: dict[int, tuple[str, object]] = {}
    for j in lattice:
        row = _buffer_best_at(design, max(j - 1, 0))
        params = MorphParams(space=space, values=np.asarray(row["values"]))
        morphs[j] = (row["id"], build_model(ctx.base_model, params))

    values: dict[tuple[int, int], float] = {}
    ckpt_dir = artifacts.out_dir / "designs" / design_name / "checkpoints"
    for i in lattice:
        policy = load_policy(ckpt_dir / f"policy_{i:04d}.json")
        for j in lattice:
            if abs(i - j) > d and i != j:
                continue  # only lattice neighbors enter the telescoping sum
            morph_id, model = morphs[j]
            key = (design_name, i, morph_id, seed, episodes)
            value = cache.get(key)
            if value is None:
                value = evaluate(model, policy, episodes, seed, settings).mean
                cache.put(key, value)
            values[(i, j)] = value
    return DecompositionTable(n_iterations=n, values=values)


def _space_of(artifacts: RunArtifacts, design) -> object:
    if design.buffer.entries:
        return design.buffer.entries[0].morphology.params.space
    from .runner import _resolve_space

    return _resolve_space(artifacts.config.design_space)


def contribution_report(
    artifacts: RunArtifacts,
    d: int | None = None,
    episodes: int | None = None,
) -> dict[str, ContributionResult]:
    """Per-design policy/morphology contribution split and normalized shares."""
    results = {}
    for name in artifacts.designs:
        table = build_cross_table(artifacts, name, d=d, episodes=episodes)
        use_d = artifacts.config.iterations if d is None else d
        policy_c, morph_c = decompose(table, use_d)
        n = table.n_iterations
        delta_j = table.at(n, n) - table.at(0, 0)
        policy_share, morph_share = _shares(policy_c, morph_c, delta_j)
        results[name] = ContributionResult(
            design=name,
            delta_j=delta_j,
            policy_contribution=policy_c,
            morph_contribution=morph_c,
            policy_share=policy_share,
            morph_share=morph_share,
        )
    return results


def write_contribution_csv(results: dict[str, ContributionResult], path) -> None:
    lines = ["design,delta_j,policy_contribution,morph_contribution,"
             "policy_share,morph_share"]
    for name, r in results.items():
        share_p = "" if r.policy_share is None else repr(r.policy_share)
        share_m = "" if r.morph_share is None else repr(r.morph_share)
        lines.append(
            f"{name},{r.delta_j!r},{r.policy_contribution!r},"
            f"{r.morph_contribution!r},{share_p},{share_m}"
        )
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
