"""Black-box morphology optimizers over the unit cube (ask/tell protocol)."""

from __future__ import annotations

import csv
from abc import ABC, abstractmethod
from pathlib import Path

import numpy as np

from ..errors import LengthMismatch
from ..seeding import derive_rng

KINDS = ("evolutionary", "cmaes", "bayesopt", "policygrad")


class AskTellOptimizer(ABC):
    """Common ask/tell surface: all points live in [0, 1]^dim, maximize score."""

    kind: str = ""

    def __init__(self, dim: int, seed: int):
        if dim < 1:
            raise ValueError("dim must be >= 1")
        self.dim = dim
        self.rng = derive_rng(seed, "optim", self.kind)
        self.history: list[tuple[np.ndarray, float]] = []

    def ask(self, n: int) -> np.ndarray:
        if n < 1:
            raise ValueError("n must be >= 1")
        points = np.clip(self._ask(n), 0.0, 1.0)
        assert points.shape == (n, self.dim)
        return points

    def tell(self, points, scores) -> None:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        scores = np.asarray(scores, dtype=float).ravel()
        if points.shape[0] != scores.shape[0]:
            raise LengthMismatch(
                f"{points.shape[0]} points vs {scores.shape[0]} scores"
            )
        if points.shape[1] != self.dim:
            raise LengthMismatch(f"points have dim {points.shape[1]}, want {self.dim}")
        for x, s in zip(points, scores):
            self.history.append((x.copy(), float(s)))
        self._tell(points, scores)

    @property
    def best_so_far(self) -> tuple[np.ndarray, float] | None:
        if not self.history:
            return None
        return max(self.history, key=lambda item: item[1])

    def dump_history(self, path) -> None:
        """CSV dump: eval_index, x0..x{dim-1}, score."""
        path = Path(path)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                ["eval_index"] + [f"x{i}" for i in range(self.dim)] + ["score"]
            )
            for i, (x, s) in enumerate(self.history):
                writer.writerow([i] + [repr(float(v)) for v in x] + [repr(s)])

    @abstractmethod
    def _ask(self, n: int) -> np.ndarray: ...

    @abstractmethod
    def _tell(self, points: np.ndarray, scores: np.ndarray) -> None: ...


def make_optimizer(kind: str, dim: int, seed: int, **overrides) -> AskTellOptimizer:
    from .bayesian import BayesOpt
    from .cmaes import CmaEs
    from .evolutionary import EvolutionarySearch
    from .gradient import PolicyGradientSearch

    table = {
        "evolutionary": EvolutionarySearch,
        "cmaes": CmaEs,
        "bayesopt": BayesOpt,
        "policygrad": PolicyGradientSearch,
    }
    if kind not in table:
        raise ValueError(f"unknown optimizer kind {kind!r}; choose from {KINDS}")
    return table[kind](dim=dim, seed=seed, **overrides)
