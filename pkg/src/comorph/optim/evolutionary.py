"""Evolutionary search: tournament selection, BLX-alpha crossover, elitism."""

from __future__ import annotations

import math

import numpy as np

from . import AskTellOptimizer


class EvolutionarySearch(AskTellOptimizer):
    kind = "evolutionary"

    def __init__(
        self,
        dim: int,
        seed: int,
        population_size: int = 50,
        elite_fraction: float = 0.10,
        tournament_size: int = 3,
        blx_alpha: float = 0.3,
        mutation_rate: float = 0.1,
        mutation_strength: float = 0.1,
    ):
        super().__init__(dim, seed)
        self.population_size = population_size
        self.elite_fraction = elite_fraction
        self.tournament_size = tournament_size
        self.blx_alpha = blx_alpha
        self.mutation_rate = mutation_rate
        self.mutation_strength = mutation_strength
        # Scored individuals, kept sorted best-first.
        self.population: list[tuple[np.ndarray, float]] = []

    @property
    def elite_count(self) -> int:
        return max(1, math.ceil(self.elite_fraction * self.population_size))

    def _tournament(self) -> np.ndarray:
        size = min(self.tournament_size, len(self.population))
        idx = self.rng.choice(len(self.population), size=size, replace=False)
        winner = min(idx, key=lambda i: -self.population[i][1])
        return self.population[winner][0]

    def _offspring(self) -> np.ndarray:
        pa, pb = self._tournament(), self._tournament()
        lo = np.minimum(pa, pb)
        hi = np.maximum(pa, pb)
        span = hi - lo
        child = self.rng.uniform(
            lo - self.blx_alpha * span, hi + self.blx_alpha * span
        )
        mutate = self.rng.random(self.dim) < self.mutation_rate
        noise = self.rng.normal(0.0, self.mutation_strength, self.dim)
        child = np.where(mutate, child + noise, child)
        return np.clip(child, 0.0, 1.0)

    def _ask(self, n: int) -> np.ndarray:
        if not self.population:
            return self.rng.uniform(0.0, 1.0, size=(n, self.dim))
        return np.stack([self._offspring() for _ in range(n)])

    def _tell(self, points: np.ndarray, scores: np.ndarray) -> None:
        newcomers = sorted(
            ((x.copy(), float(s)) for x, s in zip(points, scores)),
            key=lambda item: -item[1],
        )
        if not self.population:
            self.population = newcomers[: self.population_size]
            return
        # Generational replacement: elites survive unchanged, newcomers join,
        # remaining slots refill from incumbents by rank.
        elites = self.population[: self.elite_count]
        rest = self.population[self.elite_count:]
        merged = elites + newcomers[: self.population_size - len(elites)]
        for individual in rest:
            if len(merged) >= self.population_size:
                break
            merged.append(individual)
        self.population = sorted(merged, key=lambda item: -item[1])[
            : self.population_size
        ]
