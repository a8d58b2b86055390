"""CMA-ES over the unit cube, standard (mu/mu_w, lambda) strategy.

Mean starts at the cube center with step size 0.3. The asked batch size is
the generation size; cumulation and learning-rate constants follow the
standard tutorial formulas and are recomputed per generation so varying
batch sizes stay well-defined.
"""

from __future__ import annotations

import numpy as np

from . import AskTellOptimizer
from ..errors import NotReady

RESAMPLE_ATTEMPTS = 100
MIN_EIGENVALUE = 1e-14


class CmaEs(AskTellOptimizer):
    kind = "cmaes"

    def __init__(self, dim: int, seed: int, sigma0: float = 0.3):
        super().__init__(dim, seed)
        self.mean = np.full(dim, 0.5)
        self.sigma = float(sigma0)
        self.cov = np.eye(dim)
        self.p_sigma = np.zeros(dim)
        self.p_c = np.zeros(dim)
        self.generation = 0
        self._pending: np.ndarray | None = None
        self.chi_n = np.sqrt(dim) * (1 - 1 / (4 * dim) + 1 / (21 * dim * dim))

    def _decompose(self):
        # Symmetrize, then floor eigenvalues so sampling stays defined.
        self.cov = 0.5 * (self.cov + self.cov.T)
        eigvals, eigvecs = np.linalg.eigh(self.cov)
        eigvals = np.maximum(eigvals, MIN_EIGENVALUE)
        return eigvals, eigvecs

    def _ask(self, n: int) -> np.ndarray:
        if self._pending is not None:
            raise NotReady("CMA-ES requires tell() before the next ask()")
        eigvals, eigvecs = self._decompose()
        scale = eigvecs * np.sqrt(eigvals)
        points = np.empty((n, self.dim))
        for i in range(n):
            x = self.mean + self.sigma * (scale @ self.rng.standard_normal(self.dim))
            for _ in range(RESAMPLE_ATTEMPTS):
                if np.all((x >= 0.0) & (x <= 1.0)):
                    break
                x = self.mean + self.sigma * (
                    scale @ self.rng.standard_normal(self.dim)
                )
            points[i] = np.clip(x, 0.0, 1.0)
        self._pending = points
        return points

    def _tell(self, points: np.ndarray, scores: np.ndarray) -> None:
        self._pending = None
        lam = len(points)
        mu = max(1, lam // 2)
        order = np.argsort(-scores, kind="stable")
        selected = points[order[:mu]]

        ranks = np.arange(1, mu + 1)
        weights = np.log(mu + 0.5) - np.log(ranks)
        weights /= weights.sum()
        mu_eff = 1.0 / np.sum(weights**2)

        n = self.dim
        c_sigma = (mu_eff + 2) / (n + mu_eff + 5)
        d_sigma = 1 + 2 * max(0.0, np.sqrt((mu_eff - 1) / (n + 1)) - 1) + c_sigma
        c_c = (4 + mu_eff / n) / (n + 4 + 2 * mu_eff / n)
        c_1 = 2 / ((n + 1.3) ** 2 + mu_eff)
        c_mu = min(
            1 - c_1, 2 * (mu_eff - 2 + 1 / mu_eff) / ((n + 2) ** 2 + mu_eff)
        )

        old_mean = self.mean
        self.mean = weights @ selected
        mean_shift = (self.mean - old_mean) / self.sigma

        eigvals, eigvecs = self._decompose()
        inv_sqrt = (eigvecs / np.sqrt(eigvals)) @ eigvecs.T
        self.p_sigma = (1 - c_sigma) * self.p_sigma + np.sqrt(
            c_sigma * (2 - c_sigma) * mu_eff
        ) * (inv_sqrt @ mean_shift)

        self.generation += 1
        norm_ps = np.linalg.norm(self.p_sigma)
        h_sigma = norm_ps / np.sqrt(
            1 - (1 - c_sigma) ** (2 * self.generation)
        ) < (1.4 + 2 / (n + 1)) * self.chi_n
        self.p_c = (1 - c_c) * self.p_c + h_sigma * np.sqrt(
            c_c * (2 - c_c) * mu_eff
        ) * mean_shift

        ys = (selected - old_mean) / self.sigma
        rank_mu = (ys.T * weights) @ ys
        self.cov = (
            (1 - c_1 - c_mu) * self.cov
            + c_1
            * (
                np.outer(self.p_c, self.p_c)
                + (1 - h_sigma) * c_c * (2 - c_c) * self.cov
            )
            + c_mu * rank_mu
        )
        self.sigma = float(
            np.clip(
                self.sigma * np.exp((c_sigma / d_sigma) * (norm_ps / self.chi_n - 1)),
                1e-12,
                1e3,
            )
        )
