"""Bayesian optimization: exact GP regression with an RBF kernel and
Expected Improvement maximized over random candidate points."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import AskTellOptimizer
from ..errors import SingularGram

JITTERS = (0.0, 1e-10, 1e-8, 1e-7, 1e-6)


def _norm_pdf(z: float) -> float:
    return math.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)


def _norm_cdf(z: float) -> float:
    return 0.5 * (1.0 + math.erf(z / math.sqrt(2.0)))


def expected_improvement(mu: float, sigma: float, best: float, xi: float) -> float:
    """EI for maximization; degenerates to max(mu - best - xi, 0) at sigma=0."""
    improve = mu - best - xi
    if sigma <= 0.0:
        return max(improve, 0.0)
    z = improve / sigma
    return improve * _norm_cdf(z) + sigma * _norm_pdf(z)


@dataclass
class GpState:
    """Fitted GP with standardized targets."""

    length_scale: float
    noise: float
    x: np.ndarray
    y_mean: float
    y_std: float
    chol: np.ndarray = field(repr=False)
    alpha: np.ndarray = field(repr=False)


def _rbf(a: np.ndarray, b: np.ndarray, length_scale: float) -> np.ndarray:
    sq = np.sum(a**2, axis=1)[:, None] + np.sum(b**2, axis=1)[None, :] - 2 * a @ b.T
    return np.exp(-0.5 * np.maximum(sq, 0.0) / length_scale**2)


def fit_gp(
    x: np.ndarray, y: np.ndarray, length_scale: float = 1.0, noise: float = 1e-5
) -> GpState:
    """Fit on raw targets; standardization is stored for de-standardizing."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    y_mean = float(np.mean(y))
    y_std = float(np.std(y))
    if y_std == 0.0:
        y_std = 1.0
    y_n = (y - y_mean) / y_std
    gram = _rbf(x, x, length_scale)
    for jitter in JITTERS:
        try:
            chol = np.linalg.cholesky(gram + (noise + jitter) * np.eye(len(x)))
            break
        except np.linalg.LinAlgError:
            continue
    else:
        raise SingularGram(
            f"Gram matrix singular after jitter escalation to {JITTERS[-1]}"
        )
    alpha = np.linalg.solve(chol.T, np.linalg.solve(chol, y_n))
    return GpState(
        length_scale=length_scale,
        noise=noise,
        x=x,
        y_mean=y_mean,
        y_std=y_std,
        chol=chol,
        alpha=alpha,
    )


def gp_posterior(state: GpState, x: np.ndarray) -> tuple[float, float]:
    """De-standardized posterior mean and standard deviation at one point."""
    mu, sigma = gp_posterior_batch(state, np.atleast_2d(np.asarray(x, dtype=float)))
    return float(mu[0]), float(sigma[0])


def gp_posterior_batch(state: GpState, xs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    k_star = _rbf(state.x, xs, state.length_scale)
    mu_n = k_star.T @ state.alpha
    v = np.linalg.solve(state.chol, k_star)
    var_n = np.maximum(1.0 - np.sum(v * v, axis=0), 0.0)
    return mu_n * state.y_std + state.y_mean, np.sqrt(var_n) * state.y_std


class BayesOpt(AskTellOptimizer):
    kind = "bayesopt"

    def __init__(
        self,
        dim: int,
        seed: int,
        length_scale: float = 1.0,
        noise: float = 1e-5,
        initial_random: int = 10,
        xi: float = 0.01,
        acq_candidates: int = 1000,
    ):
        super().__init__(dim, seed)
        self.length_scale = length_scale
        self.noise = noise
        self.initial_random = initial_random
        self.xi = xi
        self.acq_candidates = acq_candidates
        self.asked = 0

    def _ask(self, n: int) -> np.ndarray:
        points = np.empty((n, self.dim))
        n_random = max(0, min(n, self.initial_random - self.asked))
        if not self.history:
            n_random = n  # nothing to fit a GP on yet
        if n_random:
            points[:n_random] = self.rng.uniform(0.0, 1.0, size=(n_random, self.dim))
        if n_random < n:
            points[n_random:] = self._acquire(n - n_random)
        self.asked += n
        return points

    def _acquire(self, count: int) -> np.ndarray:
        xs = np.stack([x for x, _ in self.history])
        ys = np.array([s for _, s in self.history])
        state = fit_gp(xs, ys, self.length_scale, self.noise)
        best = float(np.max(ys))
        candidates = self.rng.uniform(0.0, 1.0, size=(self.acq_candidates, self.dim))
        mu, sigma = gp_posterior_batch(state, candidates)
        ei = np.array(
            [
                expected_improvement(float(m), float(s), best, self.xi)
                for m, s in zip(mu, sigma)
            ]
        )
        top = np.argsort(-ei, kind="stable")[:count]
        return candidates[top]

    def _tell(self, points: np.ndarray, scores: np.ndarray) -> None:
        pass  # the GP refits from history at the next ask
