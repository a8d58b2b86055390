"""Policy-gradient morphology search as a contextless continuous bandit.

A two-hidden-layer MLP maps a constant unit input to a mean point in
(0, 1)^dim; REINFORCE with a running-mean baseline updates the weights from
an experience replay buffer.
"""

from __future__ import annotations

import numpy as np

from . import AskTellOptimizer


class PolicyGradientSearch(AskTellOptimizer):
    kind = "policygrad"

    def __init__(
        self,
        dim: int,
        seed: int,
        hidden: int = 64,
        learning_rate: float = 1e-3,
        exploration_noise_std: float = 0.1,
        replay_capacity: int = 1000,
        batch_size: int = 32,
    ):
        super().__init__(dim, seed)
        self.hidden = hidden
        self.learning_rate = learning_rate
        self.exploration_noise_std = exploration_noise_std
        self.replay_capacity = replay_capacity
        self.batch_size = batch_size
        self.replay: list[tuple[np.ndarray, float]] = []
        self._replay_cursor = 0
        self.baseline = 0.0
        self._score_count = 0
        s = 0.1
        self.w1 = self.rng.normal(0.0, s, (hidden, 1))
        self.b1 = np.zeros(hidden)
        self.w2 = self.rng.normal(0.0, s, (hidden, hidden))
        self.b2 = np.zeros(hidden)
        self.w3 = self.rng.normal(0.0, s, (dim, hidden))
        self.b3 = np.zeros(dim)

    def _forward(self):
        h1 = np.tanh(self.w1[:, 0] + self.b1)
        h2 = np.tanh(self.w2 @ h1 + self.b2)
        z = self.w3 @ h2 + self.b3
        mean = 1.0 / (1.0 + np.exp(-z))
        return h1, h2, z, mean

    def _ask(self, n: int) -> np.ndarray:
        _, _, _, mean = self._forward()
        noise = self.rng.normal(0.0, self.exploration_noise_std, (n, self.dim))
        return np.clip(mean[None, :] + noise, 0.0, 1.0)

    def _push_replay(self, point: np.ndarray, score: float):
        if len(self.replay) < self.replay_capacity:
            self.replay.append((point, score))
        else:
            self.replay[self._replay_cursor] = (point, score)
            self._replay_cursor = (self._replay_cursor + 1) % self.replay_capacity

    def _tell(self, points: np.ndarray, scores: np.ndarray) -> None:
        for x, s in zip(points, scores):
            self._push_replay(x.copy(), float(s))
            self._score_count += 1
            self.baseline += (float(s) - self.baseline) / self._score_count
        self._gradient_step()

    def _gradient_step(self):
        idx = self.rng.integers(0, len(self.replay), size=self.batch_size)
        batch_x = np.stack([self.replay[i][0] for i in idx])
        batch_s = np.array([self.replay[i][1] for i in idx])
        advantage = batch_s - self.baseline

        h1, h2, z, mean = self._forward()
        var = self.exploration_noise_std**2
        # d logN(x; mean, var) / d mean, weighted by the advantage.
        d_mean = (advantage[:, None] * (batch_x - mean[None, :]) / var).mean(axis=0)
        sig_grad = mean * (1.0 - mean)
        d_z = d_mean * sig_grad
        d_b3 = d_z
        d_w3 = np.outer(d_z, h2)
        d_h2 = self.w3.T @ d_z
        d_z2 = d_h2 * (1.0 - h2**2)
        d_b2 = d_z2
        d_w2 = np.outer(d_z2, h1)
        d_h1 = self.w2.T @ d_z2
        d_z1 = d_h1 * (1.0 - h1**2)
        d_b1 = d_z1
        d_w1 = d_z1[:, None]

        lr = self.learning_rate
        self.w1 += lr * d_w1
        self.b1 += lr * d_b1
        self.w2 += lr * d_w2
        self.b2 += lr * d_b2
        self.w3 += lr * d_w3
        self.b3 += lr * d_b3
