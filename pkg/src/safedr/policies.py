"""Policy parameterizations: tabular softmax and feature-linear Gaussian.

Both expose a stochastic sampling path for training and a deterministic
evaluation mode (argmax / mean action) for deployment-style evaluation.
"""

from __future__ import annotations

import numpy as np

from .cmdp import TabularPolicy

__all__ = ["SoftmaxTabularPolicy", "LinearGaussianPolicy",
           "pointgoal_features", "cartpole_features"]


def softmax_rows(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


class SoftmaxTabularPolicy:
    """pi(a|s) proportional to exp(logits[s, a])."""

    def __init__(self, num_states: int, num_actions: int, logits=None):
        if logits is None:
            logits = np.zeros((num_states, num_actions))
        self.logits = np.array(logits, dtype=float)
        if self.logits.shape != (num_states, num_actions):
            raise ValueError("logits must be shaped (S, A)")

    @property
    def num_states(self) -> int:
        return self.logits.shape[0]

    @property
    def num_actions(self) -> int:
        return self.logits.shape[1]

    def probs(self) -> np.ndarray:
        return softmax_rows(self.logits)

    def to_tabular(self) -> TabularPolicy:
        return TabularPolicy(self.probs())

    def sample(self, state: int, rng: np.random.Generator) -> int:
        p = softmax_rows(self.logits[state])
        return int(rng.choice(p.size, p=p))

    def deterministic_action(self, state: int) -> int:
        return int(np.argmax(self.logits[state]))  # ties to the lowest index

    def copy(self) -> "SoftmaxTabularPolicy":
        return SoftmaxTabularPolicy(self.num_states, self.num_actions, self.logits.copy())


class LinearGaussianPolicy:
    """Gaussian over actions with a feature-linear mean and fixed std.

    mean = weights @ features(state); actions are sampled from
    N(mean, std^2 I) during training and the mean itself is used in
    deterministic evaluation mode.  Environments clamp actions to their
    bounds, so the log-density is taken at the raw sample.
    """

    def __init__(self, feature_fn, feature_dim: int, action_dim: int,
                 std: float = 0.4, weights=None):
        if std <= 0.0:
            raise ValueError("std must be positive")
        self.feature_fn = feature_fn
        self.std = float(std)
        if weights is None:
            weights = np.zeros((action_dim, feature_dim))
        self.weights = np.array(weights, dtype=float)
        if self.weights.shape != (action_dim, feature_dim):
            raise ValueError("weights must be shaped (action_dim, feature_dim)")

    @property
    def action_dim(self) -> int:
        return self.weights.shape[0]

    def features(self, states: np.ndarray) -> np.ndarray:
        return self.feature_fn(np.asarray(states, dtype=float))

    def mean_action(self, states: np.ndarray) -> np.ndarray:
        return self.features(states) @ self.weights.T

    def sample(self, states: np.ndarray, rng: np.random.Generator):
        """Returns (raw_actions, features); raw actions are pre-clamp."""
        phi = self.features(states)
        mean = phi @ self.weights.T
        raw = mean + self.std * rng.standard_normal(mean.shape)
        return raw, phi

    def grad_log_prob(self, phi: np.ndarray, raw_actions: np.ndarray) -> np.ndarray:
        """d log pi / d weights summed over nothing: shape (..., action_dim, feature_dim)."""
        mean = phi @ self.weights.T
        score = (raw_actions - mean) / (self.std ** 2)
        return score[..., :, None] * phi[..., None, :]

    def copy(self) -> "LinearGaussianPolicy":
        clone = LinearGaussianPolicy(self.feature_fn, self.weights.shape[1],
                                     self.weights.shape[0], self.std,
                                     self.weights.copy())
        return clone


def _rbf(pos: np.ndarray, centers: np.ndarray, bandwidth: float) -> np.ndarray:
    d2 = ((pos[..., None, :] - centers) ** 2).sum(-1)
    return np.exp(-d2 / (2.0 * bandwidth ** 2))


def pointgoal_features(arena=(1.5, 1.0), grid=(5, 3), bandwidth=0.5):
    """Bias, scaled position/velocity, previous action and a position RBF grid."""
    gx = np.linspace(-arena[0], arena[0], grid[0])
    gy = np.linspace(-arena[1], arena[1], grid[1])
    centers = np.stack(np.meshgrid(gx, gy, indexing="ij"), axis=-1).reshape(-1, 2)
    dim = 7 + centers.shape[0]

    def features(states: np.ndarray) -> np.ndarray:
        states = np.asarray(states, dtype=float)
        pos = states[..., 0:2]
        parts = [
            np.ones(states.shape[:-1] + (1,)),
            pos / np.asarray(arena),
            states[..., 2:4],
            states[..., 4:6],
            _rbf(pos, centers, bandwidth),
        ]
        return np.concatenate(parts, axis=-1)

    return features, dim


def cartpole_features():
    """Bias, cart state and trig-embedded pole angle."""
    dim = 8

    def features(states: np.ndarray) -> np.ndarray:
        states = np.asarray(states, dtype=float)
        x, xdot = states[..., 0], states[..., 1]
        theta, thetadot = states[..., 2], states[..., 3]
        cols = [np.ones_like(x), x, xdot / 2.0, np.sin(theta), np.cos(theta),
                thetadot / 3.0, np.sin(theta) * np.cos(theta),
                np.sin(theta) * thetadot / 3.0]
        return np.stack(cols, axis=-1)

    return features, dim
