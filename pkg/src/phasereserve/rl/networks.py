"""Two-layer actor and critic networks with hand-written backpropagation."""

from __future__ import annotations

from typing import Dict, Tuple

import numpy as np

LOG_2PI = float(np.log(2.0 * np.pi))
STD_FLOOR = 1e-3
# atanh(1 - 1e-6): pre-squash means are confined to where tanh is still invertible
PRE_TANH_LIMIT = float(np.arctanh(1.0 - 1e-6))


def _init_dense(rng, n_in, n_out, scale=1.0):
    return rng.normal(0.0, scale / np.sqrt(n_in), size=(n_in, n_out)), np.zeros(n_out)


class Actor:
    """Gaussian policy over a pre-squash variable, squashed to (-1, 1) by tanh.

    Hidden layer uses tanh; the mean head is tanh-activated; the log-std is a
    free parameter vector independent of the state.
    """

    def __init__(self, state_dim: int, hidden: int = 128, action_dim: int = 1, init_std: float = 0.5,
                 rng=None):
        rng = np.random.default_rng(0) if rng is None else rng
        self.state_dim = state_dim
        W1, b1 = _init_dense(rng, state_dim, hidden)
        W2, b2 = _init_dense(rng, hidden, action_dim, scale=0.01)
        self.params: Dict[str, np.ndarray] = {
            "W1": W1, "b1": b1, "W2": W2, "b2": b2, "log_std": np.full(action_dim, np.log(init_std)),
        }

    def _check(self, s):
        s = np.asarray(s, dtype=float)
        if s.shape[-1] != self.state_dim:
            raise ValueError(f"state has dimension {s.shape[-1]}, actor expects {self.state_dim}")
        return s

    def pre_mean(self, s):
        """Pre-squash mean (clipped) and the hidden activations."""
        p = self.params
        h = np.tanh(s @ p["W1"] + p["b1"])
        u = h @ p["W2"] + p["b2"]
        return np.clip(u, -PRE_TANH_LIMIT, PRE_TANH_LIMIT), u, h

    def std(self) -> np.ndarray:
        return np.maximum(np.exp(self.params["log_std"]), STD_FLOOR)

    def forward(self, s) -> Tuple[np.ndarray, np.ndarray]:
        """Return ``(mean, std)`` with ``mean = tanh(pre-squash mean)`` in (-1, 1)."""
        s = self._check(s)
        u, _, _ = self.pre_mean(s)
        return np.tanh(u), self.std()

    def log_prob(self, s, z) -> np.ndarray:
        """Log density of squashed actions ``tanh(z)``; ``z`` has shape (B, action_dim)."""
        s = self._check(s)
        u, _, _ = self.pre_mean(s)
        return squashed_log_prob(z, u, self.std())

    def backward(self, s, z, g_logp) -> Dict[str, np.ndarray]:
        """Gradients of ``sum(g_logp * log_prob(s, z))`` with respect to every parameter."""
        p = self.params
        u_c, u, h = self.pre_mean(s)
        std = self.std()
        g_logp = g_logp.reshape(-1, 1)
        diff = (z - u_c) / std
        g_u = g_logp * diff / std * ((u > -PRE_TANH_LIMIT) & (u < PRE_TANH_LIMIT))
        g_logstd = (g_logp * (diff ** 2 - 1.0)).sum(axis=0)
        g_logstd = g_logstd * (np.exp(p["log_std"]) > STD_FLOOR)
        g_h = (g_u @ p["W2"].T) * (1.0 - h ** 2)
        return {
            "W1": s.T @ g_h, "b1": g_h.sum(axis=0), "W2": h.T @ g_u, "b2": g_u.sum(axis=0),
            "log_std": g_logstd,
        }


class Critic:
    """State-value network: one ReLU hidden layer, scalar output."""

    def __init__(self, state_dim: int, hidden: int = 128, rng=None):
        rng = np.random.default_rng(1) if rng is None else rng
        self.state_dim = state_dim
        W1, b1 = _init_dense(rng, state_dim, hidden, scale=np.sqrt(2.0))
        W2, b2 = _init_dense(rng, hidden, 1)
        self.params: Dict[str, np.ndarray] = {"W1": W1, "b1": b1, "W2": W2, "b2": b2}

    def forward(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        if s.shape[-1] != self.state_dim:
            raise ValueError(f"state has dimension {s.shape[-1]}, critic expects {self.state_dim}")
        p = self.params
        h = np.maximum(s @ p["W1"] + p["b1"], 0.0)
        return (h @ p["W2"] + p["b2"])[..., 0]

    def backward(self, s, g_v) -> Dict[str, np.ndarray]:
        """Gradients of ``sum(g_v * V(s))``."""
        p = self.params
        pre = s @ p["W1"] + p["b1"]
        h = np.maximum(pre, 0.0)
        g_v = g_v.reshape(-1, 1)
        g_h = (g_v @ p["W2"].T) * (pre > 0.0)
        return {"W1": s.T @ g_h, "b1": g_h.sum(axis=0), "W2": h.T @ g_v, "b2": g_v.sum(axis=0)}


def log1m_tanh_sq(z):
    """log(1 - tanh(z)^2) without cancellation for large |z|."""
    az = np.abs(z)
    return 2.0 * (np.log(2.0) - az - np.log1p(np.exp(-2.0 * az)))


def squashed_log_prob(z, u, std) -> np.ndarray:
    """Log density of ``a = tanh(z)`` with ``z ~ Normal(u, std)``, summed over action dims."""
    diff = (z - u) / std
    lp = -0.5 * diff ** 2 - np.log(std) - 0.5 * LOG_2PI - log1m_tanh_sq(z)
    return lp.sum(axis=-1)


def sample_action(mean, std, rng) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Draw a squashed action around ``mean`` (already in (-1, 1)).

    Returns ``(a, log_prob, z)`` with ``a = tanh(z)`` and ``z`` the pre-squash
    draw, kept so log-probabilities can be recomputed without inverting tanh.
    """
    std = np.asarray(std, dtype=float)
    if np.any(std <= 0):
        raise ValueError("std must be positive")
    mean = np.asarray(mean, dtype=float)
    u = np.arctanh(np.clip(mean, -(1.0 - 1e-6), 1.0 - 1e-6))
    z = u + std * rng.standard_normal(u.shape)
    # tanh rounds to exactly +-1 beyond |z| ~ 19
    a = np.clip(np.tanh(z), -1.0 + 1e-12, 1.0 - 1e-12)
    return a, squashed_log_prob(z, u, std), z
