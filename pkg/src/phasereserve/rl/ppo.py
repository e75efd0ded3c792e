"""PPO with SMDP-discounted advantages.

Transitions carry a sojourn time ``j``; discounting between consecutive
decisions is ``gamma ** j`` instead of ``gamma``.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass
from typing import Dict, List, Optional

import numpy as np

from .networks import Actor, Critic, sample_action

log = logging.getLogger(__name__)


@dataclass
class PPOConfig:
    epsilon: float = 0.1
    gamma: float = 0.995
    lam: float = 0.99
    lr: float = 2.5e-4
    minibatch: int = 256
    epochs: int = 20
    buffer: int = 1200
    hidden: int = 128
    init_std: float = 0.5
    value_coef: float = 0.5
    entropy_coef: float = 0.0
    max_grad_norm: Optional[float] = 0.5
    adam_betas: tuple = (0.9, 0.999)
    adam_eps: float = 1e-8

    def __post_init__(self):
        if not (0 < self.epsilon < 1):
            raise ValueError("epsilon must lie in (0, 1)")
        if not (0 < self.gamma <= 1 and 0 < self.lam <= 1):
            raise ValueError("gamma and lambda must lie in (0, 1]")
        for k in ("lr", "minibatch", "epochs", "buffer", "hidden", "init_std"):
            if getattr(self, k) <= 0:
                raise ValueError(f"{k} must be positive")
        self.adam_betas = tuple(self.adam_betas)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["adam_betas"] = list(self.adam_betas)
        return d


class RolloutBuffer:
    """Fixed-capacity store of transitions plus values/log-probs cached at collection."""

    def __init__(self, capacity: int, state_dim: int, action_dim: int = 1):
        self.capacity = capacity
        self.s = np.zeros((capacity, state_dim))
        self.z = np.zeros((capacity, action_dim))
        self.a = np.zeros((capacity, action_dim))
        self.logp = np.zeros(capacity)
        self.v = np.zeros(capacity)
        self.v_next = np.zeros(capacity)
        self.r = np.zeros(capacity)
        self.j = np.zeros(capacity)
        self.done = np.zeros(capacity, dtype=bool)
        self.size = 0

    @property
    def full(self) -> bool:
        return self.size >= self.capacity

    def add(self, s, z, a, logp, v, r, v_next, j, done):
        if self.full:
            raise RuntimeError("rollout buffer is full")
        i = self.size
        self.s[i] = s
        self.z[i] = z
        self.a[i] = a
        self.logp[i] = logp
        self.v[i] = v
        self.r[i] = r
        self.v_next[i] = v_next
        self.j[i] = j
        self.done[i] = done
        self.size += 1

    def clear(self):
        self.size = 0


def gae_smdp(r, v, v_next, j, done, gamma: float, lam: float):
    """Generalised advantage estimation with sojourn-time discounting.

    ``delta_t = r_t + gamma**j_t * V(s_{t+1}) - V(s_t)`` and
    ``A_t = delta_t + gamma**j_t * lam * A_{t+1}``, both cut at episode ends
    (``done``). The last transition bootstraps from ``v_next`` unless done.
    Returns ``(advantages, returns)``; returns are ``A + V``.
    """
    r = np.asarray(r, dtype=float)
    n = r.shape[0]
    disc = np.power(gamma, np.asarray(j, dtype=float))
    notdone = 1.0 - np.asarray(done, dtype=float)
    delta = r + disc * np.asarray(v_next, dtype=float) * notdone - np.asarray(v, dtype=float)
    adv = np.zeros(n)
    running = 0.0
    for t in range(n - 1, -1, -1):
        running = delta[t] + disc[t] * lam * notdone[t] * running
        adv[t] = running
    return adv, adv + v


class Adam:
    def __init__(self, params: List[np.ndarray], lr: float, betas=(0.9, 0.999), eps=1e-8):
        self.params = params
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, grads: List[np.ndarray]):
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)

    def state(self) -> dict:
        return {"t": self.t, "m": [x.copy() for x in self.m], "v": [x.copy() for x in self.v]}

    def load_state(self, st: dict):
        self.t = int(st["t"])
        for dst, src in zip(self.m, st["m"]):
            dst[...] = src
        for dst, src in zip(self.v, st["v"]):
            dst[...] = src


class PPOAgent:
    """Actor-critic pair with a shared Adam optimiser over independent parameters."""

    def __init__(self, state_dim: int, cfg: Optional[PPOConfig] = None, seed: int = 0):
        self.cfg = cfg or PPOConfig()
        self.state_dim = state_dim
        ss = np.random.SeedSequence(seed)
        a_ss, c_ss, s_ss = ss.spawn(3)
        self.actor = Actor(state_dim, self.cfg.hidden, init_std=self.cfg.init_std,
                           rng=np.random.default_rng(a_ss))
        self.critic = Critic(state_dim, self.cfg.hidden, rng=np.random.default_rng(c_ss))
        self.rng = np.random.default_rng(s_ss)
        self.opt = Adam(self.param_list(), self.cfg.lr, self.cfg.adam_betas, self.cfg.adam_eps)
        self.updates = 0

    # parameter plumbing -----------------------------------------------------
    def param_names(self) -> List[str]:
        return [f"actor.{k}" for k in self.actor.params] + [f"critic.{k}" for k in self.critic.params]

    def param_list(self) -> List[np.ndarray]:
        return list(self.actor.params.values()) + list(self.critic.params.values())

    def get_params(self) -> Dict[str, np.ndarray]:
        return {n: p.copy() for n, p in zip(self.param_names(), self.param_list())}

    def set_params(self, params: Dict[str, np.ndarray]):
        for n, p in zip(self.param_names(), self.param_list()):
            p[...] = params[n]

    # acting ----------------------------------------------------------------
    def act(self, s, greedy: bool = False):
        """Return ``(a, z, log_prob, value)`` for a single state."""
        s = np.asarray(s, dtype=float)[None, :]
        mean, std = self.actor.forward(s)
        v = float(self.critic.forward(s)[0])
        if greedy:
            a = mean[0]
            return a, np.arctanh(np.clip(a, -(1 - 1e-6), 1 - 1e-6)), 0.0, v
        a, lp, z = sample_action(mean, std, self.rng)
        return a[0], z[0], float(lp[0]), v

    def value(self, s) -> float:
        return float(self.critic.forward(np.asarray(s, dtype=float)[None, :])[0])

    # learning --------------------------------------------------------------
    def loss_and_grads(self, s, z, logp_old, adv, ret):
        """Clipped-surrogate + value loss on a batch, and its parameter gradients.

        Gradients are returned in ``param_list`` order.
        """
        cfg = self.cfg
        B = s.shape[0]
        logp = self.actor.log_prob(s, z)
        ratio = np.exp(logp - logp_old)
        clipped = np.clip(ratio, 1.0 - cfg.epsilon, 1.0 + cfg.epsilon)
        unclipped_wins = ratio * adv <= clipped * adv
        surr = np.where(unclipped_wins, ratio * adv, clipped * adv)
        v = self.critic.forward(s)
        std = self.actor.std()
        entropy = float(np.sum(np.log(std) + 0.5 * (1.0 + np.log(2.0 * np.pi))))
        pi_loss = -surr.mean()
        v_loss = cfg.value_coef * np.mean((v - ret) ** 2)
        loss = pi_loss + v_loss - cfg.entropy_coef * entropy

        g_logp = -(ratio * adv * unclipped_wins) / B
        ga = self.actor.backward(s, z, g_logp)
        if cfg.entropy_coef:
            ga["log_std"] = ga["log_std"] - cfg.entropy_coef * (np.exp(self.actor.params["log_std"]) > 1e-3)
        gc = self.critic.backward(s, 2.0 * cfg.value_coef * (v - ret) / B)
        grads = [ga[k] for k in self.actor.params] + [gc[k] for k in self.critic.params]
        stats = {
            "loss": float(loss), "pi_loss": float(pi_loss), "v_loss": float(v_loss),
            "ratio_mean": float(ratio.mean()), "clip_frac": float(np.mean(np.abs(ratio - 1.0) > cfg.epsilon)),
            "approx_kl": float(np.mean(logp_old - logp)),
        }
        return float(loss), grads, stats

    def update(self, buf: RolloutBuffer) -> dict:
        """Run the PPO epochs on a full buffer, then clear it."""
        cfg = self.cfg
        n = buf.size
        s, z, logp_old = buf.s[:n], buf.z[:n], buf.logp[:n]
        adv, ret = gae_smdp(buf.r[:n], buf.v[:n], buf.v_next[:n], buf.j[:n], buf.done[:n], cfg.gamma, cfg.lam)
        adv = (adv - adv.mean()) / (adv.std() + 1e-8)

        snapshot = self.get_params()
        opt_snapshot = self.opt.state()
        init_ratio = np.exp(self.actor.log_prob(s, z) - logp_old)
        stats = {
            "adv_mean": float(adv.mean()), "adv_std": float(adv.std()),
            "initial_ratio_dev": float(np.max(np.abs(init_ratio - 1.0))),
            "ratio_means": [], "losses": [],
        }
        for _ in range(cfg.epochs):
            order = self.rng.permutation(n)
            for start in range(0, n, cfg.minibatch):
                idx = order[start : start + cfg.minibatch]
                loss, grads, st = self.loss_and_grads(s[idx], z[idx], logp_old[idx], adv[idx], ret[idx])
                if not np.isfinite(loss) or not all(np.all(np.isfinite(g)) for g in grads):
                    log.error("non-finite PPO loss; restoring parameters from before this update")
                    self.set_params(snapshot)
                    self.opt.load_state(opt_snapshot)
                    buf.clear()
                    stats["aborted"] = True
                    return stats
                if cfg.max_grad_norm:
                    norm = np.sqrt(sum(float(np.sum(g * g)) for g in grads))
                    if norm > cfg.max_grad_norm:
                        grads = [g * (cfg.max_grad_norm / norm) for g in grads]
                self.opt.step(grads)
                stats["ratio_means"].append(st["ratio_mean"])
                stats["losses"].append(loss)
        self.updates += 1
        buf.clear()
        stats["aborted"] = False
        return stats
