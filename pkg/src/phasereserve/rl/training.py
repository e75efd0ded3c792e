"""Episodic training loop and checkpoint I/O."""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, List, Optional

import numpy as np

from .ppo import PPOAgent, PPOConfig, RolloutBuffer

log = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1


@dataclass
class TrainResult:
    agent: PPOAgent
    curve: List[float] = field(default_factory=list)
    update_stats: List[dict] = field(default_factory=list)


def episode_seeds(seed: int, episodes: int) -> List[int]:
    """Demand seeds for each training episode, derived from the run seed."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, 7919]))
    return [int(x) for x in rng.integers(0, 2**31 - 1, size=episodes)]


def train(env, episodes: int, seed: int = 0, cfg: Optional[PPOConfig] = None,
          agent: Optional[PPOAgent] = None,
          on_episode: Optional[Callable[[int, float], None]] = None) -> TrainResult:
    """Train a PPO agent on ``env`` for ``episodes`` episodes.

    Each environment step is one SMDP decision; the buffer triggers a PPO
    update as soon as it holds ``cfg.buffer`` transitions. The returned curve
    holds the step-average reward of every episode.
    """
    if agent is None:
        agent = PPOAgent(env.state_dim, cfg, seed=seed)
    cfg = agent.cfg
    if agent.state_dim != env.state_dim:
        raise ValueError(f"agent state dim {agent.state_dim} != environment state dim {env.state_dim}")
    buf = RolloutBuffer(cfg.buffer, env.state_dim)
    result = TrainResult(agent)
    for ep, ep_seed in enumerate(episode_seeds(seed, episodes)):
        s = env.reset(ep_seed)
        total, steps = 0.0, 0
        while not env.done:
            a, z, lp, v = agent.act(s)
            s_next, r, j, info = env.step(float(a[0]))
            done = bool(info["done"])
            v_next = 0.0 if done else agent.value(s_next)
            buf.add(s, z, a, lp, v, r, v_next, j, done)
            total += r
            steps += 1
            if buf.full:
                result.update_stats.append(agent.update(buf))
            s = s_next
        avg = total / max(steps, 1)
        result.curve.append(avg)
        if on_episode is not None:
            on_episode(ep, avg)
        log.info("episode %d: step-average reward %.4f over %d decisions", ep, avg, steps)
    return result


def write_curve(curve: List[float], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["episode", "step_avg_reward"])
        for i, r in enumerate(curve):
            w.writerow([i, f"{r:.10g}"])


def save_checkpoint(agent: PPOAgent, path, meta: Optional[dict] = None) -> None:
    arrays = {f"param/{k}": v for k, v in agent.get_params().items()}
    st = agent.opt.state()
    for i, (m, v) in enumerate(zip(st["m"], st["v"])):
        arrays[f"adam_m/{i}"] = m
        arrays[f"adam_v/{i}"] = v
    header = {
        "version": CHECKPOINT_VERSION,
        "state_dim": agent.state_dim,
        "config": agent.cfg.to_dict(),
        "adam_t": st["t"],
        "updates": agent.updates,
        "rng_state": agent.rng.bit_generator.state,
        "meta": meta or {},
    }
    arrays["header"] = np.array(json.dumps(header, sort_keys=True))
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_checkpoint(path):
    """Return ``(agent, meta)`` restored from ``save_checkpoint`` output."""
    with np.load(path, allow_pickle=False) as data:
        header = json.loads(str(data["header"]))
        if header.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {header.get('version')}")
        cfg = PPOConfig(**header["config"])
        agent = PPOAgent(int(header["state_dim"]), cfg)
        agent.set_params({k[len("param/"):]: data[k] for k in data.files if k.startswith("param/")})
        n = len(agent.param_list())
        agent.opt.load_state({
            "t": header["adam_t"],
            "m": [data[f"adam_m/{i}"] for i in range(n)],
            "v": [data[f"adam_v/{i}"] for i in range(n)],
        })
    agent.rng.bit_generator.state = header["rng_state"]
    agent.updates = int(header["updates"])
    return agent, header["meta"]
