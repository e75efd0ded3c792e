"""Non-learning reference controllers: self-organising traffic lights and fixed time."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, Sequence, Tuple

import numpy as np

from .signal import PhasePlan
from .sim import GREEN, ConfigError

KEEP, SWITCH = "keep", "switch"


@dataclass(frozen=True)
class SotlConfig:
    """Platoon-aware SOTL parameters.

    theta: accumulator threshold (veh*s); mu: minimum green (s); omega:
    detection distance for vehicles waiting or approaching on red (m); nu:
    distance in which a small platoon on green blocks a switch (m);
    platoon: vehicles on green within ``nu`` below which a switch is held.
    """

    theta: float = 50.0
    mu: float = 5.0
    omega: float = 80.0
    nu: float = 25.0
    platoon: int = 3

    def __post_init__(self):
        if min(self.theta, self.mu, self.omega, self.nu) <= 0 or self.platoon <= 0:
            raise ConfigError("SOTL parameters must be positive")
        if not self.nu < self.omega:
            raise ConfigError("SOTL platoon distance must be shorter than the detection distance")


def sotl_decide(counts_red_approach: int, count_green_near: int, elapsed_green: float, kappa: float,
                cfg: SotlConfig) -> Tuple[str, float]:
    """One per-second SOTL evaluation.

    Adds the red-side count to the accumulator and returns ``(decision,
    new_kappa)``; the accumulator resets to 0 on a switch.
    """
    kappa = kappa + counts_red_approach
    platoon_passing = 0 < count_green_near < cfg.platoon
    if kappa >= cfg.theta and elapsed_green >= cfg.mu and not platoon_passing:
        return SWITCH, 0.0
    return KEEP, kappa


class SotlController:
    name = "sotl"

    def __init__(self, cfg: SotlConfig = SotlConfig()):
        self.cfg = cfg
        self.kappa = 0.0

    def reset(self):
        self.kappa = 0.0

    def _counts(self, env) -> Tuple[int, int]:
        sim = env.sim
        red, near = 0, 0
        for lane in sim.lanes:
            p = lane.pos[: lane.n]
            inb = p[p >= 0.0]
            if env.ctrl.signal_state(lane.served_movements) == GREEN:
                near += int(np.count_nonzero(inb <= self.cfg.nu))
            else:
                red += int(np.count_nonzero(inb <= self.cfg.omega))
        return red, near

    def _decide(self, env) -> bool:
        red, near = self._counts(env)
        mu = max(self.cfg.mu, env.current_phase.sigma_minus)
        decision, self.kappa = sotl_decide(red, near, env.ctrl.elapsed, self.kappa,
                                           SotlConfig(self.cfg.theta, mu, self.cfg.omega, self.cfg.nu,
                                                      self.cfg.platoon))
        return decision == SWITCH

    def step(self, env, s):
        self.kappa = 0.0
        return env.step_switching(self._decide)


def fixed_time_decide(plan: PhasePlan, durations: Sequence[float], phase: int) -> float:
    return float(durations[phase])


class FixedTimeController:
    name = "fixed"

    def __init__(self, plan: PhasePlan, durations: Sequence[float]):
        if len(durations) != len(plan.phases):
            raise ConfigError(f"need {len(plan.phases)} fixed durations, got {len(durations)}")
        for ph, d in zip(plan.phases, durations):
            if not ph.sigma_minus <= d <= ph.sigma_plus:
                raise ConfigError(
                    f"fixed duration {d} for phase {ph.index} outside [{ph.sigma_minus}, {ph.sigma_plus}]"
                )
        self.plan = plan
        self.durations = [float(d) for d in durations]

    @classmethod
    def midpoint(cls, plan: PhasePlan) -> "FixedTimeController":
        return cls(plan, [(p.sigma_minus + p.sigma_plus) / 2.0 for p in plan.phases])

    def reset(self):
        pass

    def step(self, env, s):
        return env.step_duration(fixed_time_decide(self.plan, self.durations, env.ctrl.phase))
