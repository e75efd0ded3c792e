"""Shock-wave queue forecasting and the re-service trigger/duration rule.

All speeds are returned in m/s; flows and densities come in veh/h and veh/km.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

from .sim import KMH, ConfigError, FundamentalDiagram


class SaturatedArrivals(ValueError):
    """Arrival wave is at least as fast as the discharge wave; the queue has no finite maximum."""


@dataclass(frozen=True)
class WaveSpeeds:
    v1: float  # queue expansion during red
    v2: float  # discharge wave
    v3: float  # queue rear moving to the stop line during green
    v4: float  # residual re-queue


@dataclass(frozen=True)
class ReServiceConfig:
    theta_X: float = 200.0
    zeta: float = 0.7
    sigma_re_minus: float = 10.0
    sigma_re_plus: float = 25.0
    theta_m: float = 250.0

    def __post_init__(self):
        if not (0 < self.theta_X <= self.theta_m):
            raise ConfigError(f"queue threshold must lie in (0, {self.theta_m}], got {self.theta_X}")
        if not (0 < self.zeta <= 1):
            raise ConfigError(f"urgency coefficient must lie in (0, 1], got {self.zeta}")
        if not (0 < self.sigma_re_minus <= self.sigma_re_plus):
            raise ConfigError("re-service bounds must satisfy 0 < min <= max")


def wave_speeds(k_a: float, q_a: float, fd: FundamentalDiagram) -> WaveSpeeds:
    """Wave speeds (m/s) for arrivals at density ``k_a`` and flow ``q_a``.

    At ``k_a == k_m`` the rear-of-queue speed is taken as the free-flow speed,
    its limit along the uncongested branch.
    """
    if k_a >= fd.k_j:
        raise ValueError(f"arrival density {k_a} must be below jam density {fd.k_j}")
    if k_a < 0 or q_a < 0:
        raise ValueError("arrival flow and density must be non-negative")
    v1 = q_a / (fd.k_j - k_a)
    v2 = fd.q_m / (fd.k_j - fd.k_m)
    v3 = fd.vf_kmh if k_a == fd.k_m else abs((fd.q_m - q_a) / (fd.k_m - k_a))
    v4 = -fd.q_m / (fd.k_m - fd.k_j)
    return WaveSpeeds(v1 * KMH, v2 * KMH, v3 * KMH, v4 * KMH)


def estimate_delta_T(history: Sequence[float], fallback: float, window: int = 2) -> float:
    """Running mean of the last ``window`` observed checkpoint-to-green gaps."""
    recent = list(history)[-window:]
    if not recent:
        return fallback
    return sum(recent) / len(recent)


def forecast_max_queue(v1: float, v2: float, delta_T: float, X: float) -> float:
    """Maximum queue (m) reached next cycle if no re-service is inserted.

    The queue rear grows from ``X`` at ``v1`` until the discharge wave, launched
    from the stop line ``delta_T`` seconds later at ``v2``, catches it.
    """
    if v1 >= v2:
        raise SaturatedArrivals(f"v1={v1:.4f} m/s >= v2={v2:.4f} m/s")
    return v1 * ((v2 * delta_T + X) / (v2 - v1)) + X


def reservice_decision(L_max: float, X: float, speeds: WaveSpeeds, cfg: ReServiceConfig) -> float:
    """Re-service green time in seconds; 0 means no re-service."""
    if not L_max > cfg.theta_X:
        return 0.0
    if X >= cfg.theta_X or speeds.v1 >= speeds.v2:
        return cfg.sigma_re_plus
    L_re = speeds.v2 * X / (speeds.v2 - speeds.v1)
    d = cfg.zeta * L_re / speeds.v3
    return min(max(d, cfg.sigma_re_minus), cfg.sigma_re_plus)


@dataclass
class ForecastRecord:
    t: float
    cycle: int
    X: float
    q_a: float
    k_a: float
    L_max: float
    decision_s: float


@dataclass
class ReserviceAdvisor:
    """Per-run wrapper that turns checkpoint measurements into decisions and logs them."""

    fd: FundamentalDiagram
    cfg: ReServiceConfig
    log: List[ForecastRecord] = field(default_factory=list)

    def decide(self, t: float, cycle: int, q_a: float, k_a: float, X: float,
               delta_T_history: Sequence[float], delta_T_fallback: float) -> float:
        # measured density can exceed jam density only through speed noise near zero
        k_a = min(max(k_a, 0.0), self.fd.k_j * (1.0 - 1e-9))
        q_a = min(max(q_a, 0.0), self.fd.q_m)
        X = min(max(X, 0.0), self.cfg.theta_m)
        speeds = wave_speeds(k_a, q_a, self.fd)
        dT = estimate_delta_T(delta_T_history, delta_T_fallback)
        try:
            L_max = forecast_max_queue(speeds.v1, speeds.v2, dT, X)
        except SaturatedArrivals:
            L_max = math.inf
        d = reservice_decision(L_max, X, speeds, self.cfg)
        self.log.append(ForecastRecord(t, cycle, X, q_a, k_a, L_max, d))
        return d

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "cycle", "X", "q_a", "k_a", "L_max", "decision_s"])
            for r in self.log:
                w.writerow([f"{r.t:g}", r.cycle, f"{r.X:.6g}", f"{r.q_a:.6g}", f"{r.k_a:.6g}",
                            f"{r.L_max:.6g}", f"{r.decision_s:.6g}"])
