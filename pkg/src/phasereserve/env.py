"""Semi-Markov signal-control environment.

One ``step`` is one regular phase: the normalised action picks its green
time, the simulator runs through green and yellow, and if that brings the
controller to the re-service checkpoint the shock-wave rule may insert a
re-service phase before control returns. The sojourn time ``j`` covers all of
it.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Tuple, Union

import numpy as np

from .scenario import Scenario
from .shockwave import ReserviceAdvisor
from .signal import AT_SLOT, Phase, SignalController
from .sim import DemandProfile, Simulator, Vehicle

log = logging.getLogger(__name__)


def map_action(a: float, phase: Phase) -> float:
    """Affine map of a normalised action in [-1, 1] onto the phase's green bounds."""
    a = min(max(float(a), -1.0), 1.0)
    return phase.sigma_minus + (a + 1.0) * (phase.sigma_plus - phase.sigma_minus) / 2.0


def unmap_action(d: float, phase: Phase) -> float:
    span = phase.sigma_plus - phase.sigma_minus
    if span == 0:
        return 0.0
    return 2.0 * (d - phase.sigma_minus) / span - 1.0


def compute_reward(queues, theta_m: float = 250.0) -> float:
    """Negative sum of lane queue lengths normalised by the detection range."""
    return -float(np.sum(queues)) / theta_m


@dataclass
class Transition:
    s: np.ndarray
    a: float
    r: float
    s_next: np.ndarray
    j: float
    done: bool = False


class SignalEnv:
    """Environment facade over the simulator, signal controller and re-service rule.

    Args:
        scenario: intersection definition.
        demand: demand profile (object, path or bundled name); scenario default if omitted.
        reservice: enable the shock-wave re-service hook.
        seed: arrival-stream seed used by ``reset`` when none is given.
    """

    def __init__(self, scenario: Scenario, demand: Union[None, str, DemandProfile] = None,
                 reservice: bool = True, seed: int = 0):
        self.scenario = scenario
        self.demand = scenario.demand(demand)
        self.reservice_enabled = reservice and scenario.plan.reservice is not None
        self.sim = Simulator(scenario.fd, scenario.lanes, dt=scenario.dt, theta_m=scenario.theta_m,
                             detector_distance=scenario.detector_m, seed=seed)
        self.ctrl = SignalController(scenario.plan, dt=scenario.dt)
        self._lane_caps = scenario.theta_m * scenario.fd.k_j / 1000.0
        self.seed = seed
        self.reset(seed)

    @property
    def state_dim(self) -> int:
        return self.scenario.state_dim

    @property
    def time(self) -> float:
        return self.sim.time

    @property
    def done(self) -> bool:
        return self.sim.time >= self.scenario.episode_s - 1e-9

    @property
    def current_phase(self) -> Phase:
        return self.ctrl.current_phase

    def reset(self, seed: Optional[int] = None) -> np.ndarray:
        if seed is not None:
            self.seed = seed
        self.sim.reset(self.seed)
        self.ctrl.reset()
        self.advisor = ReserviceAdvisor(self.scenario.fd, self.scenario.reservice)
        self.decisions = 0
        self.transition_log: List[Tuple] = []
        self._last_re_check: Optional[float] = None
        return self.observe()

    # ------------------------------------------------------------ observation
    def queues(self) -> np.ndarray:
        return np.array([self.sim.measure_queue(i) for i in range(len(self.sim.lanes))])

    def observe(self) -> np.ndarray:
        plan = self.scenario.plan
        n_ph = len(plan)
        out = np.empty(self.state_dim)
        for i, lane in enumerate(self.sim.lanes):
            stopped, moving = self.sim.lane_counts(i)
            out[3 * i] = min(stopped / self._lane_caps, 1.0)
            out[3 * i + 1] = min(moving / self._lane_caps, 1.0)
            out[3 * i + 2] = plan.phases_until_service(lane.served_movements, self.ctrl.phase) / n_ph
        return out

    # ------------------------------------------------------------------ steps
    def step(self, a: float) -> Tuple[np.ndarray, float, float, Dict]:
        """Run one regular phase chosen by normalised action ``a``."""
        phase = self.current_phase
        return self._transition(map_action(a, phase), a)

    def step_duration(self, d: float) -> Tuple[np.ndarray, float, float, Dict]:
        """Run one regular phase with an explicit green time in seconds."""
        return self._transition(d, unmap_action(d, self.current_phase))

    def step_switching(self, decide: Callable[["SignalEnv"], bool]) -> Tuple[np.ndarray, float, float, Dict]:
        """Run one regular phase, asking ``decide(env)`` once per green second whether to switch.

        The phase is started at its maximum green, which stays a hard cutoff.
        """
        phase = self.current_phase
        return self._transition(phase.sigma_plus, float("nan"), decide)

    def _transition(self, d, a, switch=None):
        if self.done:
            return self.observe(), 0.0, 0.0, {"done": True, "terminal": True}
        T0 = self.sim.time
        phase_idx = self.ctrl.phase
        green = self.ctrl.apply_duration(d)
        per_second = max(1, int(round(1.0 / self.sim.dt)))
        while not self.ctrl.idle and not self.done:
            self._tick()
            if (switch is not None and self.ctrl.kind == "regular"
                    and self.ctrl._elapsed % per_second == 0 and switch(self)):
                self.ctrl.end_green()
        if switch is not None:
            green = (self.sim.time - T0) - self.scenario.plan.yellow_s
        re_s = 0.0
        if self.ctrl.waiting == AT_SLOT and not self.done:
            re_s = self._checkpoint()
        r = compute_reward(self.queues(), self.scenario.theta_m)
        j = self.sim.time - T0
        s_next = self.observe()
        info = {
            "phase": phase_idx, "duration": green, "reservice_s": re_s, "cycle": self.ctrl.cycle,
            "T": self.sim.time, "done": self.done,
        }
        self.transition_log.append((self.decisions, self.sim.time, a, green, r, j, re_s))
        self.decisions += 1
        return s_next, r, j, info

    def _checkpoint(self) -> float:
        if not self.reservice_enabled:
            self.ctrl.skip_reservice()
            return 0.0
        T = self.sim.time
        window = T - self._last_re_check if self._last_re_check is not None else T
        self._last_re_check = T
        prot = self.scenario.protected_movement
        q_a, k_a = self.sim.measure_arrivals(prot, max(window, self.sim.dt))
        X = self.sim.measure_queue(self.sim.lane_of_movement(prot))
        d = self.advisor.decide(T, self.ctrl.cycle, q_a, k_a, X, self.ctrl.delta_T,
                                self.scenario.plan.delta_t_lower_bound())
        if d <= 0:
            self.ctrl.skip_reservice()
            return 0.0
        executed = self.ctrl.insert_reservice(d)
        while not self.ctrl.idle and not self.done:
            self._tick()
        return executed

    def _tick(self):
        sim = self.sim
        sim.inject_demand(self.demand)
        sim.step([self.ctrl.signal_state(l.served_movements) for l in sim.lanes])
        self.ctrl.tick()

    # ---------------------------------------------------------------- outputs
    def trips(self, include_open: bool = True) -> List[Vehicle]:
        out = list(self.sim.trips)
        if include_open:
            out.extend(self.sim.open_trips())
        return out

    def reservice_share(self) -> float:
        return self.ctrl.reservice_share()

    def write_transition_log(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "T", "a", "a_mapped", "r", "j", "reservice_s"])
            for t, T, a, am, r, j, re_s in self.transition_log:
                w.writerow([t, f"{T:g}", f"{a:.9g}", f"{am:g}", f"{r:.9g}", f"{j:g}", f"{re_s:g}"])
