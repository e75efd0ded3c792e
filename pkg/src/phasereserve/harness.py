"""Experiment orchestration: run controllers over seeds and collect trip-level reports."""

from __future__ import annotations

import csv
import logging
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Union

from .env import SignalEnv
from .metrics import EvalReport, MetricsReport, TripRow, trip_rows, write_trip_log
from .rl.ppo import PPOAgent
from .scenario import Scenario
from .sim import ConfigError, DemandProfile

log = logging.getLogger(__name__)


class PolicyController:
    """Drives the environment with a trained agent (policy mean unless ``greedy`` is off)."""

    name = "rl"

    def __init__(self, agent: PPOAgent, greedy: bool = True):
        self.agent = agent
        self.greedy = greedy

    def reset(self):
        pass

    def step(self, env, s):
        a, _, _, _ = self.agent.act(s, greedy=self.greedy)
        return env.step(float(a[0]))


class ConstantActionController:
    name = "constant"

    def __init__(self, a: float = 0.0):
        self.a = a

    def reset(self):
        pass

    def step(self, env, s):
        return env.step(self.a)


def run_episode(env: SignalEnv, controller, seed: int) -> List[TripRow]:
    s = env.reset(seed)
    controller.reset()
    while not env.done:
        s, _, _, _ = controller.step(env, s)
    sc = env.scenario
    lengths = {mv: lane.length for lane in sc.lanes for mv in lane.served_movements}
    return trip_rows(env.trips(), lengths, sc.fd.vf, env.time)


def count_reservice_from_events(events) -> Dict[str, int]:
    """Recount re-serviced and checkpoint cycles from the signal event log."""
    slots = {c for _, c, what, _, _ in events if what == "slot"}
    res = {c for _, c, what, _, _ in events if what == "reservice"}
    return {"cycles": len(slots), "reservice_cycles": len(res & slots)}


def write_event_log(events, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "cycle", "event", "phase", "value"])
        for t, c, what, ph, val in events:
            w.writerow([f"{t:g}", c, what, ph, f"{val:g}"])


def run_eval(scenario: Scenario, controller, seeds: Sequence[int],
             demand: Union[None, str, DemandProfile] = None, reservice: bool = True,
             out_dir: Optional[Path] = None, label: str = "") -> EvalReport:
    """Run one episode per seed and aggregate trip-level metrics.

    With ``out_dir`` set, each seed's trip log, signal event log, forecast log
    and transition log are written there.
    """
    env = SignalEnv(scenario, demand, reservice=reservice)
    if getattr(controller, "agent", None) is not None and controller.agent.state_dim != env.state_dim:
        raise ConfigError(
            f"checkpoint state dimension {controller.agent.state_dim} does not match scenario "
            f"{scenario.name} ({env.state_dim})"
        )
    reports, all_rows = [], []
    movements = scenario.movements
    for seed in seeds:
        rows = run_episode(env, controller, seed)
        cnt = count_reservice_from_events(env.ctrl.events)
        rep = MetricsReport.from_rows(rows, scenario.episode_s, movements, cnt["reservice_cycles"],
                                      cnt["cycles"], seed=seed)
        reports.append(rep)
        all_rows.extend(rows)
        if out_dir is not None:
            out_dir = Path(out_dir)
            out_dir.mkdir(parents=True, exist_ok=True)
            write_trip_log(rows, out_dir / f"trips_seed{seed}.csv")
            write_event_log(env.ctrl.events, out_dir / f"signal_events_seed{seed}.csv")
            env.write_transition_log(out_dir / f"transitions_seed{seed}.csv")
            if env.reservice_enabled:
                env.advisor.write_csv(out_dir / f"forecasts_seed{seed}.csv")
        log.info("seed %d: delay %.2f s, stops %.3f, throughput %.0f veh/h, re-service %.1f%%", seed,
                 rep.overall.delay_mean, rep.overall.stops_mean, rep.overall.throughput, rep.reservice_pct)
    tot_c = sum(r.cycles for r in reports)
    tot_r = sum(r.reservice_cycles for r in reports)
    pooled = MetricsReport.from_rows(all_rows, scenario.episode_s, movements, tot_r, tot_c, runs=len(seeds))
    return EvalReport.aggregate(reports, pooled, label)


def parse_seeds(spec: str) -> List[int]:
    """``"0-4"`` -> [0, 1, 2, 3, 4]; ``"1,5,9"`` -> [1, 5, 9]."""
    out: List[int] = []
    for part in str(spec).split(","):
        part = part.strip()
        if not part:
            continue
        if "-" in part:
            lo, hi = part.split("-", 1)
            out.extend(range(int(lo), int(hi) + 1))
        else:
            out.append(int(part))
    return out


def sweep(scenario: Scenario, controller_factory: Callable[[], object], demands: Sequence,
          seeds: Sequence[int], reservice: bool = True, labels: Optional[Sequence[str]] = None) -> List[EvalReport]:
    """Evaluate the same controller over several demand profiles."""
    out = []
    for i, dem in enumerate(demands):
        label = labels[i] if labels else str(dem)
        out.append(run_eval(scenario, controller_factory(), seeds, dem, reservice, label=label))
    return out


def write_sweep_csv(reports: Sequence[EvalReport], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["label", "delay_mean", "delay_std", "stops_mean", "stops_std", "throughput_vph",
                    "reservice_pct"])
        for r in reports:
            o = r.pooled.overall
            w.writerow([r.label, f"{o.delay_mean:.6f}", f"{o.delay_std:.6f}", f"{o.stops_mean:.6f}",
                        f"{o.stops_std:.6f}", f"{o.throughput:.6f}", f"{r.pooled.reservice_pct:.6f}"])
