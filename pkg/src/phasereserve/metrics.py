"""Trip-level metrics: delay, stops, throughput, re-service share, and comparisons."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np

from .sim import Vehicle


@dataclass
class TripRow:
    vehicle_id: int
    movement: str
    entry_s: float
    exit_s: Optional[float]
    delay_s: float
    stops: int

    @property
    def completed(self) -> bool:
        return self.exit_s is not None


def compute_delay(v: Vehicle, lane_length: float, vf: float, now: Optional[float] = None) -> float:
    """Travel time in excess of free flow over the approach, never negative.

    For an unfinished trip the delay accrued up to ``now`` is returned. Time
    spent waiting to enter a blocked lane is included because ``entry_time`` is
    the arrival time.
    """
    if v.exit_time is not None:
        d = (v.exit_time - v.entry_time) - lane_length / vf
    else:
        if now is None:
            raise ValueError("unfinished trip needs the current time")
        travelled = max(lane_length - max(v.position, 0.0), 0.0)
        d = (now - v.entry_time) - travelled / vf
    return max(d, 0.0)


def trip_rows(vehicles: Iterable[Vehicle], lane_length: Dict[str, float], vf: float, now: float) -> List[TripRow]:
    rows = []
    for v in vehicles:
        rows.append(TripRow(v.id, v.movement, v.entry_time, v.exit_time,
                            compute_delay(v, lane_length[v.movement], vf, now), v.stop_count))
    rows.sort(key=lambda r: r.vehicle_id)
    return rows


def write_trip_log(rows: Sequence[TripRow], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["vehicle_id", "movement", "entry_s", "exit_s", "delay_s", "stops"])
        for r in rows:
            w.writerow([r.vehicle_id, r.movement, repr(r.entry_s),
                        "" if r.exit_s is None else repr(r.exit_s), repr(r.delay_s), r.stops])


def read_trip_log(path) -> List[TripRow]:
    rows = []
    with open(path, newline="") as fh:
        for d in csv.DictReader(fh):
            rows.append(TripRow(int(d["vehicle_id"]), d["movement"], float(d["entry_s"]),
                                float(d["exit_s"]) if d["exit_s"] else None, float(d["delay_s"]),
                                int(d["stops"])))
    return rows


@dataclass
class MovementStats:
    delay_mean: float = 0.0
    delay_std: float = 0.0
    stops_mean: float = 0.0
    stops_std: float = 0.0
    throughput: float = 0.0
    completed: int = 0
    arrived: int = 0

    @classmethod
    def from_rows(cls, rows: Sequence[TripRow], horizon_s: float, runs: int = 1) -> "MovementStats":
        done = [r for r in rows if r.completed]
        if not done:
            return cls(arrived=len(rows))
        d = np.array([r.delay_s for r in done])
        s = np.array([r.stops for r in done], dtype=float)
        return cls(float(d.mean()), float(d.std()), float(s.mean()), float(s.std()),
                   len(done) * 3600.0 / horizon_s / runs, len(done), len(rows))


@dataclass
class MetricsReport:
    overall: MovementStats
    per_movement: Dict[str, MovementStats]
    reservice_pct: float = 0.0
    cycles: int = 0
    reservice_cycles: int = 0
    seed: Optional[int] = None

    @classmethod
    def from_rows(cls, rows: Sequence[TripRow], horizon_s: float, movements: Sequence[str],
                  reservice_cycles: int = 0, cycles: int = 0, seed=None, runs: int = 1) -> "MetricsReport":
        per = {mv: MovementStats.from_rows([r for r in rows if r.movement == mv], horizon_s, runs)
               for mv in movements}
        pct = 100.0 * reservice_cycles / cycles if cycles else 0.0
        return cls(MovementStats.from_rows(rows, horizon_s, runs), per, pct, cycles, reservice_cycles, seed)

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "overall": asdict(self.overall),
            "per_movement": {k: asdict(v) for k, v in self.per_movement.items()},
            "reservice_pct": self.reservice_pct,
            "cycles": self.cycles,
            "reservice_cycles": self.reservice_cycles,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MetricsReport":
        return cls(MovementStats(**d["overall"]),
                   {k: MovementStats(**v) for k, v in d["per_movement"].items()},
                   d.get("reservice_pct", 0.0), d.get("cycles", 0), d.get("reservice_cycles", 0), d.get("seed"))


@dataclass
class EvalReport:
    """Per-seed reports, the pooled report over all trips, and across-seed spread."""

    per_seed: List[MetricsReport]
    pooled: MetricsReport
    across_seeds: Dict[str, Dict[str, float]] = field(default_factory=dict)
    label: str = ""

    @classmethod
    def aggregate(cls, reports: List[MetricsReport], pooled: MetricsReport, label: str = "") -> "EvalReport":
        across = {}
        for key in ("delay_mean", "delay_std", "stops_mean", "stops_std", "throughput"):
            vals = np.array([getattr(r.overall, key) for r in reports])
            across[key] = {"mean": float(vals.mean()), "std": float(vals.std())}
        vals = np.array([r.reservice_pct for r in reports])
        across["reservice_pct"] = {"mean": float(vals.mean()), "std": float(vals.std())}
        return cls(reports, pooled, across, label)

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "pooled": self.pooled.to_dict(),
            "across_seeds": self.across_seeds,
            "per_seed": [r.to_dict() for r in self.per_seed],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        return cls([MetricsReport.from_dict(x) for x in d["per_seed"]], MetricsReport.from_dict(d["pooled"]),
                   d.get("across_seeds", {}), d.get("label", ""))

    def write_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)

    @classmethod
    def read_json(cls, path) -> "EvalReport":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["seed", "movement", "delay_mean", "delay_std", "stops_mean", "stops_std",
                        "throughput_vph", "completed", "arrived", "reservice_pct"])
            for rep, tag in [(r, r.seed) for r in self.per_seed] + [(self.pooled, "pooled")]:
                for mv, st in [("ALL", rep.overall)] + sorted(rep.per_movement.items()):
                    w.writerow([tag, mv, f"{st.delay_mean:.6f}", f"{st.delay_std:.6f}", f"{st.stops_mean:.6f}",
                                f"{st.stops_std:.6f}", f"{st.throughput:.6f}", st.completed, st.arrived,
                                f"{rep.reservice_pct:.6f}"])


LOWER_IS_BETTER = ("delay_mean", "delay_std", "stops_mean", "stops_std")
HIGHER_IS_BETTER = ("throughput",)


def _pct(candidate: float, reference: float, lower_better: bool) -> float:
    if reference == 0:
        return 0.0 if candidate == reference else (-math.inf if lower_better else math.inf)
    if lower_better:
        return 100.0 * (reference - candidate) / reference
    return 100.0 * (candidate - reference) / reference


def compare_stats(candidate: MovementStats, reference: MovementStats) -> Dict[str, float]:
    out = {k: _pct(getattr(candidate, k), getattr(reference, k), True) for k in LOWER_IS_BETTER}
    out.update({k: _pct(getattr(candidate, k), getattr(reference, k), False) for k in HIGHER_IS_BETTER})
    return out


def compare(candidate: MetricsReport, reference: MetricsReport) -> Dict[str, Dict[str, float]]:
    """Percentage improvement of ``candidate`` over ``reference``; positive means better."""
    table = {"ALL": compare_stats(candidate.overall, reference.overall)}
    for mv in candidate.per_movement:
        if mv in reference.per_movement:
            table[mv] = compare_stats(candidate.per_movement[mv], reference.per_movement[mv])
    return table


def write_comparison_csv(table: Dict[str, Dict[str, float]], path) -> None:
    keys = list(LOWER_IS_BETTER + HIGHER_IS_BETTER)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["movement"] + [f"{k}_improvement_pct" for k in keys])
        for mv, row in table.items():
            w.writerow([mv] + [f"{row[k]:.4f}" for k in keys])
