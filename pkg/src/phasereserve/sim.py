"""Mesoscopic single-intersection simulator on a triangular fundamental diagram.

Vehicles follow Newell's simplified car-following rule: a follower travels at
free-flow speed unless that would bring it closer than one jam spacing to where
its leader was one wave-lag earlier. The lag is ``jam_spacing / w`` with ``w``
the backward wave speed, so the lane macroscopically reproduces the triangular
diagram ``(k_m, k_j, q_m)`` it is parameterised with.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from . import _kernels

GREEN, YELLOW, RED = "G", "Y", "R"

KMH = 1.0 / 3.6  # km/h -> m/s


class ConfigError(ValueError):
    """Invalid scenario, demand or controller configuration."""


@dataclass(frozen=True)
class FundamentalDiagram:
    """Triangular flow-density relation (densities in veh/km, flow in veh/h)."""

    k_j: float = 133.3
    k_m: float = 50.0
    q_m: float = 1550.0

    def __post_init__(self):
        if not (0.0 < self.k_m < self.k_j):
            raise ConfigError(f"need 0 < k_m < k_j, got k_m={self.k_m}, k_j={self.k_j}")
        if self.q_m <= 0.0:
            raise ConfigError(f"saturation flow must be positive, got {self.q_m}")

    @property
    def vf_kmh(self) -> float:
        return self.q_m / self.k_m

    @property
    def w_kmh(self) -> float:
        return self.q_m / (self.k_j - self.k_m)

    @property
    def vf(self) -> float:
        """Free-flow speed in m/s."""
        return self.vf_kmh * KMH

    @property
    def w(self) -> float:
        """Backward (congested) wave speed in m/s."""
        return self.w_kmh * KMH

    @property
    def jam_spacing(self) -> float:
        """Metres per vehicle in a standing queue."""
        return 1000.0 / self.k_j

    @property
    def wave_lag(self) -> float:
        """Newell reaction lag in seconds."""
        return self.jam_spacing / self.w


@dataclass
class DemandProfile:
    """Piecewise-constant arrival flows per movement.

    ``segments[movement]`` is a list of ``(start_s, end_s, flow_vph)`` tuples
    that must tile ``[0, horizon]`` without gaps.
    """

    segments: Dict[str, List[Tuple[float, float, float]]]
    horizon: float = 3600.0

    def __post_init__(self):
        for mv, segs in self.segments.items():
            segs.sort(key=lambda s: s[0])
            t = 0.0
            for start, end, flow in segs:
                if not math.isclose(start, t, abs_tol=1e-9):
                    raise ConfigError(f"demand for {mv}: segment starts at {start}, expected {t}")
                if end <= start:
                    raise ConfigError(f"demand for {mv}: empty segment [{start}, {end})")
                if flow < 0:
                    raise ConfigError(f"demand for {mv}: negative flow {flow}")
                t = end
            if not math.isclose(t, self.horizon, abs_tol=1e-9):
                raise ConfigError(f"demand for {mv} covers [0, {t}], expected [0, {self.horizon}]")

    @property
    def movements(self) -> List[str]:
        return list(self.segments)

    def flow(self, movement: str, t: float) -> float:
        for start, end, q in self.segments.get(movement, ()):
            if start <= t < end:
                return q
        return 0.0

    def total_vehicles(self, movement: Optional[str] = None) -> float:
        """Expected number of arrivals over the horizon."""
        mvs = [movement] if movement else self.movements
        return sum((e - s) * q / 3600.0 for mv in mvs for s, e, q in self.segments[mv])

    def scaled(self, factors: Dict[str, float]) -> "DemandProfile":
        segs = {
            mv: [(s, e, q * factors.get(mv, 1.0)) for s, e, q in v] for mv, v in self.segments.items()
        }
        return DemandProfile(segs, self.horizon)

    @classmethod
    def constant(cls, flows: Dict[str, float], horizon: float = 3600.0) -> "DemandProfile":
        return cls({mv: [(0.0, horizon, float(q))] for mv, q in flows.items()}, horizon)

    @classmethod
    def from_csv(cls, path, horizon: Optional[float] = None) -> "DemandProfile":
        segs: Dict[str, List[Tuple[float, float, float]]] = {}
        path = Path(path)
        try:
            with open(path, newline="") as fh:
                reader = csv.DictReader(fh)
                missing = {"movement", "start_s", "end_s", "flow_vph"} - set(reader.fieldnames or ())
                if missing:
                    raise ConfigError(f"{path}: missing columns {sorted(missing)}")
                for lineno, row in enumerate(reader, start=2):
                    try:
                        seg = (float(row["start_s"]), float(row["end_s"]), float(row["flow_vph"]))
                    except ValueError as exc:
                        raise ConfigError(f"{path}:{lineno}: {exc}") from None
                    segs.setdefault(row["movement"].strip(), []).append(seg)
        except OSError as exc:
            raise ConfigError(f"cannot read demand file {path}: {exc}") from None
        if not segs:
            raise ConfigError(f"{path}: no demand rows")
        if horizon is None:
            horizon = max(e for v in segs.values() for _, e, _ in v)
        try:
            return cls(segs, horizon)
        except ConfigError as exc:
            raise ConfigError(f"{path}: {exc}") from None

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["movement", "start_s", "end_s", "flow_vph"])
            for mv, segs in self.segments.items():
                for s, e, q in segs:
                    w.writerow([mv, f"{s:g}", f"{e:g}", f"{q:g}"])


@dataclass
class Vehicle:
    """Per-trip record; a snapshot, not the live simulation state."""

    id: int
    movement: str
    position: float
    speed: float
    entry_time: float
    exit_time: Optional[float] = None
    stop_count: int = 0
    stopped_flag: bool = False
    buffer_wait: float = 0.0


@dataclass
class LaneSpec:
    id: str
    length: float
    served_movements: Tuple[str, ...]


class Lane:
    """One incoming lane, vehicles stored as parallel arrays front to back."""

    def __init__(self, spec: LaneSpec, hist_len: int, capacity: int = 64):
        self.id = spec.id
        self.length = float(spec.length)
        self.served_movements = tuple(spec.served_movements)
        self.n = 0
        self._hist_len = hist_len
        self._alloc(capacity)
        self.buffer: List[Tuple[int, int, float]] = []  # (vid, movement idx, arrival time)

    def _alloc(self, cap):
        self.pos = np.zeros(cap)
        self.spd = np.zeros(cap)
        self.hist = np.zeros((cap, self._hist_len))
        self.stopped = np.zeros(cap, dtype=np.bool_)
        self.stops = np.zeros(cap, dtype=np.int64)
        self.vid = np.zeros(cap, dtype=np.int64)
        self.mov = np.zeros(cap, dtype=np.int64)
        self.entry = np.zeros(cap)
        self.wait = np.zeros(cap)
        self.exited = np.zeros(cap, dtype=np.bool_)
        self.crossed = np.zeros(cap, dtype=np.bool_)
        self.exit_frac = np.zeros(cap)
        self.detected = np.zeros(cap, dtype=np.bool_)

    _ARRAYS = ("pos", "spd", "hist", "stopped", "stops", "vid", "mov", "entry", "wait",
               "exited", "crossed", "exit_frac", "detected")

    def _grow(self):
        cap = 2 * self.pos.shape[0]
        for name in self._ARRAYS:
            old = getattr(self, name)
            new = np.zeros((cap,) + old.shape[1:], dtype=old.dtype)
            new[: self.n] = old[: self.n]
            setattr(self, name, new)

    def append(self, vid, mov, t, vf, dt, wait):
        if self.n == self.pos.shape[0]:
            self._grow()
        i = self.n
        self.pos[i] = self.length
        self.spd[i] = vf
        self.hist[i] = self.length + vf * dt * np.arange(self._hist_len)
        self.stopped[i] = False
        self.stops[i] = 1 if wait > 0 else 0
        self.vid[i] = vid
        self.mov[i] = mov
        self.entry[i] = t - wait
        self.wait[i] = wait
        self.exited[i] = False
        self.n += 1

    def drop_front(self, k):
        if k <= 0:
            return
        m = self.n - k
        for name in self._ARRAYS:
            arr = getattr(self, name)
            arr[:m] = arr[k : self.n]
        self.n = m

    @property
    def inbound(self) -> np.ndarray:
        return np.flatnonzero(self.pos[: self.n] >= 0.0)

    def last_position(self) -> Optional[float]:
        return float(self.pos[self.n - 1]) if self.n else None


class Simulator:
    """Deterministic discrete-time simulator of one signalised intersection.

    Args:
        fd: fundamental diagram shared by all lanes.
        lanes: lane geometry; every movement must be served by at least one lane.
        dt: simulation step in seconds; must not exceed the Newell wave lag.
        theta_m: detection range in metres (queue and state measurements are clipped to it).
        detector_distance: upstream distance of the arrival-counting detector.
        seed: seed for the Poisson arrival stream.
    """

    STOP_ENTER = 0.1
    STOP_LEAVE = 1.0

    def __init__(self, fd: FundamentalDiagram, lanes: Sequence[LaneSpec], dt: float = 0.5,
                 theta_m: float = 250.0, detector_distance: float = 300.0, seed: int = 0,
                 ghost_distance: float = 60.0):
        if dt <= 0:
            raise ConfigError("dt must be positive")
        if dt > fd.wave_lag + 1e-12:
            raise ConfigError(f"dt={dt} exceeds the car-following lag {fd.wave_lag:.3f} s")
        self.fd = fd
        self.dt = float(dt)
        self.theta_m = float(theta_m)
        self.detector_distance = float(detector_distance)
        self.ghost_distance = ghost_distance
        self.vf = fd.vf
        self.jam = fd.jam_spacing
        self.entry_gap = 1000.0 / fd.k_m
        back = (fd.wave_lag - self.dt) / self.dt
        self.lag_k = int(math.floor(back + 1e-12))
        self.lag_f = back - self.lag_k
        if self.lag_f < 1e-12:
            self.lag_f = 0.0
        self.hist_len = self.lag_k + 2

        self.lane_specs = list(lanes)
        for spec in self.lane_specs:
            if spec.length <= detector_distance:
                raise ConfigError(f"lane {spec.id} is shorter than the detector distance")
        self.movements: List[str] = []
        for spec in self.lane_specs:
            for mv in spec.served_movements:
                if mv not in self.movements:
                    self.movements.append(mv)
        self.movement_index = {mv: i for i, mv in enumerate(self.movements)}
        self._mv_lanes = [
            [li for li, s in enumerate(self.lane_specs) if mv in s.served_movements] for mv in self.movements
        ]
        self.seed = seed
        self.reset(seed)

    # ------------------------------------------------------------------ state
    def reset(self, seed: Optional[int] = None):
        if seed is not None:
            self.seed = seed
        self.rng = np.random.default_rng(self.seed)
        self.time = 0.0
        self.step_count = 0
        self.lanes = [Lane(s, self.hist_len) for s in self.lane_specs]
        self.next_vid = 0
        self.arrived = 0
        self.injected = 0
        self.exited = 0
        self.trips: List[Vehicle] = []
        self.detections: List[List[Tuple[float, float]]] = [[] for _ in self.movements]
        self._rate_cache = None

    @property
    def inbound_count(self) -> int:
        return sum(int(l.inbound.size) for l in self.lanes)

    @property
    def buffered_count(self) -> int:
        return sum(len(l.buffer) for l in self.lanes)

    # ---------------------------------------------------------------- demand
    def inject_demand(self, profile: DemandProfile, t: Optional[float] = None, rng=None) -> List[int]:
        """Draw Poisson arrivals for ``[t, t+dt)`` and admit buffered vehicles.

        Returns the ids of vehicles that entered a lane during this call.
        """
        t = self.time if t is None else t
        rng = self.rng if rng is None else rng
        counts = rng.poisson(self._arrival_rates(profile, t))
        for mi, k in enumerate(counts):
            for _ in range(int(k)):
                lane = self._pick_lane(mi)
                lane.buffer.append((self.next_vid, mi, t))
                self.next_vid += 1
                self.arrived += 1
        entered = []
        for lane in self.lanes:
            if not lane.buffer:
                continue
            last = lane.last_position()
            if last is None or lane.length - last >= self.entry_gap - 1e-9:
                vid, mi, t_arr = lane.buffer.pop(0)
                lane.append(vid, mi, t, self.vf, self.dt, wait=t - t_arr)
                self.injected += 1
                entered.append(vid)
        return entered

    def _arrival_rates(self, profile: DemandProfile, t: float) -> np.ndarray:
        # piecewise-constant demand: recompute only when t leaves the cached interval
        c = self._rate_cache
        if c is not None and c[0] is profile and c[1] <= t < c[2]:
            return c[3]
        lam = np.array([profile.flow(mv, t) * self.dt / 3600.0 for mv in self.movements])
        lo, hi = 0.0, math.inf
        for mv in self.movements:
            for s, e, _ in profile.segments.get(mv, ()):
                if s <= t < e:
                    lo, hi = max(lo, s), min(hi, e)
                elif e <= t:
                    lo = max(lo, e)
                elif s > t:
                    hi = min(hi, s)
        self._rate_cache = (profile, lo, hi, lam)
        return lam

    def _pick_lane(self, mi) -> Lane:
        cands = self._mv_lanes[mi]
        if len(cands) == 1:
            return self.lanes[cands[0]]
        return min((self.lanes[i] for i in cands), key=lambda l: l.inbound.size + len(l.buffer))

    # ------------------------------------------------------------------ step
    def step(self, signal_state: Sequence[str]) -> None:
        """Advance all lanes by one ``dt`` under per-lane signal indications."""
        if len(signal_state) != len(self.lanes):
            raise ValueError("signal_state must cover every lane")
        t0 = self.time
        dt = self.dt
        for lane, sig in zip(self.lanes, signal_state):
            n = lane.n
            if n == 0:
                continue
            n_cross, n_det, n_ghost = _kernels.newell_advance(
                lane.pos, lane.spd, lane.hist, lane.stopped, lane.stops, n, dt, self.vf, self.jam,
                self.lag_k, self.lag_f, sig == GREEN, self.STOP_ENTER, self.STOP_LEAVE,
                lane.crossed, lane.exit_frac, self.detector_distance, lane.detected, self.ghost_distance,
            )
            if n_det:
                for i in np.flatnonzero(lane.detected[:n]):
                    self.detections[lane.mov[i]].append((t0 + dt, float(lane.spd[i])))
            if n_cross:
                for i in np.flatnonzero(lane.crossed[:n]):
                    exit_t = t0 + dt * float(lane.exit_frac[i])
                    lane.exited[i] = True
                    self.exited += 1
                    self.trips.append(
                        Vehicle(int(lane.vid[i]), self.movements[lane.mov[i]], float(lane.pos[i]),
                                float(lane.spd[i]), float(lane.entry[i]), exit_t, int(lane.stops[i]),
                                False, float(lane.wait[i]))
                    )
            if n_ghost:
                lane.drop_front(n_ghost)
        self.step_count += 1
        self.time = self.step_count * dt

    # ---------------------------------------------------------- measurements
    def measure_queue(self, lane_index: int) -> float:
        lane = self.lanes[lane_index]
        return float(_kernels.queue_length(lane.pos, lane.stopped, lane.n, self.jam, self.theta_m))

    def lane_counts(self, lane_index: int) -> Tuple[int, int]:
        """(stopped, moving) inbound vehicles within the detection range."""
        lane = self.lanes[lane_index]
        p = lane.pos[: lane.n]
        near = (p >= 0.0) & (p <= self.theta_m)
        stopped = int(np.count_nonzero(near & lane.stopped[: lane.n]))
        return stopped, int(np.count_nonzero(near)) - stopped

    def measure_arrivals(self, movement: str, window: float, now: Optional[float] = None) -> Tuple[float, float]:
        """Flow (veh/h) and density (veh/km) of vehicles passing the upstream detector.

        Counts detector crossings in ``(now - window, now]``; density is flow over
        the mean speed of the counted vehicles. Returns ``(0, 0)`` with no counts.
        """
        if window <= 0:
            raise ValueError("window must be positive")
        now = self.time if now is None else now
        hits = [v for t, v in self.detections[self.movement_index[movement]] if now - window < t <= now]
        if not hits:
            return 0.0, 0.0
        q_a = len(hits) * 3600.0 / window
        mean_v = sum(hits) / len(hits) / KMH
        if mean_v <= 0.0:
            return q_a, self.fd.k_j
        return q_a, q_a / mean_v

    # ---------------------------------------------------------------- trips
    def vehicles(self, lane_index: int) -> List[Vehicle]:
        """Snapshot of the inbound vehicles on a lane, nearest the stop line first."""
        lane = self.lanes[lane_index]
        out = []
        for i in lane.inbound:
            out.append(Vehicle(int(lane.vid[i]), self.movements[lane.mov[i]], float(lane.pos[i]),
                               float(lane.spd[i]), float(lane.entry[i]), None, int(lane.stops[i]),
                               bool(lane.stopped[i]), float(lane.wait[i])))
        return out

    def open_trips(self) -> List[Vehicle]:
        """Vehicles still in the network or waiting to enter it."""
        out = []
        for li, lane in enumerate(self.lanes):
            out.extend(self.vehicles(li))
            for vid, mi, t_arr in lane.buffer:
                out.append(Vehicle(vid, self.movements[mi], lane.length, 0.0, t_arr, None, 1, True,
                                   self.time - t_arr))
        return out

    def free_flow_time(self, lane_length: float) -> float:
        return lane_length / self.vf

    def lane_of_movement(self, movement: str) -> int:
        return self._mv_lanes[self.movement_index[movement]][0]

    def add_vehicle(self, lane_index: int, position: float, movement: Optional[str] = None,
                    stopped: bool = False) -> int:
        """Place a vehicle directly (scripted scenarios and tests).

        Vehicles must be added front to back. A stopped vehicle gets a history
        of standing still; a moving one is extrapolated at free-flow speed.
        """
        lane = self.lanes[lane_index]
        mv = movement or lane.served_movements[0]
        lane.append(self.next_vid, self.movement_index[mv], self.time, self.vf, self.dt, wait=0.0)
        i = lane.n - 1
        lane.pos[i] = position
        if stopped:
            lane.spd[i] = 0.0
            lane.hist[i] = position
            lane.stopped[i] = True
        else:
            lane.hist[i] = position + self.vf * self.dt * np.arange(self.hist_len)
        vid = self.next_vid
        self.next_vid += 1
        self.arrived += 1
        self.injected += 1
        return vid
