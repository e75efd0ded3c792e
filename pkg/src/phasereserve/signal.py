"""Phase sequencing with min/max green, yellow transitions and re-service insertion."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import FrozenSet, Iterable, List, Optional, Sequence, Set, Tuple

from .sim import GREEN, RED, YELLOW, ConfigError

log = logging.getLogger(__name__)

REGULAR = "regular"
YELLOW_KIND = "yellow"
RESERVICE = "reservice"

AT_DECISION = "decision"
AT_SLOT = "slot"


@dataclass(frozen=True)
class Phase:
    index: int
    served_movements: FrozenSet[str]
    sigma_minus: float
    sigma_plus: float

    def __post_init__(self):
        if not (0 < self.sigma_minus <= self.sigma_plus):
            raise ConfigError(
                f"phase {self.index}: need 0 < min green <= max green, got [{self.sigma_minus}, {self.sigma_plus}]"
            )


@dataclass(frozen=True)
class ReservicePlan:
    """The single configured re-service: ``protected_movement`` is served again
    right before regular phase ``slot_index``; ``movements`` may add compatible
    movements that run alongside it."""

    protected_movement: str
    slot_index: int
    sigma_re_minus: float
    sigma_re_plus: float
    movements: FrozenSet[str] = frozenset()

    def __post_init__(self):
        if not (0 < self.sigma_re_minus <= self.sigma_re_plus):
            raise ConfigError(
                f"re-service bounds must satisfy 0 < min <= max, got [{self.sigma_re_minus}, {self.sigma_re_plus}]"
            )

    @property
    def green_movements(self) -> FrozenSet[str]:
        return frozenset({self.protected_movement}) | self.movements


@dataclass
class PhasePlan:
    phases: List[Phase]
    yellow_s: float = 5.0
    reservice: Optional[ReservicePlan] = None
    conflicts: Set[FrozenSet[str]] = field(default_factory=set)

    def __post_init__(self):
        if not self.phases:
            raise ConfigError("phase plan is empty")
        if self.yellow_s < 0:
            raise ConfigError("yellow time must be non-negative")
        greens = [p.served_movements for p in self.phases]
        if self.reservice is not None:
            rs = self.reservice
            if not 0 <= rs.slot_index < len(self.phases):
                raise ConfigError(f"re-service slot {rs.slot_index} is not a valid phase index")
            owners = [p.index for p in self.phases if rs.protected_movement in p.served_movements]
            if len(owners) != 1:
                raise ConfigError(
                    f"protected movement {rs.protected_movement} must be served by exactly one phase, found {owners}"
                )
            greens.append(rs.green_movements)
        for g in greens:
            for pair in self.conflicts:
                if pair <= g:
                    a, b = sorted(pair)
                    raise ConfigError(f"conflicting movements {a} and {b} share a green")

    def __len__(self):
        return len(self.phases)

    @property
    def movements(self) -> Set[str]:
        out = set()
        for p in self.phases:
            out |= p.served_movements
        return out

    @property
    def protected_phase(self) -> Optional[int]:
        if self.reservice is None:
            return None
        for p in self.phases:
            if self.reservice.protected_movement in p.served_movements:
                return p.index
        return None

    def phases_until_service(self, movements: Iterable[str], current: int) -> int:
        """Number of phases, counted from ``current``, before ``movements`` get green."""
        mv = set(movements)
        n = len(self.phases)
        for k in range(n):
            if self.phases[(current + k) % n].served_movements & mv:
                return k
        return n

    def delta_t_lower_bound(self) -> float:
        """Shortest possible time from the re-service checkpoint to the next protected green."""
        if self.reservice is None:
            return 0.0
        n = len(self.phases)
        k = self.reservice.slot_index
        total = 0.0
        while k != self.protected_phase:
            total += self.phases[k].sigma_minus + self.yellow_s
            k = (k + 1) % n
        return total


def _steps(d: float, dt: float) -> int:
    return max(1, int(math.floor(d / dt + 0.5)))


class SignalController:
    """State machine driving the phase sequence in whole simulation steps.

    The controller idles at *decision points* (start of a regular phase) until
    ``apply_duration`` is called, and at the *re-service checkpoint* (the
    instant the yellow before the slot phase ends) until ``insert_reservice``
    or ``skip_reservice`` is called. ``tick`` advances one step.
    """

    def __init__(self, plan: PhasePlan, dt: float = 0.5):
        self.plan = plan
        self.dt = dt
        self.reset()

    def reset(self):
        self.cycle = 0
        self.phase = 0
        self.kind: Optional[str] = None
        self.waiting: Optional[str] = AT_DECISION
        self.steps = 0
        self._remaining = 0
        self._elapsed = 0
        self._yellow_after: Optional[str] = None
        self.T_g: List[float] = []
        self.T_r: List[float] = []
        self.T_re: List[float] = []
        self.delta_T: List[float] = []
        self._pending_re: Optional[float] = None
        self.reservice_cycles: Set[int] = set()
        self.slot_cycles: Set[int] = set()
        self.events: List[Tuple[float, int, str, int, float]] = []

    @property
    def time(self) -> float:
        return self.steps * self.dt

    @property
    def elapsed(self) -> float:
        """Seconds spent in the current green or yellow."""
        return self._elapsed * self.dt

    @property
    def current_phase(self) -> Phase:
        return self.plan.phases[self.phase]

    @property
    def idle(self) -> bool:
        return self.waiting is not None

    def _log(self, what, value=0.0):
        self.events.append((self.time, self.cycle, what, self.phase, float(value)))

    def apply_duration(self, d: float) -> float:
        """Start the pending regular phase with ``d`` seconds of green.

        Returns the executed green time (clipped to the phase bounds and
        rounded to the step grid).
        """
        if self.waiting != AT_DECISION:
            raise RuntimeError("apply_duration called outside a decision point")
        ph = self.current_phase
        if d < ph.sigma_minus or d > ph.sigma_plus:
            log.warning("phase %d duration %.3f s outside [%g, %g]; clipped", ph.index, d,
                        ph.sigma_minus, ph.sigma_plus)
            d = min(max(d, ph.sigma_minus), ph.sigma_plus)
        self._start(REGULAR, _steps(d, self.dt))
        if self.plan.reservice is not None and ph.index == self.plan.protected_phase:
            self.T_g.append(self.time)
            if self._pending_re is not None:
                self.delta_T.append(self.time - self._pending_re)
                self._pending_re = None
        self._log("green", self._remaining * self.dt)
        return self._remaining * self.dt

    def insert_reservice(self, d: float) -> float:
        """Serve the protected movement for ``d`` seconds before the slot phase."""
        if self.waiting != AT_SLOT:
            raise RuntimeError("insert_reservice called away from the re-service checkpoint")
        rs = self.plan.reservice
        if d < rs.sigma_re_minus or d > rs.sigma_re_plus:
            log.warning("re-service duration %.3f s outside [%g, %g]; clipped", d, rs.sigma_re_minus,
                        rs.sigma_re_plus)
            d = min(max(d, rs.sigma_re_minus), rs.sigma_re_plus)
        self._start(RESERVICE, _steps(d, self.dt))
        self.reservice_cycles.add(self.cycle)
        self._log("reservice", self._remaining * self.dt)
        return self._remaining * self.dt

    def skip_reservice(self):
        if self.waiting != AT_SLOT:
            raise RuntimeError("skip_reservice called away from the re-service checkpoint")
        self.waiting = AT_DECISION

    def end_green(self):
        """Cut the running regular green short (switch-style controllers)."""
        if self.kind != REGULAR:
            raise RuntimeError("no regular green to end")
        self._remaining = 0
        self._to_yellow()

    def _start(self, kind, steps):
        self.kind = kind
        self.waiting = None
        self._remaining = steps
        self._elapsed = 0

    def _to_yellow(self):
        after = self.kind
        if after == REGULAR and self.plan.reservice is not None and self.phase == self.plan.protected_phase:
            self.T_r.append(self.time)
        self._yellow_after = after
        self.kind = YELLOW_KIND
        self._remaining = _steps(self.plan.yellow_s, self.dt) if self.plan.yellow_s > 0 else 0
        self._elapsed = 0
        self._log("yellow")
        if self._remaining == 0:
            self._finish_yellow()

    def _finish_yellow(self):
        after = self._yellow_after
        self.kind = None
        self._yellow_after = None
        self._elapsed = 0
        if after == RESERVICE:
            self.waiting = AT_DECISION
            return
        self.phase = (self.phase + 1) % len(self.plan.phases)
        if self.phase == 0:
            self.cycle += 1
        rs = self.plan.reservice
        if rs is not None and self.phase == rs.slot_index:
            self.waiting = AT_SLOT
            self.T_re.append(self.time)
            self._pending_re = self.time
            self.slot_cycles.add(self.cycle)
            self._log("slot")
        else:
            self.waiting = AT_DECISION

    def tick(self):
        """Advance one step. Must not be called while idle."""
        if self.waiting is not None:
            raise RuntimeError(f"controller is waiting at a {self.waiting} point")
        self.steps += 1
        self._elapsed += 1
        self._remaining -= 1
        if self._remaining <= 0:
            if self.kind == YELLOW_KIND:
                self._finish_yellow()
            else:
                self._to_yellow()

    def green_movements(self) -> FrozenSet[str]:
        if self.kind == REGULAR:
            return self.current_phase.served_movements
        if self.kind == RESERVICE:
            return self.plan.reservice.green_movements
        return frozenset()

    def yellow_movements(self) -> FrozenSet[str]:
        if self.kind != YELLOW_KIND:
            return frozenset()
        if self._yellow_after == RESERVICE:
            return self.plan.reservice.green_movements
        return self.current_phase.served_movements

    def signal_state(self, lane_movements: Iterable[str]) -> str:
        mv = set(lane_movements)
        if mv & self.green_movements():
            return GREEN
        if mv & self.yellow_movements():
            return YELLOW
        return RED

    def reservice_share(self) -> float:
        """Percentage of cycles (that reached the checkpoint) with a re-service."""
        if not self.slot_cycles:
            return 0.0
        return 100.0 * len(self.reservice_cycles) / len(self.slot_cycles)
