"""Scenario files: geometry, fundamental diagram, phase plan, conflicts, re-service stanza.

Scenarios are YAML documents. Bundled ones can be referred to by name
(``ramp``, ``fourleg``); bundled demand profiles likewise (``ramp_d3`` ...).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Dict, List, Optional, Union

import yaml

from .shockwave import ReServiceConfig
from .signal import Phase, PhasePlan, ReservicePlan
from .sim import ConfigError, DemandProfile, FundamentalDiagram, LaneSpec

DATA_DIR = Path(str(resources.files("phasereserve") / "data"))
BUNDLED_SCENARIOS = ("ramp", "fourleg")


@dataclass
class Scenario:
    name: str
    lanes: List[LaneSpec]
    fd: FundamentalDiagram
    plan: PhasePlan
    reservice: ReServiceConfig
    demand_path: Optional[Path] = None
    episode_s: float = 3600.0
    theta_m: float = 250.0
    dt: float = 0.5
    detector_m: float = 300.0
    source: Optional[Path] = None

    @property
    def movements(self) -> List[str]:
        out: List[str] = []
        for lane in self.lanes:
            for mv in lane.served_movements:
                if mv not in out:
                    out.append(mv)
        return out

    @property
    def state_dim(self) -> int:
        return 3 * len(self.lanes)

    @property
    def protected_movement(self) -> Optional[str]:
        return self.plan.reservice.protected_movement if self.plan.reservice else None

    def demand(self, spec: Union[None, str, Path, DemandProfile] = None) -> DemandProfile:
        """Resolve a demand profile: explicit object, path, bundled name, or the scenario default."""
        if isinstance(spec, DemandProfile):
            prof = spec
        else:
            path = resolve_demand(spec) if spec is not None else self.demand_path
            if path is None:
                raise ConfigError(f"scenario {self.name} has no default demand profile")
            prof = DemandProfile.from_csv(path, horizon=self.episode_s)
        unknown = set(prof.movements) - set(self.movements)
        if unknown:
            raise ConfigError(f"demand mentions movements not in scenario {self.name}: {sorted(unknown)}")
        return prof

    def with_demand(self, path) -> "Scenario":
        return replace(self, demand_path=resolve_demand(path))


def resolve_demand(spec: Union[str, Path]) -> Path:
    p = Path(spec)
    if p.exists():
        return p
    for cand in (DATA_DIR / f"{spec}.csv", DATA_DIR / p.name):
        if cand.exists():
            return cand
    raise ConfigError(f"demand profile not found: {spec}")


def _req(d: dict, key: str, where: str):
    if key not in d:
        raise ConfigError(f"{where}: missing key '{key}'")
    return d[key]


def _num(d: dict, key: str, where: str, default=None) -> float:
    v = d.get(key, default)
    if v is None:
        raise ConfigError(f"{where}: missing key '{key}'")
    try:
        return float(v)
    except (TypeError, ValueError):
        raise ConfigError(f"{where}.{key}: expected a number, got {v!r}") from None


def parse_scenario(doc: dict, source: Optional[Path] = None) -> Scenario:
    where = str(source) if source else "<scenario>"
    if not isinstance(doc, dict):
        raise ConfigError(f"{where}: top level must be a mapping")
    name = str(doc.get("name", source.stem if source else "scenario"))

    fd_doc = doc.get("fundamental_diagram", {})
    try:
        fd = FundamentalDiagram(
            _num(fd_doc, "k_j", f"{where}: fundamental_diagram", 133.3),
            _num(fd_doc, "k_m", f"{where}: fundamental_diagram", 50.0),
            _num(fd_doc, "q_m", f"{where}: fundamental_diagram", 1550.0),
        )
    except ConfigError as exc:
        raise ConfigError(f"{where}: fundamental_diagram: {exc}") from None

    lanes = []
    for i, ld in enumerate(_req(doc, "lanes", where)):
        lw = f"{where}: lanes[{i}]"
        mvs = tuple(str(m) for m in _req(ld, "movements", lw))
        if not mvs:
            raise ConfigError(f"{lw}: lane serves no movement")
        lanes.append(LaneSpec(str(ld.get("id", "+".join(mvs))), _num(ld, "length", lw, 500.0), mvs))
    lane_ids = [l.id for l in lanes]
    if len(set(lane_ids)) != len(lane_ids):
        raise ConfigError(f"{where}: duplicate lane ids")
    movements = {m for l in lanes for m in l.served_movements}

    phases = []
    for i, pd_ in enumerate(_req(doc, "phases", where)):
        pw = f"{where}: phases[{i}]"
        mvs = frozenset(str(m) for m in _req(pd_, "movements", pw))
        bad = mvs - movements
        if bad:
            raise ConfigError(f"{pw}: unknown movements {sorted(bad)}")
        try:
            phases.append(Phase(i, mvs, _num(pd_, "min_green", pw), _num(pd_, "max_green", pw)))
        except ConfigError as exc:
            raise ConfigError(f"{pw}: {exc}") from None
    served = set().union(*(p.served_movements for p in phases)) if phases else set()
    if movements - served:
        raise ConfigError(f"{where}: movements never served by a phase: {sorted(movements - served)}")

    conflicts = set()
    for i, pair in enumerate(doc.get("conflicts", []) or []):
        if len(pair) != 2:
            raise ConfigError(f"{where}: conflicts[{i}] must be a pair")
        conflicts.add(frozenset(str(m) for m in pair))

    rs_plan = None
    theta_m = _num(doc, "theta_m", where, 250.0)
    rcfg_kwargs = {"theta_m": theta_m}
    rs_doc = doc.get("reservice")
    if rs_doc:
        rw = f"{where}: reservice"
        prot = str(_req(rs_doc, "protected_movement", rw))
        if prot not in movements:
            raise ConfigError(f"{rw}: protected movement {prot} is not a scenario movement")
        extra = frozenset(str(m) for m in rs_doc.get("movements", []) or [])
        try:
            rs_plan = ReservicePlan(prot, int(_req(rs_doc, "slot", rw)), _num(rs_doc, "min", rw),
                                    _num(rs_doc, "max", rw), extra)
        except ConfigError as exc:
            raise ConfigError(f"{rw}: {exc}") from None
        rcfg_kwargs.update(
            theta_X=_num(rs_doc, "theta_X", rw, 200.0),
            zeta=_num(rs_doc, "zeta", rw, 0.7),
            sigma_re_minus=rs_plan.sigma_re_minus,
            sigma_re_plus=rs_plan.sigma_re_plus,
        )
    try:
        plan = PhasePlan(phases, _num(doc, "yellow_s", where, 5.0), rs_plan, conflicts)
        rcfg = ReServiceConfig(**rcfg_kwargs)
    except ConfigError as exc:
        raise ConfigError(f"{where}: {exc}") from None

    demand_path = None
    if doc.get("demand"):
        d = Path(str(doc["demand"]))
        if not d.is_absolute() and source is not None and (source.parent / d).exists():
            d = source.parent / d
        demand_path = resolve_demand(d)

    return Scenario(
        name=name, lanes=lanes, fd=fd, plan=plan, reservice=rcfg, demand_path=demand_path,
        episode_s=_num(doc, "episode_s", where, 3600.0), theta_m=theta_m,
        dt=_num(doc, "dt", where, 0.5), detector_m=_num(doc, "detector_m", where, 300.0),
        source=source,
    )


def load_scenario(spec: Union[str, Path]) -> Scenario:
    """Load a scenario from a YAML path or a bundled scenario name."""
    p = Path(spec)
    if not p.exists():
        cand = DATA_DIR / f"{spec}.yaml"
        if not cand.exists():
            raise ConfigError(f"scenario not found: {spec}")
        p = cand
    try:
        doc = yaml.safe_load(p.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"{p}: {exc}") from None
    return parse_scenario(doc, p)
