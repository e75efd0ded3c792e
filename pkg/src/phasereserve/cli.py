"""Command-line entry point: ``phasereserve {train,eval,compare,baseline,sweep}``.

Exit codes: 0 success, 1 configuration error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional

from .baselines import FixedTimeController, SotlConfig, SotlController
from .env import SignalEnv
from .harness import (ConstantActionController, PolicyController, parse_seeds, run_eval, sweep,
                      write_sweep_csv)
from .metrics import EvalReport, compare, write_comparison_csv
from .rl.ppo import PPOConfig
from .rl.training import load_checkpoint, save_checkpoint, train, write_curve
from .scenario import load_scenario
from .sim import ConfigError

log = logging.getLogger("phasereserve")


class _Parser(argparse.ArgumentParser):
    # bad arguments are configuration errors, not runtime errors
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _seeds(spec: str) -> List[int]:
    try:
        seeds = parse_seeds(spec)
    except ValueError:
        raise ConfigError(f"bad seed list: {spec!r}") from None
    if not seeds:
        raise ConfigError("empty seed list")
    return seeds


def _out(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_agent(path):
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"checkpoint not found: {p}")
    try:
        return load_checkpoint(p)
    except (ValueError, KeyError, OSError) as exc:
        raise ConfigError(f"cannot read checkpoint {p}: {exc}") from None


def _print_report(rep: EvalReport, protected: Optional[str]) -> None:
    o = rep.pooled.overall
    print(f"{rep.label}: delay {o.delay_mean:.2f} s (std {o.delay_std:.2f}), stops {o.stops_mean:.3f}, "
          f"throughput {o.throughput:.1f} veh/h, re-service {rep.pooled.reservice_pct:.1f}% of cycles")
    if protected and protected in rep.pooled.per_movement:
        p = rep.pooled.per_movement[protected]
        print(f"  protected {protected}: delay {p.delay_mean:.2f} s (std {p.delay_std:.2f}), stops {p.stops_mean:.3f}")


def _save_report(rep: EvalReport, out: Path, stem: str = "report") -> None:
    rep.write_json(out / f"{stem}.json")
    rep.write_csv(out / f"{stem}.csv")


def cmd_train(args) -> int:
    sc = load_scenario(args.scenario)
    env = SignalEnv(sc, args.demand, reservice=not args.no_reservice)
    out = _out(args)
    agent, meta = (None, {})
    if args.checkpoint:
        agent, meta = _load_agent(args.checkpoint)
    cfg = agent.cfg if agent is not None else PPOConfig()
    res = train(env, args.episodes, seed=args.seed, cfg=cfg, agent=agent)
    meta = {
        "scenario": sc.name, "demand": str(args.demand or sc.demand_path.stem),
        "reservice": not args.no_reservice, "seed": args.seed,
        "episodes": args.episodes + int(meta.get("episodes", 0)),
    }
    save_checkpoint(res.agent, out / "checkpoint.npz", meta)
    write_curve(res.curve, out / "reward_curve.csv")
    print(f"trained {args.episodes} episodes ({res.agent.updates} updates); "
          f"last step-average reward {res.curve[-1]:.4f}; checkpoint {out / 'checkpoint.npz'}")
    return 0


def cmd_eval(args) -> int:
    if not args.checkpoint:
        raise ConfigError("eval needs --checkpoint")
    sc = load_scenario(args.scenario)
    agent, meta = _load_agent(args.checkpoint)
    out = _out(args)
    rep = run_eval(sc, PolicyController(agent), _seeds(args.seeds), args.demand, not args.no_reservice,
                   out_dir=out, label=args.label or ("rl" if not args.no_reservice else "rl-no-reservice"))
    _save_report(rep, out)
    _print_report(rep, sc.protected_movement)
    return 0


def _baseline_controller(args, sc):
    if args.controller == "sotl":
        return SotlController(SotlConfig())
    if args.controller == "fixed":
        if args.durations:
            try:
                durs = [float(x) for x in args.durations.split(",")]
            except ValueError:
                raise ConfigError(f"bad --durations: {args.durations!r}") from None
            return FixedTimeController(sc.plan, durs)
        return FixedTimeController.midpoint(sc.plan)
    return ConstantActionController(0.0)


def cmd_baseline(args) -> int:
    sc = load_scenario(args.scenario)
    out = _out(args)
    rep = run_eval(sc, _baseline_controller(args, sc), _seeds(args.seeds), args.demand,
                   not args.no_reservice, out_dir=out, label=args.label or args.controller)
    _save_report(rep, out)
    _print_report(rep, sc.protected_movement)
    return 0


def cmd_compare(args) -> int:
    reports = []
    for p in (args.candidate, args.reference):
        if not Path(p).exists():
            raise ConfigError(f"report not found: {p}")
        try:
            reports.append(EvalReport.read_json(p))
        except (ValueError, KeyError, TypeError) as exc:
            raise ConfigError(f"cannot read report {p}: {exc}") from None
    cand, ref = reports
    table = compare(cand.pooled, ref.pooled)
    out = _out(args)
    write_comparison_csv(table, out / "comparison.csv")
    print(f"improvement of {cand.label or args.candidate} over {ref.label or args.reference} (positive = better)")
    for mv, row in table.items():
        print(f"  {mv:>4}: delay {row['delay_mean']:+7.2f}%  delay std {row['delay_std']:+7.2f}%  "
              f"stops {row['stops_mean']:+7.2f}%  throughput {row['throughput']:+6.2f}%")
    return 0


def cmd_sweep(args) -> int:
    sc = load_scenario(args.scenario)
    seeds = _seeds(args.seeds)
    if args.checkpoint:
        agent, _ = _load_agent(args.checkpoint)
        factory = lambda: PolicyController(agent)  # noqa: E731
    else:
        factory = lambda: _baseline_controller(args, sc)  # noqa: E731
    if args.scales:
        base = sc.demand(args.demand)
        pm = sc.protected_movement
        if pm is None:
            raise ConfigError(f"scenario {sc.name} has no protected movement to scale")
        try:
            scales = [float(x) for x in args.scales.split(",")]
        except ValueError:
            raise ConfigError(f"bad --scales: {args.scales!r}") from None
        if any(s < 0 for s in scales):
            raise ConfigError("--scales must be non-negative")
        demands = [base.scaled({pm: s}) for s in scales]
        labels = [f"{pm}x{s:g}" for s in scales]
    else:
        names = args.demand.split(",") if args.demand else [f"{sc.name}_d{i}" for i in range(1, 6)]
        demands = [sc.demand(n) for n in names]
        labels = names
    reports = sweep(sc, factory, demands, seeds, reservice=not args.no_reservice, labels=labels)
    out = _out(args)
    write_sweep_csv(reports, out / "sweep.csv")
    with open(out / "sweep.json", "w") as fh:
        json.dump([r.to_dict() for r in reports], fh, indent=2, sort_keys=True)
    for r in reports:
        _print_report(r, sc.protected_movement)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="phasereserve", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, seeds=True):
        sp.add_argument("--scenario", default="ramp", help="scenario YAML path or bundled name (ramp, fourleg)")
        sp.add_argument("--demand", default=None, help="demand CSV path or bundled name (e.g. ramp_d5)")
        sp.add_argument("--out", default="runs", help="output directory")
        sp.add_argument("--no-reservice", action="store_true", help="disable the phase re-service hook")
        sp.add_argument("--label", default=None, help="report label")
        if seeds:
            sp.add_argument("--seeds", default="0-4", help="evaluation seeds, e.g. 0-4 or 1,5,9")

    sp = sub.add_parser("train", help="train a PPO policy")
    common(sp, seeds=False)
    sp.add_argument("--episodes", type=int, default=300)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--checkpoint", default=None, help="resume from this checkpoint")
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("eval", help="evaluate a trained policy (greedy) over seeds")
    common(sp)
    sp.add_argument("--checkpoint", default=None)
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("baseline", help="evaluate a non-learning controller over seeds")
    common(sp)
    sp.add_argument("--controller", choices=("sotl", "fixed", "constant"), default="sotl")
    sp.add_argument("--durations", default=None, help="fixed-time greens, comma separated")
    sp.set_defaults(func=cmd_baseline)

    sp = sub.add_parser("compare", help="percentage improvement of one report over another")
    sp.add_argument("candidate", help="report.json of the candidate")
    sp.add_argument("reference", help="report.json of the reference")
    sp.add_argument("--out", default="runs")
    sp.set_defaults(func=cmd_compare)

    sp = sub.add_parser("sweep", help="evaluate one controller over several demand profiles")
    common(sp)
    sp.add_argument("--checkpoint", default=None, help="policy to sweep; without it a baseline is used")
    sp.add_argument("--controller", choices=("sotl", "fixed", "constant"), default="sotl")
    sp.add_argument("--durations", default=None)
    sp.add_argument("--scales", default=None,
                    help="scale the protected movement of --demand by these factors instead of "
                         "sweeping bundled profiles")
    sp.set_defaults(func=cmd_sweep)
    return p


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "episodes", 1) is not None and getattr(args, "episodes", 1) <= 0:
        print("error: --episodes must be positive", file=sys.stderr)
        return 1
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001
        log.debug("runtime failure", exc_info=True)
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
