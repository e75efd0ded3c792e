"""Compare the numba and numpy simulator kernels.

Kernel-level timings call both implementations directly on the same queued
lane. Episode-level timings run a full fixed-time episode in a subprocess, once
with the default path and once with PHASERESERVE_DISABLE_JIT=1.

    python benchmarks/bench_kernels.py [--reps 2000] [--episodes 3]
"""

import argparse
import os
import subprocess
import sys
import time

import numpy as np

from phasereserve import _kernels as K

EPISODE_SNIPPET = """
import time
from phasereserve.scenario import load_scenario
from phasereserve.harness import run_eval
from phasereserve.baselines import FixedTimeController
from phasereserve import _kernels
sc = load_scenario("ramp")
ctl = FixedTimeController.midpoint(sc.plan)
run_eval(sc, ctl, [0], "ramp_d5")  # warm-up (numba compile / cache load)
t0 = time.perf_counter()
run_eval(sc, ctl, list(range({episodes})), "ramp_d5")
print(_kernels.USE_NUMBA, (time.perf_counter() - t0) / {episodes})
"""


def make_lane(n, lag_k=2, seed=0):
    rng = np.random.default_rng(seed)
    pos = np.sort(rng.uniform(0.0, 400.0, n))
    hist = np.repeat(pos[:, None], lag_k + 2, axis=1)
    return {
        "pos": pos, "spd": np.zeros(n), "hist": hist, "stopped": np.zeros(n, dtype=bool),
        "stops": np.zeros(n, dtype=np.int64), "crossed": np.zeros(n, dtype=bool),
        "exit_frac": np.zeros(n), "detected": np.zeros(n, dtype=bool),
    }


def time_advance(fn, n, reps):
    lane = make_lane(n)
    args = lambda L: (L["pos"], L["spd"], L["hist"], L["stopped"], L["stops"], n, 0.5, 8.611, 7.5, 2, 0.9,  # noqa: E731
                      False, 0.1, 1.0, L["crossed"], L["exit_frac"], 300.0, L["detected"], 60.0)
    fn(*args(lane))
    t0 = time.perf_counter()
    for _ in range(reps):
        fn(*args(lane))
    return (time.perf_counter() - t0) / reps


def time_queue(fn, n, reps):
    lane = make_lane(n)
    lane["stopped"][:] = True
    fn(lane["pos"], lane["stopped"], n, 7.5, 250.0)
    t0 = time.perf_counter()
    for _ in range(reps):
        fn(lane["pos"], lane["stopped"], n, 7.5, 250.0)
    return (time.perf_counter() - t0) / reps


def episode_time(disable_jit, episodes):
    env = dict(os.environ)
    if disable_jit:
        env["PHASERESERVE_DISABLE_JIT"] = "1"
    else:
        env.pop("PHASERESERVE_DISABLE_JIT", None)
    out = subprocess.run([sys.executable, "-c", EPISODE_SNIPPET.format(episodes=episodes)],
                         env=env, capture_output=True, text=True, check=True)
    used, secs = out.stdout.split()
    return used == "True", float(secs)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--reps", type=int, default=2000)
    ap.add_argument("--episodes", type=int, default=3)
    args = ap.parse_args()

    if not K.HAVE_NUMBA:
        print("numba unavailable; only the numpy path can be timed")
    print(f"{'kernel':<16}{'n':>6}{'numpy us':>12}{'numba us':>12}{'speedup':>9}")
    for n in (8, 32, 64):
        for name, timer, np_fn, jit_fn in (
            ("newell_advance", time_advance, K.newell_advance_numpy, getattr(K, "_newell_advance_jit", None)),
            ("queue_length", time_queue, K.queue_length_numpy, getattr(K, "_queue_length_jit", None)),
        ):
            t_np = timer(np_fn, n, args.reps) * 1e6
            if jit_fn is None:
                print(f"{name:<16}{n:>6}{t_np:>12.2f}{'-':>12}{'-':>9}")
                continue
            t_jit = timer(jit_fn, n, args.reps) * 1e6
            print(f"{name:<16}{n:>6}{t_np:>12.2f}{t_jit:>12.2f}{t_np / t_jit:>8.1f}x")

    print()
    used_a, t_a = episode_time(False, args.episodes)
    used_b, t_b = episode_time(True, args.episodes)
    print(f"3600 s episode, default path (numba={used_a}): {t_a:.3f} s")
    print(f"3600 s episode, PHASERESERVE_DISABLE_JIT=1 (numba={used_b}): {t_b:.3f} s")
    print(f"episode speedup: {t_b / t_a:.2f}x")


if __name__ == "__main__":
    main()
