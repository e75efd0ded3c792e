import math
import os
import subprocess
import sys

import numpy as np
import pytest

from phasereserve import _kernels
from phasereserve.sim import (GREEN, RED, ConfigError, DemandProfile, FundamentalDiagram, LaneSpec,
                              Simulator)
from scripted import discharge_starts, one_lane, slope, uniform_stream_red

FD = FundamentalDiagram()


def test_fd_speeds_from_parameters():
    # free flow q_m / k_m and backward wave q_m / (k_j - k_m), computed by hand
    assert FD.vf_kmh == pytest.approx(1550 / 50, abs=1e-12)
    assert FD.w_kmh == pytest.approx(1550 / 83.3, abs=1e-12)
    assert FD.vf == pytest.approx(31.0 / 3.6, abs=1e-12)
    assert FD.jam_spacing == pytest.approx(1000 / 133.3)


@pytest.mark.parametrize("kw", [dict(k_m=0), dict(k_m=140), dict(q_m=0)])
def test_fd_rejects_bad_parameters(kw):
    with pytest.raises(ConfigError):
        FundamentalDiagram(**kw)


def test_single_vehicle_free_flow_one_second():
    sim = one_lane(dt=1.0)
    sim.add_vehicle(0, 100.0)
    sim.step([GREEN])
    assert sim.lanes[0].pos[0] == pytest.approx(100.0 - 8.6111111, abs=1e-6)
    assert sim.lanes[0].pos[0] == pytest.approx(91.39, abs=5e-3)


def test_vehicle_at_stop_line_holds_on_red():
    sim = one_lane()
    sim.add_vehicle(0, 0.0, stopped=True)
    for _ in range(10):
        sim.step([RED])
    assert sim.lanes[0].pos[0] == 0.0
    assert sim.lanes[0].spd[0] == 0.0
    assert sim.exited == 0


def test_dt_above_wave_lag_rejected():
    with pytest.raises(ConfigError):
        one_lane(dt=1.6)


def test_platoon_discharge_wave_matches_w():
    sim = one_lane()
    for i in range(5):
        sim.add_vehicle(0, i * FD.jam_spacing, stopped=True)
    starts = discharge_starts(sim)
    assert len(starts) == 5
    # head vehicle departs first
    assert starts[0][0] == min(t for t, _ in starts)
    w = slope(starts)
    assert abs(w - FD.w) / FD.w < 0.15
    assert w == pytest.approx(FD.w, rel=1e-6)


@pytest.mark.parametrize("dt", [0.25, 0.5, 1.0])
def test_discharge_wave_independent_of_step(dt):
    sim, _ = uniform_stream_red(dt=dt)
    assert slope(discharge_starts(sim)) == pytest.approx(FD.w, rel=1e-6)


def test_saturation_flow_at_stop_line():
    # a long standing queue must discharge at q_m
    sim = one_lane(theta_m=1000.0)
    for i in range(30):
        sim.add_vehicle(0, i * FD.jam_spacing, stopped=True)
    for _ in range(200):
        sim.step([GREEN])
    exits = np.sort([v.exit_time for v in sim.trips])
    assert exits.size == 30
    assert 3600.0 / np.diff(exits)[3:].mean() == pytest.approx(FD.q_m, rel=1e-6)


def test_queue_growth_speed_matches_arrival_shock():
    _, joins = uniform_stream_red(600.0, 40.0)
    k_a = 600.0 / FD.vf_kmh
    v1 = 600.0 / (FD.k_j - k_a) / 3.6
    assert v1 * 3.6 == pytest.approx(5.266, abs=1e-3)
    assert abs(slope(joins) - v1) / v1 < 0.15


def test_zero_demand_creates_nothing():
    sim = one_lane()
    prof = DemandProfile.constant({"X": 0.0})
    for _ in range(1000):
        assert sim.inject_demand(prof) == []
        sim.step([GREEN])
    assert sim.arrived == 0


def test_poisson_mean_arrivals():
    sim = one_lane(dt=1.0, seed=3)
    prof = DemandProfile.constant({"X": 3600.0}, horizon=10_000.0)
    for k in range(10_000):
        sim.inject_demand(prof, t=float(k))
    assert sim.arrived / 10_000 == pytest.approx(1.0, abs=0.03)


def test_same_seed_same_arrivals():
    def run(seed):
        sim = one_lane(seed=seed)
        prof = DemandProfile.constant({"X": 900.0})
        out = []
        for _ in range(2000):
            out.append(tuple(sim.inject_demand(prof)))
            sim.step([GREEN])
        return out, [(v.id, v.entry_time, v.exit_time) for v in sim.trips]

    assert run(5) == run(5)
    assert run(5) != run(6)


def test_queue_measurements():
    sim = one_lane()
    assert sim.measure_queue(0) == 0.0
    for i in range(10):
        sim.add_vehicle(0, i * FD.jam_spacing, stopped=True)
    # 10 vehicles bumper to bumper occupy 10 / k_j km
    assert sim.measure_queue(0) == pytest.approx(10 / 133.3 * 1000, abs=1e-9)
    assert sim.measure_queue(0) == pytest.approx(75.0, abs=0.05)

    sim = one_lane()
    for i in range(40):
        sim.add_vehicle(0, i * FD.jam_spacing, stopped=True)
    assert sim.measure_queue(0) == 250.0


def test_queue_chain_breaks_at_gap():
    sim = one_lane()
    for p in (0.0, 7.6, 15.2, 60.0, 67.6):
        sim.add_vehicle(0, p, stopped=True)
    assert sim.measure_queue(0) == pytest.approx(15.2 + FD.jam_spacing)


def test_arrival_measurement_uniform_stream():
    sim = one_lane(length=1000.0)
    vf = FD.vf
    # ten free-flow vehicles crossing the 300 m detector at 3, 9, ..., 57 s
    for k in range(10):
        sim.add_vehicle(0, 300.0 + vf * (3.0 + 6.0 * k))
    while sim.time < 60.0:
        sim.step([GREEN])
    q_a, k_a = sim.measure_arrivals("X", 60.0)
    assert q_a == pytest.approx(600.0)
    assert k_a == pytest.approx(600.0 / 31.0, abs=1e-9)
    assert k_a == pytest.approx(19.355, abs=1e-3)
    assert q_a == pytest.approx(FD.vf_kmh * k_a, abs=1e-9)


def test_arrival_measurement_empty():
    sim = one_lane()
    assert sim.measure_arrivals("X", 60.0) == (0.0, 0.0)
    with pytest.raises(ValueError):
        sim.measure_arrivals("X", 0.0)


def _busy_sim(seed=1):
    lanes = [LaneSpec("A", 500.0, ("A",)), LaneSpec("B", 500.0, ("B",))]
    sim = Simulator(FD, lanes, seed=seed)
    prof = DemandProfile.constant({"A": 800.0, "B": 500.0})
    return sim, prof


def test_conservation_and_spacing_every_step():
    sim, prof = _busy_sim()
    for k in range(4000):
        sim.inject_demand(prof)
        phase = (k // 60) % 2
        sim.step([GREEN if phase == 0 else RED, RED if phase == 0 else GREEN])
        assert sim.injected == sim.inbound_count + sim.exited
        assert sim.arrived == sim.injected + sim.buffered_count
        for lane in sim.lanes:
            idx = lane.inbound
            p = lane.pos[idx]
            st = lane.stopped[idx]
            both = st[1:] & st[:-1]
            assert np.all(np.diff(p)[both] >= FD.jam_spacing - 1e-9)


def test_trajectory_determinism():
    def run():
        sim, prof = _busy_sim(seed=9)
        for k in range(3000):
            sim.inject_demand(prof)
            sim.step([GREEN if (k // 50) % 2 else RED, RED if (k // 50) % 2 else GREEN])
        return [(v.id, v.exit_time, v.stop_count) for v in sim.trips]

    assert run() == run()


def test_demand_profile_validation_and_roundtrip(tmp_path):
    with pytest.raises(ConfigError):
        DemandProfile({"A": [(0, 100, 10.0), (200, 3600, 10.0)]})
    with pytest.raises(ConfigError):
        DemandProfile({"A": [(0, 3600, -1.0)]})
    prof = DemandProfile({"A": [(0, 1800, 100.0), (1800, 3600, 300.0)]})
    assert prof.flow("A", 1799.9) == 100.0
    assert prof.flow("A", 1800.0) == 300.0
    assert prof.total_vehicles("A") == pytest.approx(200.0)
    prof.to_csv(tmp_path / "d.csv")
    back = DemandProfile.from_csv(tmp_path / "d.csv")
    assert back.segments == prof.segments
    assert prof.scaled({"A": 2.0}).flow("A", 10.0) == 200.0


def _random_lane(rng, n, lag_k):
    pos = np.sort(rng.uniform(-30.0, 450.0, n))
    pos[1:] = np.maximum(pos[1:], pos[:-1] + 7.5)
    hist = pos[:, None] + rng.uniform(0.0, 4.0, (n, lag_k + 2)).cumsum(axis=1) - rng.uniform(0, 4.0, (n, 1))
    hist[:, 0] = pos
    return {
        "pos": pos, "spd": rng.uniform(0, 8, n), "hist": hist, "stopped": rng.random(n) < 0.3,
        "stops": rng.integers(0, 3, n).astype(np.int64), "crossed": np.zeros(n, dtype=bool),
        "exit_frac": np.zeros(n), "detected": np.zeros(n, dtype=bool),
    }


@pytest.mark.skipif(not _kernels.HAVE_NUMBA, reason="numba not installed")
@pytest.mark.parametrize("can_cross", [True, False])
def test_numba_and_numpy_kernels_agree(can_cross):
    rng = np.random.default_rng(0)
    for trial in range(200):
        n = int(rng.integers(0, 25))
        a = _random_lane(rng, max(n, 1), 1)
        b = {k: v.copy() for k, v in a.items()}
        args = (n, 0.5, FD.vf, FD.jam_spacing, 1, 0.9028, can_cross, 0.1, 1.0)

        def call(fn, L):
            return fn(L["pos"], L["spd"], L["hist"], L["stopped"], L["stops"], *args, L["crossed"],
                      L["exit_frac"], 300.0, L["detected"], 60.0)

        ra = call(_kernels._newell_advance_jit, a)
        rb = call(_kernels.newell_advance_numpy, b)
        assert tuple(ra) == tuple(rb)
        for k in a:
            np.testing.assert_array_equal(a[k][:n], b[k][:n], err_msg=k)
        qa = _kernels._queue_length_jit(a["pos"], a["stopped"], n, 7.5, 250.0)
        qb = _kernels.queue_length_numpy(b["pos"], b["stopped"], n, 7.5, 250.0)
        assert qa == qb


SNIPPET = """
from phasereserve.scenario import load_scenario
from phasereserve.harness import run_eval, ConstantActionController
rep = run_eval(load_scenario("ramp"), ConstantActionController(0.3), [4], "ramp_d3")
o = rep.pooled.overall
print(repr((o.delay_mean, o.delay_std, o.stops_mean, o.throughput, rep.pooled.reservice_pct)))
"""


@pytest.mark.skipif(not _kernels.HAVE_NUMBA, reason="numba not installed")
def test_episode_identical_with_and_without_jit():
    outs = []
    for flag in ("0", "1"):
        env = dict(os.environ, PHASERESERVE_DISABLE_JIT=flag)
        res = subprocess.run([sys.executable, "-c", SNIPPET], env=env, capture_output=True, text=True,
                             check=True)
        outs.append(eval(res.stdout.strip()))
    assert outs[0] == outs[1]
    assert all(math.isfinite(x) for x in outs[0])
