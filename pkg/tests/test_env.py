import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from phasereserve.env import SignalEnv, compute_reward, map_action, unmap_action
from phasereserve.scenario import load_scenario
from phasereserve.signal import Phase
from phasereserve.sim import DemandProfile

P530 = Phase(0, frozenset({"A"}), 5, 30)
P545 = Phase(0, frozenset({"A"}), 5, 45)


@pytest.fixture(scope="module")
def ramp():
    return load_scenario("ramp")


def zero_demand(sc):
    return DemandProfile.constant({mv: 0.0 for mv in sc.movements})


def test_map_action_examples():
    assert map_action(-1.0, P530) == 5.0
    assert map_action(1.0, P530) == 30.0
    assert map_action(0.0, P545) == 25.0
    assert map_action(3.0, P530) == 30.0


@given(st.floats(-1, 1))
def test_map_action_roundtrip(a):
    assert abs(unmap_action(map_action(a, P545), P545) - a) < 1e-9


def test_reward_examples():
    assert compute_reward([0.0, 0.0]) == 0.0
    assert compute_reward([125.0, 50.0], 250.0) == pytest.approx(-0.7, abs=1e-12)
    assert compute_reward([250.0] * 4, 250.0) == -4.0


def test_sojourn_without_reservice(ramp):
    env = SignalEnv(ramp, zero_demand(ramp), reservice=False)
    env.step(0.0)
    assert env.current_phase.sigma_plus == 40
    _, _, j, info = env.step(0.0)
    assert j == 27.5
    assert info["reservice_s"] == 0.0


def test_sojourn_with_inserted_reservice(ramp, monkeypatch):
    env = SignalEnv(ramp, zero_demand(ramp), reservice=True)
    monkeypatch.setattr(env.advisor, "decide", lambda *a, **k: 12.0)
    env.step(0.0)
    _, _, j, info = env.step(0.0)
    assert info["reservice_s"] == 12.0
    assert j == 27.5 + 12.0 + 5.0


def test_empty_network_observation(ramp):
    env = SignalEnv(ramp, zero_demand(ramp))
    s = env.reset(0)
    n = len(ramp.lanes)
    assert np.all(s[0::3] == 0) and np.all(s[1::3] == 0)
    for _ in range(5):
        s, r, _, _ = env.step(0.3)
        assert r == 0.0
        assert np.all(s[0::3] == 0) and np.all(s[1::3] == 0)
        expect = [ramp.plan.phases_until_service(l.served_movements, env.ctrl.phase) / 3 for l in ramp.lanes]
        np.testing.assert_allclose(s[2::3], expect)
    assert s.shape == (3 * n,)


def test_episode_bookkeeping(ramp):
    env = SignalEnv(ramp, "ramp_d5")
    env.reset(1)
    rng = np.random.default_rng(1)
    total_j, n = 0.0, len(ramp.lanes)
    while not env.done:
        s, r, j, info = env.step(float(rng.uniform(-1, 1)))
        total_j += j
        assert -n <= r <= 0.0
        assert np.all((s >= 0) & (s <= 1))
    assert total_j == pytest.approx(env.time, abs=ramp.dt)
    assert env.time == pytest.approx(3600.0, abs=ramp.dt)
    per_cycle = [c for _, c, what, _, _ in env.ctrl.events if what == "reservice"]
    assert len(per_cycle) == len(set(per_cycle))
    assert len(env.ctrl.reservice_cycles) > 0
    s, r, j, info = env.step(0.0)
    assert j == 0.0 and info["done"]


def _trajectory(env, seed, steps=100):
    s0 = env.reset(seed)
    rng = np.random.default_rng(7)
    out = [s0.copy()]
    for _ in range(steps):
        s, r, j, _ = env.step(float(rng.uniform(-1, 1)))
        out.append((s.copy(), r, j))
        if env.done:
            break
    return out


def _same(a, b):
    assert len(a) == len(b)
    np.testing.assert_array_equal(a[0], b[0])
    for x, y in zip(a[1:], b[1:]):
        np.testing.assert_array_equal(x[0], y[0])
        assert x[1:] == y[1:]


def test_reset_determinism_and_no_leakage(ramp):
    env = SignalEnv(ramp, "ramp_d3")
    first = _trajectory(env, 11)
    _same(first, _trajectory(env, 11))
    # reset mid-episode
    env.reset(3)
    for _ in range(17):
        env.step(0.9)
    _same(first, _trajectory(env, 11))
    _same(first, _trajectory(SignalEnv(ramp, "ramp_d3"), 11))
