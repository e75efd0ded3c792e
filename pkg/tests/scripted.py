"""Scripted single-lane scenarios shared by the simulator tests and the acceptance run."""

import numpy as np

from phasereserve.sim import GREEN, RED, FundamentalDiagram, LaneSpec, Simulator


def one_lane(fd=None, dt=0.5, length=500.0, **kw):
    fd = fd or FundamentalDiagram()
    return Simulator(fd, [LaneSpec("L", length, ("X",))], dt=dt, **kw)


def uniform_stream_red(flow_vph=600.0, red_s=40.0, warmup_s=90.0, fd=None, dt=0.5):
    """Feed evenly spaced free-flow arrivals, then hold the lane at red.

    Returns the simulator after the red and the list of queue-join events
    ``(t, X)`` recorded whenever the measured queue grew.
    """
    sim = one_lane(fd, dt, theta_m=1000.0, detector_distance=300.0)
    every = int(round(3600.0 / flow_vph / dt))
    steps_warm = int(round(warmup_s / dt))
    steps_red = int(round(red_s / dt))
    joins = []
    last_x = 0.0
    for k in range(steps_warm + steps_red):
        if k % every == 0:
            sim.add_vehicle(0, 500.0)
        red = k >= steps_warm
        sim.step([RED if red else GREEN])
        if red:
            x = sim.measure_queue(0)
            if x > last_x + 1e-9:
                joins.append((sim.time, x))
            last_x = x
    return sim, joins


def discharge_starts(sim, max_steps=400):
    """Run green and record when each initially stopped vehicle first moves.

    Returns ``(t_start, position)`` pairs ordered from the stop line upstream.
    """
    lane = sim.lanes[0]
    n = lane.n
    ids = [int(lane.vid[i]) for i in range(n) if lane.stopped[i] and lane.pos[i] >= 0.0]
    start_pos = {int(lane.vid[i]): float(lane.pos[i]) for i in range(n)}
    started = {}
    for _ in range(max_steps):
        before = {int(lane.vid[i]): float(lane.pos[i]) for i in range(lane.n)}
        sim.step([GREEN])
        for i in range(lane.n):
            v = int(lane.vid[i])
            if v in ids and v not in started and lane.pos[i] < before.get(v, np.inf) - 1e-9:
                # vehicles leave at free-flow speed, so the first displacement dates the start
                started[v] = sim.time - (before[v] - float(lane.pos[i])) / sim.vf
        if len(started) == len(ids):
            break
    return [(started[v], start_pos[v]) for v in ids if v in started]


def slope(points):
    t = np.array([p[0] for p in points])
    x = np.array([p[1] for p in points])
    return float(np.polyfit(t, x, 1)[0])
