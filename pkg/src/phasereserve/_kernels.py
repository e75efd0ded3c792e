"""Hot inner loops of the lane simulator.

Two interchangeable implementations are kept for every kernel: a numba
``@njit`` version and a vectorised numpy version. The numba path is used by
default; set ``PHASERESERVE_DISABLE_JIT=1`` in the environment before import
to force the numpy path (useful when numba is unavailable or for debugging).

Lane arrays are ordered front to back: index 0 is the vehicle closest to (or
furthest past) the stop line. Positions are metres upstream of the stop line
and become negative once a vehicle has crossed.
"""

import os

import numpy as np

__all__ = [
    "USE_NUMBA",
    "newell_advance",
    "queue_length",
    "newell_advance_numpy",
    "queue_length_numpy",
]

_DISABLE = os.environ.get("PHASERESERVE_DISABLE_JIT", "").strip().lower() in ("1", "true", "yes")

try:
    if _DISABLE:
        raise ImportError("jit disabled by environment")
    from numba import njit

    HAVE_NUMBA = True
except ImportError:
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA


def newell_advance_numpy(pos, spd, hist, stopped, stops, n, dt, vf, jam, lag_k, lag_f,
                         can_cross, stop_enter, stop_leave, crossed, exit_frac,
                         det_dist, detected, ghost_dist):
    """Advance ``n`` vehicles one step with Newell's lagged car-following rule.

    Each follower is placed at ``max(free-flow move, leader position one
    wave-lag ago + jam spacing)``; vehicles still upstream of the stop line are
    held at 0 when ``can_cross`` is false. ``hist[i, k]`` holds the position of
    vehicle ``i`` k steps ago (k=0 is the current position) and is shifted in
    place. Between two history samples the leader is taken to stand still and
    then move at free-flow speed; linear interpolation would date a standing
    start up to one step early and the discharge wave would outrun ``w``.
    ``crossed``/``exit_frac`` receive the stop-line crossings of this
    step, with ``exit_frac`` the fraction of ``dt`` elapsed at the crossing;
    ``detected`` flags vehicles passing the upstream detector at ``det_dist``.

    Returns ``(n_crossed, n_detected, n_ghosts)`` where ``n_ghosts`` counts the
    leading vehicles now more than ``ghost_dist`` past the stop line.
    """
    if n == 0:
        return 0, 0, 0
    old = pos[:n].copy()
    new = old - vf * dt
    if n > 1:
        lagged = np.minimum(hist[: n - 1, lag_k + 1], hist[: n - 1, lag_k] + vf * dt * lag_f)
        new[1:] = np.maximum(new[1:], lagged + jam)
    inbound = old >= 0.0
    if not can_cross:
        new = np.where(inbound, np.maximum(new, 0.0), new)
    new = np.minimum(new, old)
    pos[:n] = new
    spd[:n] = (old - new) / dt

    cross = inbound & (new < 0.0)
    crossed[:n] = cross
    exit_frac[:n] = 0.0
    if cross.any():
        exit_frac[:n][cross] = old[cross] / (old[cross] - new[cross])

    still_in = new >= 0.0
    enter = still_in & ~stopped[:n] & (spd[:n] < stop_enter)
    leave = stopped[:n] & (spd[:n] > stop_leave)
    stops[:n] += enter
    stopped[:n] = (stopped[:n] | enter) & ~leave

    det = (old > det_dist) & (new <= det_dist)
    detected[:n] = det

    hist[:n, 1:] = hist[:n, :-1]
    hist[:n, 0] = new

    far = new < -ghost_dist
    n_ghost = n if far.all() else int(np.argmin(far))
    return int(cross.sum()), int(det.sum()), n_ghost


def queue_length_numpy(pos, stopped, n, jam, theta_m):
    """Distance to the rear of the last stopped vehicle chained to the stop line.

    The chain starts at the stop line and continues while consecutive inbound
    vehicles are at most two jam spacings apart. Clipped to ``theta_m``.
    """
    inb = np.flatnonzero(pos[:n] >= 0.0)
    if inb.size == 0:
        return 0.0
    p = pos[inb]
    gaps = np.diff(np.concatenate(([0.0], p)))
    broken = np.flatnonzero(gaps > 2.0 * jam)
    end = broken[0] if broken.size else p.size
    chained_stopped = np.flatnonzero(stopped[inb][:end])
    if chained_stopped.size == 0:
        return 0.0
    return min(p[chained_stopped[-1]] + jam, theta_m)


if HAVE_NUMBA:

    @njit(cache=True)
    def _newell_advance_jit(pos, spd, hist, stopped, stops, n, dt, vf, jam, lag_k, lag_f,
                            can_cross, stop_enter, stop_leave, crossed, exit_frac,
                            det_dist, detected, ghost_dist):
        if n == 0:
            return 0, 0, 0
        n_cross = 0
        n_det = 0
        h = hist.shape[1]
        new = np.empty(n)
        for i in range(n):
            old = pos[i]
            x = old - vf * dt
            if i > 0:
                lag = hist[i - 1, lag_k] + vf * dt * lag_f
                if hist[i - 1, lag_k + 1] < lag:
                    lag = hist[i - 1, lag_k + 1]
                if lag + jam > x:
                    x = lag + jam
            if not can_cross and old >= 0.0 and x < 0.0:
                x = 0.0
            if x > old:
                x = old
            new[i] = x
        for i in range(n):
            old = pos[i]
            x = new[i]
            pos[i] = x
            spd[i] = (old - x) / dt
            if old >= 0.0 and x < 0.0:
                crossed[i] = True
                exit_frac[i] = old / (old - x)
                n_cross += 1
            else:
                crossed[i] = False
                exit_frac[i] = 0.0
            if x >= 0.0 and not stopped[i] and spd[i] < stop_enter:
                stopped[i] = True
                stops[i] += 1
            elif stopped[i] and spd[i] > stop_leave:
                stopped[i] = False
            if old > det_dist and x <= det_dist:
                detected[i] = True
                n_det += 1
            else:
                detected[i] = False
            for k in range(h - 1, 0, -1):
                hist[i, k] = hist[i, k - 1]
            hist[i, 0] = x
        n_ghost = 0
        while n_ghost < n and pos[n_ghost] < -ghost_dist:
            n_ghost += 1
        return n_cross, n_det, n_ghost

    @njit(cache=True)
    def _queue_length_jit(pos, stopped, n, jam, theta_m):
        prev = 0.0
        q = 0.0
        for i in range(n):
            p = pos[i]
            if p < 0.0:
                continue
            if p - prev > 2.0 * jam:
                break
            if stopped[i]:
                q = p + jam
            prev = p
        return min(q, theta_m)


if USE_NUMBA:
    newell_advance = _newell_advance_jit
    queue_length = _queue_length_jit
else:
    newell_advance = newell_advance_numpy
    queue_length = queue_length_numpy
