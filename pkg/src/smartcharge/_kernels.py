"""Hot inner loops with a numba path and a pure-numpy fallback.

Set ``SMARTCHARGE_DISABLE_NUMBA=1`` to force the numpy path (also used
automatically when numba cannot be imported).  Both paths produce identical
results; ``tests/test_kernels.py`` checks this and
``benchmarks/bench_kernels.py`` compares their speed.
"""

from __future__ import annotations

import os

import numpy as np
from scipy.signal import lfilter

_DISABLED = os.environ.get("SMARTCHARGE_DISABLE_NUMBA", "").strip().lower() in {"1", "true", "yes", "on"}

try:
    if _DISABLED:
        raise ImportError
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - depends on environment
    HAVE_NUMBA = False

# policy codes shared with smartcharge.policy
POLICY_HARD = 0
POLICY_HYST = 1
POLICY_MINSOC = 2
POLICY_BAND = 3

# battery modes, stored as int8 in kernel outputs
MODE_CHARGING = 0
MODE_DISCHARGING = 1
MODE_TRICKLE = 2


# -- Schmitt-trigger crossing detection ------------------------------------


def schmitt_crossings_numpy(x, ref, hyst):
    """Vectorized Schmitt trigger.

    Returns ``(positions, directions)`` where ``positions`` are fractional
    sample indices at which the signal crossed ``ref + hyst`` going up
    (direction +1) or ``ref - hyst`` going down (direction -1).  The first
    excursion outside the band only sets the initial state and is not
    reported.
    """
    d = np.asarray(x, dtype=np.float64) - ref
    n = d.size
    label = np.zeros(n, dtype=np.int8)
    label[d > hyst] = 1
    label[d < -hyst] = -1
    idx = np.where(label != 0, np.arange(n), 0)
    np.maximum.accumulate(idx, out=idx)
    state = label[idx]
    # samples before the first excursion carry label[0]; mask them out
    state[: np.argmax(label != 0)] = 0
    switch = np.flatnonzero((state[1:] != state[:-1]) & (state[:-1] != 0)) + 1
    direction = state[switch].astype(np.int8)
    level = np.where(direction > 0, hyst, -hyst)
    d0 = d[switch - 1]
    d1 = d[switch]
    pos = (switch - 1) + (level - d0) / (d1 - d0)
    return pos, direction


def _schmitt_crossings_loop(x, ref, hyst):
    n = x.shape[0]
    pos = np.empty(n, dtype=np.float64)
    direction = np.empty(n, dtype=np.int8)
    count = 0
    state = 0
    for i in range(n):
        d = x[i] - ref
        if state <= 0 and d > hyst:
            if state < 0:
                d0 = x[i - 1] - ref
                pos[count] = (i - 1) + (hyst - d0) / (d - d0)
                direction[count] = 1
                count += 1
            state = 1
        elif state >= 0 and d < -hyst:
            if state > 0:
                d0 = x[i - 1] - ref
                pos[count] = (i - 1) + (-hyst - d0) / (d - d0)
                direction[count] = -1
                count += 1
            state = -1
    return pos[:count], direction[:count]


# -- closed-loop charge simulation ------------------------------------------


def _simulate_loop(freqs, dt, rate_charge, rate_discharge, kind, p0, p1, p2,
                   charge0, last0, latch0):
    n = freqs.shape[0]
    enabled = np.empty(n, dtype=np.bool_)
    charge = np.empty(n, dtype=np.float64)
    mode = np.empty(n, dtype=np.int8)
    up = dt * rate_charge / 100.0
    down = dt * rate_discharge / 100.0
    c = charge0
    last = last0
    latch = latch0
    for k in range(n):
        f = freqs[k]
        if kind == 0:
            on = f >= p0
        elif kind == 1:
            if f >= p0:
                on = True
            elif f < p1:
                on = False
            else:
                on = last
        elif kind == 2:
            on = c < p1 or f >= p0
        else:
            if latch:
                if c >= p2:
                    latch = False
            elif c < p1:
                latch = True
            on = latch or f >= p0
        last = on
        if on:
            c = c + up
            if c >= 1.0:
                c = 1.0
                mode[k] = 2
            else:
                mode[k] = 0
        else:
            c = c - down
            if c < 0.0:
                c = 0.0
            mode[k] = 1
        enabled[k] = on
        charge[k] = c
    return enabled, charge, mode, last, latch


# -- mean-reverting (OU) path ------------------------------------------------


def _ou_loop(eps, x0, mean, a, scale):
    n = eps.shape[0]
    out = np.empty(n + 1, dtype=np.float64)
    x = x0
    out[0] = x
    for k in range(n):
        x = mean + a * (x - mean) + scale * eps[k]
        out[k + 1] = x
    return out


def ou_path_numpy(eps, x0, mean, a, scale):
    dev = lfilter([scale], [1.0, -a], eps, zi=[a * (x0 - mean)])[0]
    return np.concatenate(([x0], mean + dev))


if HAVE_NUMBA:
    schmitt_crossings_numba = njit(cache=True, nogil=True)(_schmitt_crossings_loop)
    simulate_numba = njit(cache=True, nogil=True)(_simulate_loop)
    ou_path_numba = njit(cache=True, nogil=True)(_ou_loop)
    schmitt_crossings = schmitt_crossings_numba
    simulate = simulate_numba
    ou_path = ou_path_numba
else:  # pragma: no cover - exercised with SMARTCHARGE_DISABLE_NUMBA=1
    schmitt_crossings = schmitt_crossings_numpy
    simulate = _simulate_loop
    ou_path = ou_path_numpy

simulate_python = _simulate_loop
