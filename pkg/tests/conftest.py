import numpy as np
import pytest

from smartcharge.battery import BatteryState, step
from smartcharge.policy import ControllerState, decide
from smartcharge.sim import step_frequencies


def reference_run(trace, model, policy, dt=1.0, initial_charge=1.0):
    """Step-by-step closed loop built from the public decide/step functions."""
    times, freqs = step_frequencies(trace, dt)
    s, ctl = BatteryState(initial_charge), ControllerState()
    enabled, charge = [], []
    for f in freqs:
        on, ctl = decide(policy, ctl, float(f), s.charge)
        s = step(s, model, on, dt)
        enabled.append(on)
        charge.append(s.charge)
    return times, freqs, np.array(enabled), np.array(charge)


@pytest.fixture
def oracle():
    return reference_run
