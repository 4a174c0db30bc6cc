"""Charging decision rules.

Every policy is a pure transition ``(policy, state, frequency, charge) ->
(enabled, state')``; any memory a policy needs is carried in
:class:`ControllerState`.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from . import _kernels


@dataclass(frozen=True)
class HardFrequencyThreshold:
    threshold_hz: float = 50.0

    def __post_init__(self):
        if not 45.0 <= self.threshold_hz <= 55.0:
            raise ValueError(f"threshold {self.threshold_hz} Hz is not near the 50 Hz nominal")


@dataclass(frozen=True)
class FrequencyHysteresis:
    """Switch on at or above ``on_hz``, off below ``off_hz``, hold in between."""

    on_hz: float = 50.01
    off_hz: float = 49.99

    def __post_init__(self):
        if self.off_hz > self.on_hz:
            raise ValueError("off_hz must not exceed on_hz")


@dataclass(frozen=True)
class MinChargeSupervisor:
    threshold_hz: float = 50.0
    min_charge: float = 0.75

    def __post_init__(self):
        if not 0.0 < self.min_charge < 1.0:
            raise ValueError("min_charge must lie in (0, 1)")


@dataclass(frozen=True)
class DualChargeBand:
    """Force charging from below ``low_charge`` until ``high_charge`` is reached."""

    threshold_hz: float = 50.0
    low_charge: float = 0.75
    high_charge: float = 0.80

    def __post_init__(self):
        if not 0.0 < self.low_charge < self.high_charge < 1.0:
            raise ValueError("need 0 < low_charge < high_charge < 1")


ChargingPolicy = Union[HardFrequencyThreshold, FrequencyHysteresis, MinChargeSupervisor, DualChargeBand]


@dataclass(frozen=True)
class ControllerState:
    last_decision: bool = True
    force_charge: bool = False


def decide(policy: ChargingPolicy, ctl: ControllerState, frequency_hz: float,
           charge: float) -> tuple[bool, ControllerState]:
    if not 0.0 <= charge <= 1.0:
        raise ValueError(f"charge must lie in [0, 1], got {charge}")
    if not np.isfinite(frequency_hz):
        raise ValueError("frequency must be finite")
    latch = ctl.force_charge
    if isinstance(policy, HardFrequencyThreshold):
        on = frequency_hz >= policy.threshold_hz
    elif isinstance(policy, FrequencyHysteresis):
        if frequency_hz >= policy.on_hz:
            on = True
        elif frequency_hz < policy.off_hz:
            on = False
        else:
            on = ctl.last_decision
    elif isinstance(policy, MinChargeSupervisor):
        on = charge < policy.min_charge or frequency_hz >= policy.threshold_hz
    elif isinstance(policy, DualChargeBand):
        if latch and charge >= policy.high_charge:
            latch = False
        elif not latch and charge < policy.low_charge:
            latch = True
        on = latch or frequency_hz >= policy.threshold_hz
    else:
        raise TypeError(f"unknown policy {policy!r}")
    return bool(on), ControllerState(bool(on), bool(latch))


def switch_count(decisions: Sequence[bool]) -> int:
    d = np.asarray(decisions, dtype=bool)
    return int(np.count_nonzero(d[1:] != d[:-1]))


def kernel_params(policy: ChargingPolicy) -> tuple[int, float, float, float]:
    """Flatten a policy into the ``(code, p0, p1, p2)`` form the sim kernel takes."""
    if isinstance(policy, HardFrequencyThreshold):
        return _kernels.POLICY_HARD, policy.threshold_hz, 0.0, 0.0
    if isinstance(policy, FrequencyHysteresis):
        return _kernels.POLICY_HYST, policy.on_hz, policy.off_hz, 0.0
    if isinstance(policy, MinChargeSupervisor):
        return _kernels.POLICY_MINSOC, policy.threshold_hz, policy.min_charge, 0.0
    if isinstance(policy, DualChargeBand):
        return _kernels.POLICY_BAND, policy.threshold_hz, policy.low_charge, policy.high_charge
    raise TypeError(f"unknown policy {policy!r}")


_SPEC_KINDS = {
    "hard": (HardFrequencyThreshold, {"thr": "threshold_hz"}),
    "hyst": (FrequencyHysteresis, {"on": "on_hz", "off": "off_hz"}),
    "minsoc": (MinChargeSupervisor, {"thr": "threshold_hz", "min": "min_charge"}),
    "band": (DualChargeBand, {"thr": "threshold_hz", "low": "low_charge", "high": "high_charge"}),
}


def parse_policy(text: str) -> ChargingPolicy:
    """Parse ``hard:thr=50.0``, ``hyst:on=50.01,off=49.99``, ``minsoc:thr=50,min=0.75``
    or ``band:thr=50,low=0.75,high=0.8``."""
    kind, _, args = text.strip().partition(":")
    if kind not in _SPEC_KINDS:
        raise ValueError(f"unknown policy kind {kind!r} (expected one of {', '.join(_SPEC_KINDS)})")
    cls, names = _SPEC_KINDS[kind]
    kwargs = {}
    for item in filter(None, (a.strip() for a in args.split(","))):
        key, eq, value = item.partition("=")
        if not eq or key.strip() not in names:
            raise ValueError(f"bad policy argument {item!r} for {kind} (keys: {', '.join(names)})")
        try:
            kwargs[names[key.strip()]] = float(value)
        except ValueError:
            raise ValueError(f"policy argument {item!r} is not a number") from None
    return cls(**kwargs)


def format_policy(policy: ChargingPolicy) -> str:
    for kind, (cls, names) in _SPEC_KINDS.items():
        if isinstance(policy, cls):
            args = ",".join(f"{k}={getattr(policy, field)!r}" for k, field in names.items())
            return f"{kind}:{args}"
    raise TypeError(f"unknown policy {policy!r}")
