"""Aggregate controllable load of a fleet of smart-charging devices."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import read_kv


@dataclass(frozen=True)
class FleetScenario:
    n_devices: float
    avg_power_w: float = 50.0
    connected_fraction: float = 1.0
    charging_duty: float = 1.0

    def __post_init__(self):
        if self.n_devices < 0 or self.avg_power_w < 0:
            raise ValueError("n_devices and avg_power_w must be non-negative")
        for name in ("connected_fraction", "charging_duty"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")

    @classmethod
    def from_file(cls, path: str | Path) -> FleetScenario:
        kv = read_kv(path)
        fields = ("n_devices", "avg_power_w", "connected_fraction", "charging_duty")
        unknown = set(kv) - set(fields)
        if unknown:
            raise ValueError(f"{path}: unknown keys {sorted(unknown)}")
        return cls(**{k: float(v) for k, v in kv.items()})


# 2/3 of a ~60 million population owning a laptop, half of them plugged in
UK_SCENARIO = FleetScenario(n_devices=40e6, avg_power_w=50.0, connected_fraction=0.5, charging_duty=1.0)


def aggregate_controllable_power(s: FleetScenario) -> float:
    return s.n_devices * s.connected_fraction * s.charging_duty * s.avg_power_w


def duty_from_sim(enabled) -> float:
    """Fraction of simulation steps with charging enabled.

    Accepts a :class:`~smartcharge.sim.SimResult` or any boolean sequence.
    """
    flags = np.asarray(getattr(enabled, "enabled", enabled), dtype=bool)
    if flags.size == 0:
        raise ValueError("no records")
    return float(np.mean(flags))


_PREFIXES = ((1e12, "TW"), (1e9, "GW"), (1e6, "MW"), (1e3, "kW"))


def format_power(watts: float) -> str:
    """``1e9 -> '1.000 GW'``."""
    for scale, unit in _PREFIXES:
        if abs(watts) >= scale:
            return f"{watts / scale:.3f} {unit}"
    return f"{watts:.3f} W"
