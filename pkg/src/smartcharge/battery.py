"""Linear charge/discharge battery model.

Rates are in percentage points per second, as measured on the two test
laptops.  Charge is a fraction in ``[0, 1]``.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from pathlib import Path


class Mode(str, Enum):
    CHARGING = "charging"
    DISCHARGING = "discharging"
    TRICKLE = "trickle"


# index order matches the int8 mode codes emitted by the simulation kernel
MODES = (Mode.CHARGING, Mode.DISCHARGING, Mode.TRICKLE)


@dataclass(frozen=True)
class BatteryModel:
    rate_charge: float
    rate_discharge: float
    name: str = "custom"

    def __post_init__(self):
        if not (self.rate_charge > 0 and self.rate_discharge > 0):
            raise ValueError("charge and discharge rates must be positive")


@dataclass(frozen=True)
class BatteryState:
    charge: float = 1.0
    mode: Mode = Mode.DISCHARGING

    def __post_init__(self):
        if not 0.0 <= self.charge <= 1.0:
            raise ValueError(f"charge must lie in [0, 1], got {self.charge}")
        if self.mode is Mode.TRICKLE and self.charge != 1.0:
            raise ValueError("trickle mode requires a full battery")


PRESETS = {
    "laptop1": BatteryModel(0.0213, 0.0115, "laptop1"),  # Dell E5520
    "laptop2": BatteryModel(0.0128, 0.0056, "laptop2"),  # MacBook Pro
}


def get_model(name_or_path: str) -> BatteryModel:
    """Resolve a preset name or a key-value file with ``rate_charge``/``rate_discharge``."""
    if name_or_path in PRESETS:
        return PRESETS[name_or_path]
    path = Path(name_or_path)
    if not path.is_file():
        raise ValueError(f"unknown battery model {name_or_path!r} (presets: {', '.join(PRESETS)})")
    from .config import read_kv

    kv = read_kv(path)
    try:
        return BatteryModel(float(kv["rate_charge"]), float(kv["rate_discharge"]), kv.get("name", path.stem))
    except KeyError as exc:
        raise ValueError(f"{path}: missing key {exc.args[0]}") from None


def step(state: BatteryState, model: BatteryModel, charging_enabled: bool, dt: float = 1.0) -> BatteryState:
    if not dt > 0:
        raise ValueError("dt must be positive")
    if charging_enabled:
        c = min(1.0, state.charge + dt * model.rate_charge / 100.0)
        return BatteryState(c, Mode.TRICKLE if c == 1.0 else Mode.CHARGING)
    return BatteryState(max(0.0, state.charge - dt * model.rate_discharge / 100.0), Mode.DISCHARGING)


def battery_life(model: BatteryModel) -> float:
    """Seconds from full to empty under the constant operating load."""
    return 100.0 / model.rate_discharge


def charge_ratio(model: BatteryModel) -> float:
    return model.rate_charge / model.rate_discharge
