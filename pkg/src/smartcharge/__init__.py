"""Frequency-responsive smart charging of portable devices.

Grid-frequency estimators, charging policies, a linear battery model and the
closed-loop simulations that tie them together.
"""

__version__ = "0.1.0"

from .battery import PRESETS, BatteryModel, BatteryState, Mode, battery_life, charge_ratio
from .policy import (ControllerState, DualChargeBand, FrequencyHysteresis, HardFrequencyThreshold,
                     MinChargeSupervisor, decide, parse_policy, switch_count)
from .signal import FrequencyTrace, SynthSpec, Waveform, load_trace, quantize, synth_from_trace, synth_tone

__all__ = [
    "PRESETS", "BatteryModel", "BatteryState", "Mode", "battery_life", "charge_ratio",
    "ControllerState", "DualChargeBand", "FrequencyHysteresis", "HardFrequencyThreshold",
    "MinChargeSupervisor", "decide", "parse_policy", "switch_count",
    "FrequencyTrace", "SynthSpec", "Waveform", "load_trace", "quantize", "synth_from_trace", "synth_tone",
]
