"""Closed-loop simulation: frequency trace -> charging policy -> battery.

Step ``k`` covers ``[t0 + k*dt, t0 + (k+1)*dt)``.  The policy sees the trace
frequency at the step midpoint and the charge at the start of the step; the
record stores the charge at the end of the step, stamped with the step end
time.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterator, Sequence, TextIO

import numpy as np

from . import _kernels
from .battery import MODES, BatteryModel, Mode
from .policy import ChargingPolicy, ControllerState, HardFrequencyThreshold, kernel_params, switch_count
from .signal import FrequencyTrace, write_columns

HIST_BINS = 50


@dataclass(frozen=True)
class SimConfig:
    trace: FrequencyTrace
    model: BatteryModel
    policy: ChargingPolicy
    dt: float = 1.0
    initial_charge: float = 1.0
    initial_ctl: ControllerState = field(default_factory=ControllerState)

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not 0.0 <= self.initial_charge <= 1.0:
            raise ValueError("initial_charge must lie in [0, 1]")
        if len(self.trace) == 0 or self.trace.duration < self.dt:
            raise ValueError(f"trace shorter than one step of {self.dt} s")


@dataclass(frozen=True)
class SimRecord:
    time_s: float
    frequency_hz: float
    charging_enabled: bool
    charge: float
    mode: Mode


@dataclass(frozen=True)
class SimResult:
    """Column-oriented record sequence of one simulation run."""

    times: np.ndarray
    frequencies: np.ndarray
    enabled: np.ndarray
    charge: np.ndarray
    mode_codes: np.ndarray
    dt: float
    final_ctl: ControllerState

    def __len__(self) -> int:
        return self.times.size

    def __iter__(self) -> Iterator[SimRecord]:
        for k in range(len(self)):
            yield self[k]

    def __getitem__(self, k: int) -> SimRecord:
        return SimRecord(float(self.times[k]), float(self.frequencies[k]), bool(self.enabled[k]),
                         float(self.charge[k]), MODES[self.mode_codes[k]])

    def to_csv(self, out: TextIO):
        write_columns(out, ("time_s", "frequency_hz", "charging", "charge"),
                      (self.times, self.frequencies, self.enabled.astype(np.int8), self.charge),
                      ("%.3f", "%.6f", "%d", "%.9f"))


def step_frequencies(trace: FrequencyTrace, dt: float) -> tuple[np.ndarray, np.ndarray]:
    """End times and midpoint frequencies of every whole step inside the trace."""
    n = int(math.floor(trace.duration / dt + 1e-9))
    k = np.arange(n)
    return trace.start + (k + 1) * dt, trace.at(trace.start + (k + 0.5) * dt)


def run(cfg: SimConfig) -> SimResult:
    times, freqs = step_frequencies(cfg.trace, cfg.dt)
    kind, p0, p1, p2 = kernel_params(cfg.policy)
    enabled, charge, mode, last, latch = _kernels.simulate(
        freqs, float(cfg.dt), float(cfg.model.rate_charge), float(cfg.model.rate_discharge),
        kind, float(p0), float(p1), float(p2), float(cfg.initial_charge),
        bool(cfg.initial_ctl.last_decision), bool(cfg.initial_ctl.force_charge))
    return SimResult(times, freqs, enabled, charge, mode, float(cfg.dt), ControllerState(bool(last), bool(latch)))


@dataclass(frozen=True)
class SweepResult:
    threshold_hz: float
    counts: np.ndarray
    bin_edges: np.ndarray
    mean_charge: float
    min_charge: float
    time_at_zero_frac: float
    switch_count: int


def summarize(threshold_hz: float, res: SimResult, bins: int = HIST_BINS) -> SweepResult:
    counts, edges = np.histogram(res.charge, bins=bins, range=(0.0, 1.0))
    return SweepResult(threshold_hz, counts, edges, float(np.mean(res.charge)), float(np.min(res.charge)),
                       float(np.mean(res.charge == 0.0)), switch_count(res.enabled))


def _map(fn, items, workers: int):
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


def sweep(trace: FrequencyTrace, model: BatteryModel, thresholds: Sequence[float], dt: float = 1.0,
          initial_charge: float = 1.0, workers: int = 1) -> list[SweepResult]:
    """Hard-threshold runs over the same trace, one per threshold, in input order."""
    if len(thresholds) == 0:
        raise ValueError("need at least one threshold")

    def one(thr):
        return summarize(thr, run(SimConfig(trace, model, HardFrequencyThreshold(thr), dt, initial_charge)))

    return _map(one, list(thresholds), workers)


def sweep_to_csv(results: Sequence[SweepResult], hist_out: TextIO, summary_out: TextIO):
    rows = [(r.threshold_hz, lo, hi, c) for r in results
            for lo, hi, c in zip(r.bin_edges[:-1], r.bin_edges[1:], r.counts)]
    cols = list(zip(*rows)) if rows else [(), (), (), ()]
    write_columns(hist_out, ("threshold_hz", "bin_lo", "bin_hi", "count"), cols, ("%.6f", "%.4f", "%.4f", "%d"))
    write_columns(summary_out, ("threshold_hz", "mean_charge", "min_charge", "time_at_zero_frac", "switch_count"),
                  ([r.threshold_hz for r in results], [r.mean_charge for r in results],
                   [r.min_charge for r in results], [r.time_at_zero_frac for r in results],
                   [r.switch_count for r in results]),
                  ("%.6f", "%.6f", "%.6f", "%.6f", "%d"))


@dataclass(frozen=True)
class ModelComparison:
    model: BatteryModel
    result: SimResult
    mean_charge: float
    min_charge: float


def compare_models(trace: FrequencyTrace, models: Sequence[BatteryModel], policy: ChargingPolicy,
                   dt: float = 1.0, initial_charge: float = 1.0, workers: int = 1) -> list[ModelComparison]:
    if len(models) < 2:
        raise ValueError("need at least two models to compare")

    def one(model):
        res = run(SimConfig(trace, model, policy, dt, initial_charge))
        return ModelComparison(model, res, float(np.mean(res.charge)), float(np.min(res.charge)))

    return _map(one, list(models), workers)


# Stationary std of 0.05 Hz with a 5 minute correlation time keeps >99 % of an
# 18 h trace inside the observed 49.85-50.20 Hz band (checked in the tests).
DEFAULT_MEAN_HZ = 50.0
DEFAULT_REVERSION = 1.0 / 300.0
DEFAULT_VOLATILITY = 0.05 * math.sqrt(2.0 / 300.0)
CLAMP_HZ = (49.5, 50.5)


def synth_grid_trace(duration: float, dt: float = 1.0, mean_hz: float = DEFAULT_MEAN_HZ,
                     reversion_rate: float = DEFAULT_REVERSION, volatility: float = DEFAULT_VOLATILITY,
                     seed: int = 0) -> FrequencyTrace:
    """Seeded Ornstein-Uhlenbeck frequency trace sampled every ``dt`` seconds.

    Uses the exact discretization of the OU process, starting at ``mean_hz``;
    output values are clamped to 49.5-50.5 Hz.
    """
    if not duration >= dt > 0:
        raise ValueError("need duration >= dt > 0")
    if not reversion_rate > 0:
        raise ValueError("reversion_rate must be positive")
    if volatility < 0:
        raise ValueError("volatility must be non-negative")
    n = int(math.floor(duration / dt + 1e-9))
    a = math.exp(-reversion_rate * dt)
    scale = volatility * math.sqrt((1.0 - a * a) / (2.0 * reversion_rate))
    eps = np.random.default_rng(seed).standard_normal(n)
    f = _kernels.ou_path(eps, float(mean_hz), float(mean_hz), a, scale)
    return FrequencyTrace(np.arange(n + 1) * dt, np.clip(f, *CLAMP_HZ))


def square_trace(low_hz: float, high_hz: float, half_period: float, cycles: int) -> FrequencyTrace:
    """Frequency alternating between two plateaus, starting low.

    Each plateau is held exactly by placing knots 1 ms apart at the edges.
    """
    times, freqs = [], []
    for k in range(2 * cycles):
        f = low_hz if k % 2 == 0 else high_hz
        t0 = k * half_period
        times += [t0 + (1e-3 if k else 0.0), t0 + half_period]
        freqs += [f, f]
    return FrequencyTrace(np.array(times), np.array(freqs))
