"""Grid-frequency measurement chains.

Two estimators live here:

* :func:`detect_above_threshold` -- a differential detector built from two
  narrow Butterworth bandpasses placed either side of a decision frequency.
  Its output is a per-sample charge-enable flag, not a frequency.
* :func:`estimate_frequency_zc` -- a comparator/timer style estimator that
  timestamps Schmitt-trigger crossings and converts groups of periods into
  frequency estimates.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import signal as sps

from . import _kernels
from .signal import FrequencyTrace, SynthSpec, Waveform, synth_from_trace, synth_tone


class FilterDesignError(ValueError):
    pass


class EstimationError(ValueError):
    pass


# -- filter design -----------------------------------------------------------


def design_bandpass(order: int, low_hz: float, high_hz: float, sample_rate: float) -> np.ndarray:
    """Butterworth bandpass of total ``order`` as second-order sections.

    ``order`` counts poles of the bandpass (twice the lowpass prototype
    order), so ``order=6`` gives three biquads.
    """
    if order < 2 or order % 2:
        raise FilterDesignError(f"bandpass order must be even and >= 2, got {order}")
    if not 0 < low_hz < high_hz < sample_rate / 2:
        raise FilterDesignError(f"invalid band [{low_hz}, {high_hz}] Hz for fs={sample_rate} Hz")
    sos = sps.butter(order // 2, [low_hz, high_hz], btype="bandpass", output="sos", fs=sample_rate)
    _check_stable(sos)
    return sos


def design_lowpass(order: int, cutoff_hz: float, sample_rate: float) -> np.ndarray:
    if not 0 < cutoff_hz < sample_rate / 2:
        raise FilterDesignError(f"invalid cutoff {cutoff_hz} Hz for fs={sample_rate} Hz")
    sos = sps.butter(order, cutoff_hz, btype="lowpass", output="sos", fs=sample_rate)
    _check_stable(sos)
    return sos


def _check_stable(sos: np.ndarray):
    poles = np.concatenate([np.roots(s[3:]) for s in sos])
    r = np.max(np.abs(poles))
    if not r < 1.0:
        raise FilterDesignError(f"designed filter is unstable (max pole radius {r!r})")


def sos_response(sos: np.ndarray, freqs_hz, sample_rate: float) -> np.ndarray:
    """Complex frequency response evaluated directly from the biquad polynomials."""
    z = np.exp(-2j * np.pi * np.asarray(freqs_hz, dtype=np.float64) / sample_rate)
    h = np.ones_like(z)
    for b0, b1, b2, a0, a1, a2 in sos:
        h *= (b0 + b1 * z + b2 * z * z) / (a0 + a1 * z + a2 * z * z)
    return h


# -- differential bandpass detector --------------------------------------------


@dataclass(frozen=True)
class BandpassDetectorConfig:
    """Tuning of the differential detector.

    The two branch bandpasses are centred at ``threshold_hz + offset -/+
    detune_hz`` with width ``branch_bandwidth_hz``; ``calibration_offset_hz``
    is filled in by :func:`calibrate_detector`.
    """

    threshold_hz: float = 50.0
    detune_hz: float = 0.1
    branch_bandwidth_hz: float = 0.2
    prefilter_band: tuple[float, float] = (45.0, 55.0)
    filter_order: int = 6
    envelope_lowpass_hz: float = 1.0
    final_lowpass_hz: float = 0.1
    sample_rate: float = 20_000.0
    settle_time_s: float = 30.0
    calibration_offset_hz: float = 0.0

    def __post_init__(self):
        if not 0 < self.detune_hz < 1:
            raise FilterDesignError("detune_hz must lie in (0, 1) Hz")
        lo, hi = self.prefilter_band
        if not 0 < lo < hi < self.sample_rate / 2:
            raise FilterDesignError("prefilter band must lie inside (0, fs/2)")
        if self.filter_order < 2 or self.filter_order % 2:
            raise FilterDesignError("filter_order must be even and >= 2")
        if not self.branch_bandwidth_hz > 0:
            raise FilterDesignError("branch_bandwidth_hz must be positive")

    @property
    def centres(self) -> tuple[float, float]:
        mid = self.threshold_hz + self.calibration_offset_hz
        return mid - self.detune_hz, mid + self.detune_hz


@dataclass(frozen=True)
class Detection:
    """Per-sample detector output.

    ``enabled`` is False wherever ``settled`` is False; those samples carry
    no decision.
    """

    times: np.ndarray
    enabled: np.ndarray
    settled: np.ndarray
    difference: np.ndarray

    def transitions(self) -> np.ndarray:
        """Sample indices (within the settled region) where the flag changes."""
        idx = np.flatnonzero(self.settled)
        if idx.size < 2:
            return np.empty(0, dtype=np.intp)
        e = self.enabled[idx]
        return idx[1:][e[1:] != e[:-1]]


def _branch(x: np.ndarray, centre: float, cfg: BandpassDetectorConfig, env_sos: np.ndarray) -> np.ndarray:
    half = cfg.branch_bandwidth_hz / 2
    sos = design_bandpass(cfg.filter_order, centre - half, centre + half, cfg.sample_rate)
    y = sps.sosfilt(sos, x)
    # full-wave rectification: sign(y) * y
    np.abs(y, out=y)
    return sps.sosfilt(env_sos, y)


def detect_above_threshold(w: Waveform, cfg: BandpassDetectorConfig) -> Detection:
    fs = cfg.sample_rate
    if not math.isclose(w.sample_rate, fs, rel_tol=1e-9):
        raise ValueError(f"waveform sampled at {w.sample_rate} Hz, detector configured for {fs} Hz")
    settle = int(round(cfg.settle_time_s * fs))
    if len(w) <= settle:
        raise ValueError(f"waveform of {w.duration:.3f} s is not longer than settle time {cfg.settle_time_s} s")

    pre = design_bandpass(cfg.filter_order, *cfg.prefilter_band, fs)
    x = sps.sosfilt(pre, w.samples - np.mean(w.samples[: min(len(w), int(fs))]))
    env = design_lowpass(2, cfg.envelope_lowpass_hz, fs)
    lo_c, hi_c = cfg.centres
    diff = _branch(x, lo_c, cfg, env)
    diff -= _branch(x, hi_c, cfg, env)
    diff = sps.sosfilt(design_lowpass(2, cfg.final_lowpass_hz, fs), diff)

    decision = np.zeros(len(w), dtype=np.int8)
    decision[diff < 0] = 1
    decision[diff > 0] = -1
    decision[:settle] = 0
    # ties keep the previous decision
    if decision[settle] == 0:
        decision[settle] = -1
    idx = np.where(decision != 0, np.arange(decision.size), 0)
    np.maximum.accumulate(idx, out=idx)
    enabled = decision[idx] > 0
    settled = np.zeros(len(w), dtype=bool)
    settled[settle:] = True
    enabled &= settled
    return Detection(w.times, enabled, settled, diff)


def chirp_trace(start_hz: float, stop_hz: float, duration: float) -> FrequencyTrace:
    return FrequencyTrace(np.array([0.0, duration]), np.array([start_hz, stop_hz]))


def switching_frequency(cfg: BandpassDetectorConfig, span_hz: float = 0.2, duration: float = 120.0) -> float:
    """Instantaneous frequency at the first settled off->on switch on a rising chirp."""
    trace = chirp_trace(cfg.threshold_hz - span_hz, cfg.threshold_hz + span_hz, duration)
    det = detect_above_threshold(synth_from_trace(trace, cfg.sample_rate), cfg)
    on = det.transitions()
    on = on[det.enabled[on]]
    if on.size == 0:
        raise EstimationError("detector never switched on during calibration chirp")
    return float(trace.at(det.times[on[0]]))


def calibrate_detector(cfg: BandpassDetectorConfig, span_hz: float = 0.2, duration: float = 120.0,
                       tol_hz: float = 1e-3, max_iter: int = 6) -> BandpassDetectorConfig:
    """Shift the branch centres so a rising chirp switches at ``threshold_hz``.

    The chirp matches the one used for verification (``threshold +/-
    span_hz`` over ``duration`` seconds), so filter group delay at that sweep
    rate is absorbed into the offset.
    """
    for _ in range(max_iter):
        err = cfg.threshold_hz - switching_frequency(cfg, span_hz, duration)
        if abs(err) <= tol_hz:
            return cfg
        cfg = dataclasses.replace(cfg, calibration_offset_hz=cfg.calibration_offset_hz + err)
    err = cfg.threshold_hz - switching_frequency(cfg, span_hz, duration)
    if abs(err) > tol_hz:
        raise EstimationError(f"calibration did not converge (residual {err * 1e3:.2f} mHz)")
    return cfg


# -- zero-crossing estimator -------------------------------------------------


@dataclass(frozen=True)
class ZeroCrossingConfig:
    n_averages: int = 1
    hysteresis_volts: float = 0.0
    timer_tick_s: float = 4e-6
    dc_reference_volts: float = 0.0

    def __post_init__(self):
        if int(self.n_averages) != self.n_averages or self.n_averages < 1:
            raise ValueError("n_averages must be an integer >= 1")
        if self.hysteresis_volts < 0:
            raise ValueError("hysteresis_volts must be non-negative")
        if self.timer_tick_s < 0:
            raise ValueError("timer_tick_s must be non-negative")


@dataclass(frozen=True)
class FrequencyEstimateSeries:
    times: np.ndarray
    frequencies: np.ndarray
    config: ZeroCrossingConfig
    n_crossings: int = 0
    glitches: int = 0

    def __len__(self):
        return self.times.size

    def std(self) -> float:
        return float(np.std(self.frequencies, ddof=1))


def crossing_times(w: Waveform, cfg: ZeroCrossingConfig) -> tuple[np.ndarray, np.ndarray]:
    """Timer readings of Schmitt crossings and their directions (+1 rising)."""
    pos, direction = _kernels.schmitt_crossings(w.samples, float(cfg.dc_reference_volts),
                                                float(cfg.hysteresis_volts))
    t = w.t0 + pos / w.sample_rate
    if cfg.timer_tick_s > 0:
        t = np.floor(t / cfg.timer_tick_s) * cfg.timer_tick_s
    return t, direction


def estimate_frequency_zc(w: Waveform, cfg: ZeroCrossingConfig) -> FrequencyEstimateSeries:
    """Frequency from timestamped rising crossings.

    Each estimate spans ``n_averages`` consecutive periods (disjoint groups);
    its value is ``n_averages / elapsed`` and it is stamped at the closing
    crossing.  With ``n_averages=1`` that is one estimate per period.
    """
    if len(w) < 2:
        raise EstimationError("waveform too short")
    lo, hi = float(np.min(w.samples)), float(np.max(w.samples))
    if not lo < cfg.dc_reference_volts < hi:
        raise EstimationError(f"reference {cfg.dc_reference_volts} V outside signal range [{lo:.4g}, {hi:.4g}] V")
    t, direction = crossing_times(w, cfg)
    rising = t[direction > 0]
    n = int(cfg.n_averages)
    if rising.size < n + 1:
        raise EstimationError(f"only {rising.size} rising crossings, need at least {n + 1}")
    edges = rising[:: n]
    elapsed = np.diff(edges)
    if np.any(elapsed <= 0):
        raise EstimationError("non-increasing crossing timestamps; timer tick too coarse for signal")
    periods = np.diff(rising)
    med = np.median(periods)
    glitches = int(np.count_nonzero(np.abs(periods - med) > 0.25 * med))
    return FrequencyEstimateSeries(edges[1:], n / elapsed, cfg, int(t.size), glitches)


# -- resolution study --------------------------------------------------------


@dataclass(frozen=True)
class ResolutionCell:
    n_averages: int
    amplitude_vpp: float
    std_hz: float
    n_estimates: int


def resolution_study(spec: SynthSpec, cfg: ZeroCrossingConfig, averages_list: Sequence[int],
                     amplitudes_list: Sequence[float], frequency: float = 50.0,
                     sample_rate: float = 20_000.0, min_estimates: int = 200) -> list[ResolutionCell]:
    """Estimator spread on a fixed tone for each (averages, amplitude) pair.

    One tone per amplitude is rendered long enough to give ``min_estimates``
    estimates at the largest averaging count, and every averaging count is
    evaluated on that same recording.
    """
    if min_estimates < 2:
        raise EstimationError("need at least two estimates per cell")
    n_max = max(averages_list)
    periods = min_estimates * n_max + 2
    duration = periods / frequency
    cells = []
    for amp in amplitudes_list:
        tone = synth_tone(frequency, duration, sample_rate, dataclasses.replace(spec, amplitude_vpp=amp))
        for n in averages_list:
            est = estimate_frequency_zc(tone, dataclasses.replace(cfg, n_averages=n))
            if len(est) < min_estimates:
                raise EstimationError(f"cell N={n}, A={amp}: only {len(est)} estimates")
            cells.append(ResolutionCell(int(n), float(amp), est.std(), len(est)))
    return cells


# Resolution-study preset.  The comparator sees the analog signal, so no
# ADC quantizer sits in the timing path; the timer counts 16 MHz clock cycles.
BENCH_CLOCK_TICK_S = 1.0 / 16e6
BENCH_REFERENCE_V = 2.5
BENCH_HYSTERESIS_V = 0.005
BENCH_TARGET_STD_HZ = 2.5e-3
# fitted by calibrate_noise() against BENCH_TARGET_STD_HZ; see tests/test_freqest.py
BENCH_NOISE_SIGMA_V = 1.53e-4


def bench_setup(noise_sigma: float = BENCH_NOISE_SIGMA_V, seed: int = 5) -> tuple[SynthSpec, ZeroCrossingConfig]:
    spec = SynthSpec(amplitude_vpp=1.0, dc_offset=BENCH_REFERENCE_V, noise_sigma=noise_sigma, rng_seed=seed)
    cfg = ZeroCrossingConfig(n_averages=1, hysteresis_volts=BENCH_HYSTERESIS_V,
                             timer_tick_s=BENCH_CLOCK_TICK_S, dc_reference_volts=BENCH_REFERENCE_V)
    return spec, cfg


def calibrate_noise(target_std_hz: float = BENCH_TARGET_STD_HZ, spec: SynthSpec | None = None,
                    cfg: ZeroCrossingConfig | None = None, amplitude_vpp: float = 1.0,
                    duration: float = 40.0, iterations: int = 4) -> float:
    """Noise std (volts) giving ``target_std_hz`` spread at one period per estimate.

    Spread is close to proportional to the noise level, so a few
    proportional updates converge.
    """
    base_spec, base_cfg = bench_setup()
    spec = spec or base_spec
    cfg = dataclasses.replace(cfg or base_cfg, n_averages=1)
    sigma = spec.noise_sigma or 1e-4
    for _ in range(iterations):
        s = dataclasses.replace(spec, noise_sigma=sigma, amplitude_vpp=amplitude_vpp)
        got = estimate_frequency_zc(synth_tone(50.0, duration, 20_000.0, s), cfg).std()
        sigma *= target_std_hz / got
    return sigma
