"""Sampled AC waveforms and grid-frequency traces.

Waveforms are synthesized either at a fixed frequency or by phase-continuous
FM rendering of a :class:`FrequencyTrace`, optionally with odd harmonics,
white Gaussian noise and a unipolar ADC quantizer.
"""

from __future__ import annotations

import csv
import io
import math
import os
from dataclasses import dataclass
from typing import Iterable, TextIO

import numpy as np


class TraceFormatError(ValueError):
    """Malformed or invalid frequency-trace input."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class AliasingError(ValueError):
    """Requested tone at or above the Nyquist frequency."""


@dataclass(frozen=True)
class Waveform:
    samples: np.ndarray
    sample_rate: float
    t0: float = 0.0

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise ValueError("samples must be one-dimensional")
        if not self.sample_rate > 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        if not np.all(np.isfinite(samples)):
            raise ValueError("samples must be finite")
        samples.flags.writeable = False
        object.__setattr__(self, "samples", samples)

    def __len__(self) -> int:
        return self.samples.size

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate

    @property
    def times(self) -> np.ndarray:
        return self.t0 + np.arange(self.samples.size) / self.sample_rate


@dataclass(frozen=True)
class FrequencyTrace:
    """Timestamped grid frequency, linearly interpolated between points."""

    times: np.ndarray
    frequencies: np.ndarray
    bounds: tuple[float, float] = (40.0, 60.0)

    def __post_init__(self):
        t = np.asarray(self.times, dtype=np.float64)
        f = np.asarray(self.frequencies, dtype=np.float64)
        if t.ndim != 1 or t.shape != f.shape:
            raise ValueError("times and frequencies must be 1-D arrays of equal length")
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(f))):
            raise ValueError("trace values must be finite")
        bad = np.flatnonzero(np.diff(t) <= 0)
        if bad.size:
            raise ValueError(f"trace times must be strictly increasing (point {bad[0] + 1})")
        lo, hi = self.bounds
        out = np.flatnonzero((f < lo) | (f > hi))
        if out.size:
            raise ValueError(f"frequency {f[out[0]]} at point {out[0]} outside [{lo}, {hi}] Hz")
        t.flags.writeable = False
        f.flags.writeable = False
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "frequencies", f)

    def __len__(self) -> int:
        return self.times.size

    @property
    def start(self) -> float:
        return float(self.times[0])

    @property
    def end(self) -> float:
        return float(self.times[-1])

    @property
    def duration(self) -> float:
        return self.end - self.start

    def at(self, t) -> np.ndarray:
        """Frequency at time(s) ``t``; held constant outside the trace."""
        return np.interp(t, self.times, self.frequencies)

    def phase(self, t) -> np.ndarray:
        """Accumulated phase ``2*pi*integral(f)`` from the trace start to ``t``."""
        t = np.asarray(t, dtype=np.float64)
        tk, fk = self.times, self.frequencies
        dtk = np.diff(tk)
        cum = np.concatenate(([0.0], np.cumsum(0.5 * (fk[1:] + fk[:-1]) * dtk)))
        slope = np.append(np.diff(fk) / dtk, 0.0)
        k = np.clip(np.searchsorted(tk, t, side="right") - 1, 0, tk.size - 1)
        tau = t - tk[k]
        # frequency is held (not extrapolated) outside the trace
        s = np.where(tau < 0, 0.0, slope[k])
        return 2.0 * np.pi * (cum[k] + fk[k] * tau + 0.5 * s * tau * tau)


@dataclass(frozen=True)
class SynthSpec:
    """Rendering options shared by the synthesis functions.

    ``harmonic_levels[i]`` is the amplitude of odd harmonic ``2*i + 3``
    relative to the fundamental.  ``phase`` is the starting phase of the
    fundamental in radians.
    """

    amplitude_vpp: float = 1.0
    dc_offset: float = 0.0
    noise_sigma: float = 0.0
    harmonic_levels: tuple[float, ...] = ()
    quantizer_bits: int | None = None
    quantizer_range: float = 5.0
    rng_seed: int = 0
    phase: float = 0.0

    def __post_init__(self):
        if not self.amplitude_vpp > 0:
            raise ValueError("amplitude_vpp must be positive")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be non-negative")
        if any(h < 0 for h in self.harmonic_levels):
            raise ValueError("harmonic levels must be non-negative")
        object.__setattr__(self, "harmonic_levels", tuple(float(h) for h in self.harmonic_levels))
        if self.quantizer_bits is not None:
            _check_quantizer(self.quantizer_bits, self.quantizer_range)


def _render(phase: np.ndarray, sample_rate: float, spec: SynthSpec, t0: float) -> Waveform:
    amp = spec.amplitude_vpp / 2.0
    x = np.sin(phase)
    for i, level in enumerate(spec.harmonic_levels):
        if level:
            x += level * np.sin((2 * i + 3) * phase)
    x *= amp
    x += spec.dc_offset
    if spec.noise_sigma > 0:
        rng = np.random.default_rng(spec.rng_seed)
        x += rng.normal(0.0, spec.noise_sigma, size=x.size)
    w = Waveform(x, sample_rate, t0)
    if spec.quantizer_bits is not None:
        w = quantize(w, spec.quantizer_bits, spec.quantizer_range)
    return w


def _check_nyquist(frequency, sample_rate, spec: SynthSpec):
    fmax = float(np.max(frequency))
    if not fmax < sample_rate / 2:
        raise AliasingError(f"frequency {fmax} Hz at or above Nyquist ({sample_rate / 2} Hz)")
    orders = [2 * i + 3 for i, level in enumerate(spec.harmonic_levels) if level]
    top = fmax * max(orders, default=1)
    if not top < sample_rate / 2:
        raise AliasingError(f"harmonic at {top} Hz at or above Nyquist ({sample_rate / 2} Hz)")


def synth_tone(frequency: float, duration: float, sample_rate: float, spec: SynthSpec = SynthSpec()) -> Waveform:
    """Constant-frequency tone of ``round(duration * sample_rate)`` samples."""
    if not frequency > 0:
        raise ValueError("frequency must be positive")
    if not duration > 0:
        raise ValueError("duration must be positive")
    _check_nyquist(frequency, sample_rate, spec)
    n = int(round(duration * sample_rate))
    t = np.arange(n) / sample_rate
    return _render(2.0 * np.pi * frequency * t + spec.phase, sample_rate, spec, 0.0)


def synth_from_trace(trace: FrequencyTrace, sample_rate: float, spec: SynthSpec = SynthSpec()) -> Waveform:
    """Phase-continuous FM rendering of ``trace`` over its time span."""
    if len(trace) == 0:
        raise ValueError("empty trace")
    if not trace.duration > 0:
        raise ValueError("trace must cover a positive duration")
    _check_nyquist(trace.frequencies, sample_rate, spec)
    n = int(round(trace.duration * sample_rate))
    t = trace.start + np.arange(n) / sample_rate
    return _render(trace.phase(t) + spec.phase, sample_rate, spec, trace.start)


def _check_quantizer(bits, full_scale):
    if not (isinstance(bits, (int, np.integer)) and 1 <= bits <= 32):
        raise ValueError(f"bits must be an integer in [1, 32], got {bits!r}")
    if not full_scale > 0:
        raise ValueError("full_scale must be positive")


def quantize(w: Waveform, bits: int, full_scale: float) -> Waveform:
    """Uniform mid-rise quantizer on ``[0, full_scale]`` with clamping."""
    _check_quantizer(bits, full_scale)
    levels = 2 ** int(bits)
    step = full_scale / levels
    code = np.clip(np.floor(w.samples / step), 0, levels - 1)
    return Waveform((code + 0.5) * step, w.sample_rate, w.t0)


def _text_source(src):
    if isinstance(src, os.PathLike):
        with open(src, encoding="utf-8", newline="") as fh:
            return io.StringIO(fh.read(), newline=None)
    if isinstance(src, str):
        return io.StringIO(src)
    return src


def load_trace(text: str | os.PathLike | TextIO, bounds: tuple[float, float] = (40.0, 60.0)) -> FrequencyTrace:
    """Parse a ``time_s,frequency_hz`` CSV given as text, a path or a stream.

    A plain ``str`` is taken as CSV content.  Errors name the 1-based line.
    """
    text = _text_source(text)
    reader = csv.reader(text)
    header = next(reader, None)
    if header is None:
        raise TraceFormatError("empty input", 1)
    if [h.strip().lstrip("﻿") for h in header] != ["time_s", "frequency_hz"]:
        raise TraceFormatError(f"expected header 'time_s,frequency_hz', got {','.join(header)!r}", 1)
    times: list[float] = []
    freqs: list[float] = []
    lo, hi = bounds
    for row in reader:
        line = reader.line_num
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 2:
            raise TraceFormatError(f"expected 2 fields, got {len(row)}", line)
        try:
            t, f = float(row[0]), float(row[1])
        except ValueError:
            raise TraceFormatError(f"cannot parse {','.join(row)!r} as numbers", line) from None
        if not (math.isfinite(t) and math.isfinite(f)):
            raise TraceFormatError("non-finite value", line)
        if times and t <= times[-1]:
            raise TraceFormatError(f"time {t} not after previous time {times[-1]}", line)
        if not lo <= f <= hi:
            raise TraceFormatError(f"frequency {f} outside [{lo}, {hi}] Hz", line)
        times.append(t)
        freqs.append(f)
    if not times:
        raise TraceFormatError("no data rows", reader.line_num or 1)
    return FrequencyTrace(np.array(times), np.array(freqs), bounds)


def write_columns(out: TextIO, header: Iterable[str], columns: Iterable[np.ndarray], fmt: Iterable[str]):
    """Write equal-length columns as CSV with LF line endings."""
    out.write(",".join(header) + "\n")
    cols = [np.asarray(c) for c in columns]
    if not cols or cols[0].size == 0:
        return
    np.savetxt(out, np.column_stack(cols), fmt=list(fmt), delimiter=",", newline="\n")


def dump_trace(trace: FrequencyTrace, out: TextIO):
    write_columns(out, ("time_s", "frequency_hz"), (trace.times, trace.frequencies), ("%.6f", "%.6f"))


def dump_waveform(w: Waveform, out: TextIO):
    write_columns(out, ("time_s", "volts"), (w.times, w.samples), ("%.8f", "%.9g"))


def load_waveform(text: str | os.PathLike | TextIO) -> Waveform:
    """Read a ``time_s,volts`` CSV written by :func:`dump_waveform`."""
    text = _text_source(text)
    header = text.readline().strip().lstrip("﻿")
    if header != "time_s,volts":
        raise TraceFormatError(f"expected header 'time_s,volts', got {header!r}", 1)
    try:
        data = np.loadtxt(text, delimiter=",", ndmin=2)
    except ValueError as exc:
        raise TraceFormatError(str(exc)) from None
    if data.shape[0] < 2 or data.shape[1] != 2:
        raise TraceFormatError("need at least two rows of time_s,volts")
    dt = np.diff(data[:, 0])
    if np.any(dt <= 0):
        raise TraceFormatError("time_s must be strictly increasing")
    sample_rate = 1.0 / float(np.mean(dt))
    # round to the nearest millihertz to undo text rounding of the timestamps
    sample_rate = round(sample_rate, 3)
    return Waveform(data[:, 1], sample_rate, float(data[0, 0]))
