"""``smartcharge`` command-line interface.

Every data-producing command writes its outputs plus ``manifest.json`` into
``--out``.  ``smartcharge replay manifest.json --out DIR`` re-runs the
recorded command with the recorded parameters and must reproduce the data
files byte for byte.

Exit codes: 0 success, 2 usage error, 3 input data error, 4 numerical or
configuration error.  Failures print one ``smartcharge: error ...`` line to
stderr and leave no output files behind.
"""

from __future__ import annotations

import dataclasses
import functools
import hashlib
import json
import os
import shutil
import sys
import tempfile
from pathlib import Path
from typing import Callable

import click
import numpy as np

from . import __version__, battery, fleet, freqest, policy, sim
from .config import ConfigError, read_kv
from .signal import (FrequencyTrace, SynthSpec, TraceFormatError, dump_trace, dump_waveform, load_trace,
                     load_waveform, synth_from_trace, synth_tone, write_columns)

EXIT_USAGE = 2
EXIT_INPUT = 3
EXIT_NUMERIC = 4


class InputDataError(Exception):
    pass


# -- helpers -----------------------------------------------------------------


def _floats(ctx, param, value):
    if value is None or isinstance(value, (list, tuple)):
        return value
    try:
        return [float(v) for v in str(value).split(",") if v.strip()]
    except ValueError:
        raise click.BadParameter(f"expected comma-separated numbers, got {value!r}") from None


def _ints(ctx, param, value):
    if value is None or isinstance(value, (list, tuple)):
        return value
    try:
        return [int(float(v)) for v in str(value).split(",") if v.strip()]
    except ValueError:
        raise click.BadParameter(f"expected comma-separated integers, got {value!r}") from None


def _policy(ctx, param, value):
    try:
        policy.parse_policy(value)
    except (ValueError, TypeError) as exc:
        raise click.BadParameter(str(exc)) from None
    return value


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _read_trace(path: str) -> FrequencyTrace:
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            return load_trace(fh)
    except OSError as exc:
        raise InputDataError(f"cannot read trace {path}: {exc.strerror}") from None


def _read_waveform(path: str):
    try:
        with open(path, encoding="utf-8") as fh:
            return load_waveform(fh)
    except OSError as exc:
        raise InputDataError(f"cannot read waveform {path}: {exc.strerror}") from None


class _Outputs:
    """Collects output files in a staging directory next to the final one."""

    def __init__(self, out: Path):
        self.out = out
        out.parent.mkdir(parents=True, exist_ok=True)
        self.stage = Path(tempfile.mkdtemp(prefix=".stage-", dir=out.parent))
        self.names: list[str] = []

    def open(self, name: str):
        self.names.append(name)
        return open(self.stage / name, "w", encoding="utf-8", newline="")

    def write_json(self, name: str, obj):
        with self.open(name) as fh:
            json.dump(obj, fh, indent=2, sort_keys=True)
            fh.write("\n")

    def commit(self):
        self.out.mkdir(parents=True, exist_ok=True)
        for name in self.names:
            os.replace(self.stage / name, self.out / name)
        shutil.rmtree(self.stage, ignore_errors=True)

    def abort(self):
        shutil.rmtree(self.stage, ignore_errors=True)


# -- command bodies ------------------------------------------------------------
#
# Each body takes the fully resolved parameter dict and an _Outputs sink and
# returns the input files it read.  Replay calls these directly.


def _run_gridtrace(p, out: _Outputs):
    trace = sim.synth_grid_trace(p["duration"], p["dt"], p["mean"], p["reversion"], p["volatility"], p["seed"])
    with out.open("trace.csv") as fh:
        dump_trace(trace, fh)
    return []


def _synth_spec(p) -> SynthSpec:
    return SynthSpec(amplitude_vpp=p["amplitude"], dc_offset=p["offset"], noise_sigma=p["noise"],
                     harmonic_levels=tuple(p["harmonics"]), quantizer_bits=p["bits"],
                     quantizer_range=p["full_scale"], rng_seed=p["seed"])


def _run_synth(p, out: _Outputs):
    spec = _synth_spec(p)
    if p["trace"]:
        w = synth_from_trace(_read_trace(p["trace"]), p["sample_rate"], spec)
        inputs = [p["trace"]]
    else:
        if p["frequency"] is None:
            raise click.UsageError("synth needs --frequency or --trace")
        w = synth_tone(p["frequency"], p["duration"], p["sample_rate"], spec)
        inputs = []
    with out.open("waveform.csv") as fh:
        dump_waveform(w, fh)
    return inputs


def _run_estimate(p, out: _Outputs):
    w = _read_waveform(p["waveform"])
    cfg = freqest.ZeroCrossingConfig(p["averages"], p["hysteresis"], p["tick"], p["reference"])
    est = freqest.estimate_frequency_zc(w, cfg)
    with out.open("estimates.csv") as fh:
        write_columns(fh, ("time_s", "frequency_hz"), (est.times, est.frequencies), ("%.9f", "%.9f"))
    out.write_json("summary.json", {
        "n_estimates": len(est), "n_crossings": est.n_crossings, "glitches": est.glitches,
        "mean_hz": float(np.mean(est.frequencies)),
        "std_hz": est.std() if len(est) > 1 else None,
    })
    return [p["waveform"]]


def _run_detect(p, out: _Outputs):
    cfg = freqest.BandpassDetectorConfig(threshold_hz=p["threshold"], detune_hz=p["detune"],
                                         branch_bandwidth_hz=p["bandwidth"], sample_rate=p["sample_rate"],
                                         settle_time_s=p["settle"])
    if p["calibrate"]:
        cfg = freqest.calibrate_detector(cfg)
    trace = None
    inputs = []
    if p["waveform"]:
        w = _read_waveform(p["waveform"])
        inputs.append(p["waveform"])
    else:
        if p["trace"]:
            trace = _read_trace(p["trace"])
            inputs.append(p["trace"])
        elif p["chirp"]:
            if len(p["chirp"]) != 3:
                raise click.UsageError("--chirp takes START,STOP,DURATION")
            trace = freqest.chirp_trace(*p["chirp"])
        else:
            raise click.UsageError("detect needs --waveform, --trace or --chirp")
        w = synth_from_trace(trace, cfg.sample_rate)
    det = freqest.detect_above_threshold(w, cfg)
    every = max(1, p["every"])
    with out.open("detection.csv") as fh:
        write_columns(fh, ("time_s", "enabled", "settled"),
                      (det.times[::every], det.enabled[::every].astype(np.int8), det.settled[::every].astype(np.int8)),
                      ("%.5f", "%d", "%d"))
    switches = []
    for i in det.transitions():
        item = {"time_s": float(det.times[i]), "enabled": bool(det.enabled[i])}
        if trace is not None:
            item["frequency_hz"] = float(trace.at(det.times[i]))
        switches.append(item)
    out.write_json("summary.json", {"calibration_offset_hz": cfg.calibration_offset_hz,
                                    "settled_on_fraction": float(np.mean(det.enabled[det.settled])),
                                    "transitions": switches})
    return inputs


def _sim_summary(res: sim.SimResult) -> dict:
    return {"steps": len(res), "mean_charge": float(np.mean(res.charge)), "min_charge": float(np.min(res.charge)),
            "final_charge": float(res.charge[-1]), "duty": fleet.duty_from_sim(res),
            "switch_count": policy.switch_count(res.enabled),
            "time_at_zero_frac": float(np.mean(res.charge == 0.0))}


def _run_simulate(p, out: _Outputs):
    trace = _read_trace(p["trace"])
    cfg = sim.SimConfig(trace, battery.get_model(p["model"]), policy.parse_policy(p["policy"]), p["dt"],
                        p["initial_charge"])
    res = sim.run(cfg)
    with out.open("records.csv") as fh:
        res.to_csv(fh)
    out.write_json("summary.json", _sim_summary(res))
    return [p["trace"]] + ([p["model"]] if Path(p["model"]).is_file() else [])


def _run_sweep(p, out: _Outputs):
    trace = _read_trace(p["trace"])
    results = sim.sweep(trace, battery.get_model(p["model"]), p["thresholds"], p["dt"], p["initial_charge"],
                        workers=p["workers"])
    with out.open("histogram.csv") as hist, out.open("summary.csv") as summary:
        sim.sweep_to_csv(results, hist, summary)
    return [p["trace"]]


def _run_compare(p, out: _Outputs):
    trace = _read_trace(p["trace"])
    models = [battery.get_model(m) for m in p["models"]]
    if len({m.name for m in models}) != len(models):
        raise ValueError("model names must be distinct")
    rows = sim.compare_models(trace, models, policy.parse_policy(p["policy"]), p["dt"], p["initial_charge"],
                              workers=p["workers"])
    for row in rows:
        with out.open(f"records_{row.model.name}.csv") as fh:
            row.result.to_csv(fh)
    with out.open("summary.csv") as fh:
        write_columns(fh, ("model", "rate_charge", "rate_discharge", "mean_charge", "min_charge"),
                      ([r.model.name for r in rows], [r.model.rate_charge for r in rows],
                       [r.model.rate_discharge for r in rows], [r.mean_charge for r in rows],
                       [r.min_charge for r in rows]),
                      ("%s", "%s", "%s", "%s", "%s"))
    return [p["trace"]]


def _run_fleet(p, out: _Outputs | None):
    duty = p["duty"]
    inputs = []
    if p["from_sim"]:
        try:
            data = np.loadtxt(p["from_sim"], delimiter=",", skiprows=1, ndmin=2)
        except (OSError, ValueError) as exc:
            raise InputDataError(f"cannot read records {p['from_sim']}: {exc}") from None
        duty = fleet.duty_from_sim(data[:, 2] > 0.5)
        inputs.append(p["from_sim"])
    scenario = fleet.FleetScenario(p["devices"], p["power"], p["connected"], duty)
    watts = fleet.aggregate_controllable_power(scenario)
    text = fleet.format_power(watts)
    click.echo(text)
    if out is not None:
        out.write_json("fleet.json", {**dataclasses.asdict(scenario), "power_w": watts, "formatted": text})
    return inputs


def _run_resolution(p, out: _Outputs):
    spec, cfg = freqest.bench_setup(noise_sigma=p["noise"], seed=p["seed"])
    cfg = dataclasses.replace(cfg, timer_tick_s=p["tick"], hysteresis_volts=p["hysteresis"])
    cells = freqest.resolution_study(spec, cfg, p["averages"], p["amplitudes"], min_estimates=p["min_estimates"])
    with out.open("resolution.csv") as fh:
        write_columns(fh, ("n_averages", "amplitude_vpp", "std_hz"),
                      ([c.n_averages for c in cells], [c.amplitude_vpp for c in cells], [c.std_hz for c in cells]),
                      ("%d", "%.4f", "%.9e"))
    return []


COMMANDS: dict[str, Callable] = {
    "gridtrace": _run_gridtrace, "synth": _run_synth, "estimate": _run_estimate, "detect": _run_detect,
    "simulate": _run_simulate, "sweep": _run_sweep, "compare": _run_compare, "fleet": _run_fleet,
    "resolution": _run_resolution,
}


def _error(code: int, exc: BaseException):
    msg = " ".join(str(exc).split()) or type(exc).__name__
    click.echo(f"smartcharge: error code={code} kind={type(exc).__name__} msg={msg}", err=True)
    sys.exit(code)


def _execute(name: str, params: dict, out_dir: str | None):
    out = _Outputs(Path(out_dir)) if out_dir is not None else None
    try:
        inputs = COMMANDS[name](params, out)
        if out is not None:
            manifest = {
                "command": name,
                "params": params,
                "seeds": {k: v for k, v in params.items() if k == "seed"},
                "inputs": {str(i): _sha256(Path(i)) for i in inputs},
                "outputs": sorted(out.names),
                "version": __version__,
            }
            out.write_json("manifest.json", manifest)
            out.commit()
    except click.UsageError:
        if out is not None:
            out.abort()
        raise
    except (InputDataError, TraceFormatError, OSError) as exc:
        if out is not None:
            out.abort()
        _error(EXIT_INPUT, exc)
    except (ValueError, ArithmeticError, TypeError, ConfigError) as exc:
        if out is not None:
            out.abort()
        _error(EXIT_NUMERIC, exc)
    except BaseException:
        if out is not None:
            out.abort()
        raise


def _command(name: str):
    """Register ``name``: merge ``--config`` defaults and run through :func:`_execute`."""

    def wrap(fn):
        @main.command(name, help=fn.__doc__)
        @click.option("--config", "config_path", type=click.Path(dir_okay=False),
                      help="key = value file supplying defaults for any option.")
        @functools.wraps(fn)
        @click.pass_context
        def cmd(ctx, config_path, **params):
            if config_path:
                try:
                    kv = read_kv(config_path)
                except OSError as exc:
                    _error(EXIT_INPUT, exc)
                except ConfigError as exc:
                    _error(EXIT_NUMERIC, exc)
                by_name = {p.name: p for p in ctx.command.params}
                for key, raw in kv.items():
                    if key not in params or key == "out":
                        _error(EXIT_NUMERIC, ConfigError(f"{config_path}: unknown key {key!r} for {name}"))
                    if ctx.get_parameter_source(key) is click.core.ParameterSource.DEFAULT:
                        try:
                            params[key] = by_name[key].process_value(ctx, raw)
                        except click.BadParameter as exc:
                            _error(EXIT_NUMERIC, ConfigError(f"{config_path}: {key}: {exc.message}"))
            # absolute input paths keep manifests replayable from any directory
            for param in ctx.command.params:
                value = params.get(param.name)
                if param.name != "out" and isinstance(param.type, click.Path) and value:
                    params[param.name] = str(Path(value).resolve())
            if params.get("model") and Path(params["model"]).is_file():
                params["model"] = str(Path(params["model"]).resolve())
            out = params.pop("out", None)
            _execute(name, params, out)

        return cmd

    return wrap


class _Group(click.Group):
    """Group that reports usage errors on a single line with exit code 2."""

    def main(self, args=None, prog_name=None, **extra):
        try:
            return super().main(args, prog_name, standalone_mode=False, **extra)
        except click.UsageError as exc:
            cmd = f" {exc.ctx.info_name}" if exc.ctx is not None else ""
            msg = " ".join(exc.format_message().split())
            click.echo(f"smartcharge{cmd}: error code={EXIT_USAGE} kind=UsageError msg={msg}", err=True)
            sys.exit(EXIT_USAGE)
        except click.exceptions.Abort:
            click.echo("Aborted!", err=True)
            sys.exit(1)


@click.group(cls=_Group)
@click.version_option(__version__, prog_name="smartcharge")
def main():
    """Frequency-responsive charging: estimators, policies and simulations."""


_out = click.option("--out", type=click.Path(file_okay=False), default="out", show_default=True,
                    help="Output directory.")
_seed = click.option("--seed", type=int, default=0, show_default=True)


@_command("gridtrace")
@click.option("--duration", type=float, default=18 * 3600.0, show_default=True, help="Seconds.")
@click.option("--dt", type=float, default=1.0, show_default=True)
@click.option("--mean", type=float, default=sim.DEFAULT_MEAN_HZ, show_default=True)
@click.option("--reversion", type=float, default=sim.DEFAULT_REVERSION, show_default=True, help="1/s.")
@click.option("--volatility", type=float, default=sim.DEFAULT_VOLATILITY, show_default=True, help="Hz/sqrt(s).")
@_seed
@_out
def gridtrace(**kw):
    """Write a seeded mean-reverting grid-frequency trace (trace.csv)."""


@_command("synth")
@click.option("--frequency", type=float, default=None, help="Tone frequency in Hz.")
@click.option("--trace", type=click.Path(dir_okay=False), default=None, help="FM-render this trace instead.")
@click.option("--duration", type=float, default=1.0, show_default=True)
@click.option("--sample-rate", type=float, default=20_000.0, show_default=True)
@click.option("--amplitude", type=float, default=1.0, show_default=True, help="Volts peak-to-peak.")
@click.option("--offset", type=float, default=0.0, show_default=True, help="DC offset in volts.")
@click.option("--noise", type=float, default=0.0, show_default=True, help="Noise std in volts.")
@click.option("--harmonics", default="", callback=_floats, help="Relative levels of harmonics 3,5,7,...")
@click.option("--bits", type=click.IntRange(1, 32), default=None, help="ADC word length.")
@click.option("--full-scale", type=float, default=5.0, show_default=True)
@_seed
@_out
def synth(**kw):
    """Synthesize a sampled waveform (waveform.csv)."""


@_command("estimate")
@click.option("--waveform", type=click.Path(dir_okay=False), required=True)
@click.option("--averages", type=click.IntRange(1), default=1, show_default=True)
@click.option("--hysteresis", type=float, default=0.0, show_default=True, help="Schmitt offset in volts.")
@click.option("--tick", type=float, default=4e-6, show_default=True, help="Timer tick in seconds.")
@click.option("--reference", type=float, default=0.0, show_default=True, help="Comparator reference in volts.")
@_out
def estimate(**kw):
    """Zero-crossing frequency estimates of a waveform (estimates.csv)."""


@_command("detect")
@click.option("--waveform", type=click.Path(dir_okay=False), default=None)
@click.option("--trace", type=click.Path(dir_okay=False), default=None)
@click.option("--chirp", default=None, callback=_floats, help="START,STOP,DURATION of a linear sweep.")
@click.option("--threshold", type=float, default=50.0, show_default=True)
@click.option("--detune", type=float, default=0.1, show_default=True)
@click.option("--bandwidth", type=float, default=0.2, show_default=True)
@click.option("--sample-rate", type=float, default=20_000.0, show_default=True)
@click.option("--settle", type=float, default=30.0, show_default=True)
@click.option("--calibrate/--no-calibrate", default=True, show_default=True)
@click.option("--every", type=int, default=200, show_default=True, help="Write every Nth sample.")
@_out
def detect(**kw):
    """Differential bandpass threshold detector (detection.csv, summary.json)."""


@_command("simulate")
@click.option("--trace", type=click.Path(dir_okay=False), required=True)
@click.option("--model", default="laptop1", show_default=True, help="Preset name or key-value file.")
@click.option("--policy", "policy", default="hard:thr=50.0", show_default=True, callback=_policy)
@click.option("--dt", type=float, default=1.0, show_default=True)
@click.option("--initial-charge", type=float, default=1.0, show_default=True)
@_out
def simulate(**kw):
    """Closed-loop charge simulation (records.csv, summary.json)."""


@_command("sweep")
@click.option("--trace", type=click.Path(dir_okay=False), required=True)
@click.option("--model", default="laptop1", show_default=True)
@click.option("--thresholds", default="49.995,49.985,49.975", show_default=True, callback=_floats)
@click.option("--dt", type=float, default=1.0, show_default=True)
@click.option("--initial-charge", type=float, default=1.0, show_default=True)
@click.option("--workers", type=click.IntRange(1), default=1, show_default=True)
@_out
def sweep(**kw):
    """Hard-threshold sweep (histogram.csv, summary.csv)."""


@_command("compare")
@click.option("--trace", type=click.Path(dir_okay=False), required=True)
@click.option("--models", default="laptop1,laptop2", show_default=True,
              callback=lambda ctx, param, v: v if isinstance(v, list) else [m for m in v.split(",") if m])
@click.option("--policy", "policy", default="hard:thr=50.0", show_default=True, callback=_policy)
@click.option("--dt", type=float, default=1.0, show_default=True)
@click.option("--initial-charge", type=float, default=1.0, show_default=True)
@click.option("--workers", type=click.IntRange(1), default=1, show_default=True)
@_out
def compare(**kw):
    """Same trace and policy across battery models (records_<model>.csv, summary.csv)."""


@_command("fleet")
@click.option("--devices", type=float, required=True)
@click.option("--power", type=float, default=50.0, show_default=True, help="Watts per charging device.")
@click.option("--connected", type=float, default=1.0, show_default=True)
@click.option("--duty", type=float, default=1.0, show_default=True)
@click.option("--from-sim", type=click.Path(dir_okay=False), default=None, help="Take duty from a records.csv.")
@click.option("--out", type=click.Path(file_okay=False), default=None, help="Also write fleet.json here.")
def fleet_cmd(**kw):
    """Aggregate controllable power of a device fleet."""


@_command("resolution")
@click.option("--averages", default="1,3,10,30,100", show_default=True, callback=_ints)
@click.option("--amplitudes", default="0.5,1,2", show_default=True, callback=_floats)
@click.option("--noise", type=float, default=freqest.BENCH_NOISE_SIGMA_V, show_default=True)
@click.option("--tick", type=float, default=freqest.BENCH_CLOCK_TICK_S, show_default=True)
@click.option("--hysteresis", type=float, default=freqest.BENCH_HYSTERESIS_V, show_default=True)
@click.option("--min-estimates", type=click.IntRange(2), default=200, show_default=True)
@_seed
@_out
def resolution(**kw):
    """Estimator spread vs averaging and amplitude (resolution.csv)."""


@main.command("replay")
@click.argument("manifest", type=click.Path(dir_okay=False, exists=True))
@click.option("--out", type=click.Path(file_okay=False), required=True)
def replay(manifest, out):
    """Re-run the command recorded in MANIFEST into a new directory."""
    try:
        with open(manifest, encoding="utf-8") as fh:
            m = json.load(fh)
        name, params = m["command"], m["params"]
    except (OSError, ValueError, KeyError) as exc:
        _error(EXIT_INPUT, InputDataError(f"unreadable manifest: {exc}"))
    if name not in COMMANDS:
        _error(EXIT_INPUT, InputDataError(f"manifest names unknown command {name!r}"))
    for path, digest in m.get("inputs", {}).items():
        try:
            ok = _sha256(Path(path)) == digest
        except OSError as exc:
            _error(EXIT_INPUT, exc)
        if not ok:
            _error(EXIT_INPUT, InputDataError(f"input {path} changed since the manifest was written"))
    _execute(name, params, out)


if __name__ == "__main__":  # pragma: no cover
    main()
