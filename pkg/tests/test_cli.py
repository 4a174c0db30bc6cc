import json

import numpy as np
import pytest
from click.testing import CliRunner

from smartcharge.cli import main
from smartcharge.signal import load_trace


def invoke(*args):
    return CliRunner().invoke(main, [str(a) for a in args], catch_exceptions=False)


@pytest.fixture(scope="module")
def trace_csv(tmp_path_factory):
    out = tmp_path_factory.mktemp("trace")
    r = invoke("gridtrace", "--duration", 6 * 3600, "--seed", 3, "--out", out)
    assert r.exit_code == 0, r.output
    return out / "trace.csv"


def _csvs(d):
    return {p.name: p.read_bytes() for p in sorted(d.glob("*.csv"))}


def assert_replays(out, tmp_path):
    again = tmp_path / (out.name + "-replay")
    r = invoke("replay", out / "manifest.json", "--out", again)
    assert r.exit_code == 0, r.output
    assert _csvs(out) and _csvs(out) == _csvs(again)


def test_gridtrace_and_manifest(trace_csv):
    m = json.loads((trace_csv.parent / "manifest.json").read_text())
    assert m["command"] == "gridtrace" and m["seeds"] == {"seed": 3}
    assert m["outputs"] == ["trace.csv"]
    assert len(load_trace(trace_csv)) == 6 * 3600 + 1


def test_simulate(trace_csv, tmp_path):
    out = tmp_path / "sim"
    r = invoke("simulate", "--trace", trace_csv, "--model", "laptop1", "--policy", "hard:thr=50.0", "--out", out)
    assert r.exit_code == 0, r.output
    lines = (out / "records.csv").read_text().splitlines()
    assert lines[0] == "time_s,frequency_hz,charging,charge" and len(lines) == 6 * 3600 + 1
    m = json.loads((out / "manifest.json").read_text())
    assert str(trace_csv.resolve()) in m["inputs"]
    assert_replays(out, tmp_path)


def test_sweep_mean_charge_ordering(trace_csv, tmp_path):
    out = tmp_path / "sweep"
    r = invoke("sweep", "--trace", trace_csv, "--thresholds", "49.995,49.985,49.975", "--workers", 2, "--out", out)
    assert r.exit_code == 0, r.output
    rows = np.loadtxt(out / "summary.csv", delimiter=",", skiprows=1)
    np.testing.assert_allclose(rows[:, 0], [49.995, 49.985, 49.975])
    assert np.all(np.diff(rows[:, 1]) >= 0)
    assert_replays(out, tmp_path)


def test_compare(trace_csv, tmp_path):
    out = tmp_path / "cmp"
    r = invoke("compare", "--trace", trace_csv, "--out", out)
    assert r.exit_code == 0, r.output
    assert {"records_laptop1.csv", "records_laptop2.csv", "summary.csv"} <= set(_csvs(out))
    assert_replays(out, tmp_path)


def test_synth_estimate_chain(tmp_path):
    w = tmp_path / "w"
    assert invoke("synth", "--frequency", 50, "--duration", 1, "--out", w).exit_code == 0
    est = tmp_path / "est"
    r = invoke("estimate", "--waveform", w / "waveform.csv", "--tick", 0, "--out", est)
    assert r.exit_code == 0, r.output
    summary = json.loads((est / "summary.json").read_text())
    assert summary["mean_hz"] == pytest.approx(50.0, abs=1e-6)
    assert_replays(w, tmp_path)
    assert_replays(est, tmp_path)


def test_synth_fm_from_trace(tmp_path):
    tr = tmp_path / "t.csv"
    tr.write_text("time_s,frequency_hz\n0,49.9\n2,50.1\n")
    out = tmp_path / "fm"
    assert invoke("synth", "--trace", tr, "--noise", 0.01, "--seed", 4, "--out", out).exit_code == 0
    assert_replays(out, tmp_path)


def test_detect_chirp(tmp_path):
    out = tmp_path / "det"
    r = invoke("detect", "--chirp", "49.8,50.2,120", "--out", out)
    assert r.exit_code == 0, r.output
    s = json.loads((out / "summary.json").read_text())
    assert len(s["transitions"]) == 1
    assert s["transitions"][0]["frequency_hz"] == pytest.approx(50.0, abs=0.01)


def test_resolution_small(tmp_path):
    out = tmp_path / "res"
    r = invoke("resolution", "--averages", "1,10", "--amplitudes", "1", "--out", out)
    assert r.exit_code == 0, r.output
    rows = np.loadtxt(out / "resolution.csv", delimiter=",", skiprows=1)
    assert rows[1, 2] < rows[0, 2]
    assert_replays(out, tmp_path)


def test_fleet_prints_gigawatt():
    r = invoke("fleet", "--devices", "20e6", "--power", 50, "--duty", 1.0)
    assert r.exit_code == 0
    assert r.output.strip() == "1.000 GW"


def test_fleet_from_sim(trace_csv, tmp_path):
    out = tmp_path / "sim"
    invoke("simulate", "--trace", trace_csv, "--out", out)
    duty = json.loads((out / "summary.json").read_text())["duty"]
    r = invoke("fleet", "--devices", 1000, "--power", 10, "--from-sim", out / "records.csv", "--out", tmp_path / "f")
    assert r.exit_code == 0
    got = json.loads((tmp_path / "f" / "fleet.json").read_text())
    assert got["charging_duty"] == pytest.approx(duty)


def test_config_file_defaults_and_flag_override(trace_csv, tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# thresholds for a quick look\npolicy = hard:thr=50.05\ninitial-charge = 0.5\n")
    a = tmp_path / "a"
    assert invoke("simulate", "--trace", trace_csv, "--config", cfg, "--out", a).exit_code == 0
    m = json.loads((a / "manifest.json").read_text())
    assert m["params"]["policy"] == "hard:thr=50.05" and m["params"]["initial_charge"] == 0.5
    b = tmp_path / "b"
    assert invoke("simulate", "--trace", trace_csv, "--config", cfg, "--initial-charge", 0.7, "--out", b).exit_code == 0
    assert json.loads((b / "manifest.json").read_text())["params"]["initial_charge"] == 0.7


def test_config_unknown_key(trace_csv, tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("colour = blue\n")
    r = invoke("simulate", "--trace", trace_csv, "--config", cfg, "--out", tmp_path / "x")
    assert r.exit_code == 4


# -- failures --------------------------------------------------------------------


def _single_error_line(r, code):
    assert r.exit_code == code
    lines = [ln for ln in r.output.splitlines() if ln.strip()]
    assert len(lines) == 1 and f"code={code}" in lines[0]


def test_usage_error_exit_2(trace_csv, tmp_path):
    r = invoke("simulate", "--trace", trace_csv, "--policy", "wobble:thr=1", "--out", tmp_path / "x")
    _single_error_line(r, 2)
    _single_error_line(invoke("nosuchcommand"), 2)
    _single_error_line(invoke("synth", "--out", tmp_path / "y"), 2)
    assert not (tmp_path / "x").exists() and not (tmp_path / "y").exists()


def test_missing_input_exit_3(tmp_path):
    out = tmp_path / "x"
    _single_error_line(invoke("simulate", "--trace", tmp_path / "nope.csv", "--out", out), 3)
    assert not out.exists()


def test_malformed_trace_exit_3(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("time_s,frequency_hz\n0,50\n5,50\n4,50\n")
    r = invoke("simulate", "--trace", bad, "--out", tmp_path / "x")
    _single_error_line(r, 3)
    assert "line 4" in r.output


def test_numeric_error_exit_4_leaves_no_partial_output(trace_csv, tmp_path):
    out = tmp_path / "x"
    r = invoke("simulate", "--trace", trace_csv, "--dt", 1e9, "--out", out)
    _single_error_line(r, 4)
    assert not out.exists()
    assert not list(tmp_path.glob(".stage-*"))


def test_failure_keeps_previous_outputs(trace_csv, tmp_path):
    out = tmp_path / "keep"
    invoke("simulate", "--trace", trace_csv, "--out", out)
    before = _csvs(out)
    invoke("simulate", "--trace", trace_csv, "--initial-charge", 3, "--out", out)
    assert _csvs(out) == before


def test_replay_detects_changed_input(tmp_path):
    tr = tmp_path / "t.csv"
    tr.write_text("time_s,frequency_hz\n0,49.9\n100,50.1\n")
    out = tmp_path / "s"
    assert invoke("simulate", "--trace", tr, "--out", out).exit_code == 0
    tr.write_text("time_s,frequency_hz\n0,49.9\n100,50.2\n")
    _single_error_line(invoke("replay", out / "manifest.json", "--out", tmp_path / "r"), 3)
