import json
import subprocess
import sys

import numpy as np
import pytest

from quietclock.artifacts import read_psd, read_table, write_psd
from quietclock.cli import EXIT_CONFIG, EXIT_FAIL, EXIT_OK, EXIT_RUNTIME, main
from quietclock.model import ClockParams
from quietclock.spectral import analytic_psd

CLOCK = ["--model", "clock", "--p", "0.01", "--w", "0.05", "--delta", "1e-5"]


def _simulate(tmp_path, *extra):
    return main(["simulate", *CLOCK, "--out", str(tmp_path), *extra])


def _only_run_dir(root):
    (d,) = [p for p in root.iterdir() if p.is_dir()]
    return d


# ---------------------------------------------------------------- simulate

def test_simulate_writes_artifacts_and_prints_summary(tmp_path, capsys):
    code = _simulate(tmp_path, "--periods", "65536", "--seed", "42",
                     "--outputs", "psd,summary,events,ledger")
    assert code == EXIT_OK
    out = capsys.readouterr().out
    assert "ledger" in out and "fano table" in out and "wrote psd" in out
    d = _only_run_dir(tmp_path)
    assert {p.name for p in d.iterdir()} == {
        "psd.csv", "summary.json", "events.csv", "ledger.json", "manifest.json"}
    assert d.name.startswith("clock-s42-")
    header = (d / "psd.csv").read_text().splitlines()[0]
    assert header == "omega,s_est,s_analytic,n_segments"


def test_missing_p_is_config_error_naming_flag(tmp_path, capsys):
    code = main(["simulate", "--model", "clock", "--w", "0.001", "--delta", "1e-5",
                 "--periods", "1000", "--out", str(tmp_path)])
    assert code == EXIT_CONFIG
    err = capsys.readouterr().err
    assert "--p" in err and "usage:" in err
    assert not any(tmp_path.iterdir())


@pytest.mark.parametrize("argv", [
    ["--model", "clock", "--p", "0.01", "--w", "1.5", "--delta", "1e-5", "--periods", "1000"],
    ["--model", "laser", "--delta", "1e-5", "--periods", "1000"],
    ["--model", "clock", "--p", "0.01", "--w", "0.001", "--delta", "1e-5"],
    ["--model", "clock", "--p", "0.01", "--w", "0.001", "--delta", "1e-5", "--periods", "4096",
     "--segment-len", "1000"],
])
def test_config_errors_exit_2(tmp_path, argv):
    assert main(["simulate", *argv, "--out", str(tmp_path)]) == EXIT_CONFIG


def test_unwritable_output_is_runtime_error(tmp_path, capsys):
    blocker = tmp_path / "blocker"
    blocker.write_text("")
    code = main(["simulate", "--model", "poisson", "--p", "0.01", "--mark", "1e-3",
                 "--periods", "1000", "--out", str(blocker)])
    assert code == EXIT_RUNTIME
    assert "blocker" in capsys.readouterr().err


def test_laser_run_shows_sub_poissonian_counts(tmp_path, capsys):
    code = main(["simulate", "--model", "laser", "--delta", "1e-5", "--quantum", "1e-3",
                 "--periods", "1000000", "--out", str(tmp_path)])
    assert code == EXIT_OK
    summary = json.loads((_only_run_dir(tmp_path) / "summary.json").read_text())
    assert [row["fano"] for row in summary["fano"]] == [0.0, 0.0, 0.0]


def test_tiny_run_is_ledger_only(tmp_path):
    assert _simulate(tmp_path, "--periods", "1") == EXIT_OK
    summary = json.loads((_only_run_dir(tmp_path) / "summary.json").read_text())
    assert "psd" not in summary
    assert summary["ledger"]["input_total"] == 1e-5


def test_config_file_with_flag_override(tmp_path):
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({
        "model": "clock", "params": {"delta": 1e-5, "p": 0.01, "w": 0.001},
        "periods": 4096, "seed": 1, "psd": {"segment_len": 1024}, "outputs": ["summary"],
    }))
    out = tmp_path / "out"
    assert main(["simulate", "--config", str(cfg), "--seed", "7", "--w", "0.002", "--out", str(out)]) == EXIT_OK
    summary = json.loads((_only_run_dir(out) / "summary.json").read_text())
    assert summary["config"]["seed"] == 7
    assert summary["config"]["params"]["w"] == 0.002
    assert summary["config"]["psd"]["segment_len"] == 1024


def test_malformed_config_file(tmp_path):
    cfg = tmp_path / "bad.json"
    cfg.write_text("{not json")
    assert main(["simulate", "--config", str(cfg)]) == EXIT_CONFIG


def test_output_dir_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("QUIETCLOCK_OUT", str(tmp_path / "env"))
    assert main(["simulate", *CLOCK, "--periods", "4096"]) == EXIT_OK
    assert _only_run_dir(tmp_path / "env").name.startswith("clock-")


def test_module_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "quietclock", "simulate", "--model", "clock", "--w", "0.001",
         "--delta", "1e-5", "--periods", "10", "--out", str(tmp_path)],
        capture_output=True, text=True)
    assert proc.returncode == EXIT_CONFIG
    assert "--p" in proc.stderr


# ---------------------------------------------------------------- compare

@pytest.fixture(scope="module")
def clock_psd(tmp_path_factory):
    root = tmp_path_factory.mktemp("cmp")
    args = ["simulate", *CLOCK, "--periods", str(2**22), "--segment-len", str(2**16),
            "--seed", "7", "--out", str(root)]
    assert main(args) == EXIT_OK
    return _only_run_dir(root) / "psd.csv"


# 64 segments give ~12% scatter per raw bin; from 1e-2 up every band averages >= 20 bins.
def test_compare_matching_params_passes(clock_psd, capsys):
    code = main(["compare", str(clock_psd), "--delta", "1e-5", "--p", "0.01", "--w", "0.05",
                 "--omega-min", "1e-2"])
    out = capsys.readouterr().out
    assert code == EXIT_OK, out
    assert out.strip().endswith("PASS")
    assert "f=omega/2pi" in out


def test_compare_against_stored_analytic_column(clock_psd):
    assert main(["compare", str(clock_psd), "--omega-min", "1e-2"]) == EXIT_OK


def test_compare_self_gives_unit_ratios(clock_psd, tmp_path):
    report = tmp_path / "bands.csv"
    code = main(["compare", str(clock_psd), "--estimate-column", "s_analytic", "--report", str(report)])
    assert code == EXIT_OK
    rows = read_table(report)
    assert rows and all(float(r["ratio"]) == 1.0 for r in rows)


def test_compare_doubled_w_fails_with_corner_shift(clock_psd, capsys):
    code = main(["compare", str(clock_psd), "--delta", "1e-5", "--p", "0.01", "--w", "0.1"])
    out = capsys.readouterr().out
    assert code == EXIT_FAIL
    assert out.strip().endswith("FAIL")
    assert "out of tolerance" in out
    assert "fitted corner" in out and "shift x" in out
    shift = float(out.split("shift x")[1].split(")")[0])
    assert shift == pytest.approx(0.5, abs=0.1)


def test_compare_synthetic_exact_curve(tmp_path, capsys):
    prm = ClockParams(1e-5, 0.01, 1e-3)
    om = 2 * np.pi * np.arange(1, 2**19 + 1) / 2**20
    s = analytic_psd(prm, om)
    path = write_psd(tmp_path / "psd.csv", om, s, s, 1)
    assert main(["compare", str(path), "--delta", "1e-5", "--p", "0.01", "--w", "0.001"]) == EXIT_OK
    assert "vs p*w = 1e-05 (shift x1.000)" in capsys.readouterr().out


@pytest.mark.parametrize("text", [
    "",
    "omega,s_est\n1,2\n",
    "omega,s_est,s_analytic,n_segments\n1,abc,2,3\n",
    "omega,s_est,s_analytic,n_segments\n",
])
def test_compare_malformed_file(tmp_path, text):
    path = tmp_path / "psd.csv"
    path.write_text(text)
    assert main(["compare", str(path)]) == EXIT_CONFIG


def test_compare_missing_file(tmp_path):
    assert main(["compare", str(tmp_path / "nope.csv")]) == EXIT_RUNTIME


def test_compare_partial_params_rejected(clock_psd):
    assert main(["compare", str(clock_psd), "--p", "0.01"]) == EXIT_CONFIG


# ---------------------------------------------------------------- sweep

SWEEP = ["sweep", "--model", "clock", "--delta", "1e-5", "--w", "0.001", "--periods", "16384",
         "--segment-len", "1024", "--seed", "5"]


def test_sweep_three_cells(tmp_path, capsys):
    assert main([*SWEEP, "--grid", "p=0.005,0.01,0.02", "--out", str(tmp_path)]) == EXIT_OK
    sweep_dir = _only_run_dir(tmp_path)
    manifests = sorted(sweep_dir.glob("*/manifest.json"))
    assert len(manifests) == 3
    seeds = {json.loads(m.read_text())["config"]["seed"] for m in manifests}
    assert len(seeds) == 3
    rows = read_table(sweep_dir / "sweep.csv")
    assert [r["status"] for r in rows] == ["ok"] * 3
    assert "wrote sweep table" in capsys.readouterr().out


def test_sweep_isolates_failing_cell(tmp_path):
    argv = [*SWEEP, "--p", "0.01"]
    argv[argv.index("--w") + 1] = "0.001"
    assert main([*argv, "--grid", "w=0.001,1.0,0.002", "--out", str(tmp_path)]) == EXIT_OK
    rows = read_table(_only_run_dir(tmp_path) / "sweep.csv")
    assert [r["status"] for r in rows] == ["ok", "failed", "ok"]


def test_repeated_sweep_identical_table(tmp_path):
    for name in ("a", "b"):
        assert main([*SWEEP, "--grid", "p=0.005,0.01", "--out", str(tmp_path / name)]) == EXIT_OK
    ta = _only_run_dir(tmp_path / "a") / "sweep.csv"
    tb = _only_run_dir(tmp_path / "b") / "sweep.csv"
    assert ta.read_bytes() == tb.read_bytes()


def test_sweep_grid_from_config(tmp_path):
    cfg = tmp_path / "base.json"
    cfg.write_text(json.dumps({
        "model": "poisson", "params": {"mark": 1e-3}, "periods": 8192, "seed": 2,
        "psd": {"segment_len": 1024}, "sweep": {"grid": {"p": [0.01, 0.02]}, "workers": 2},
    }))
    assert main(["sweep", "--config", str(cfg), "--out", str(tmp_path / "o")]) == EXIT_OK
    rows = read_table(_only_run_dir(tmp_path / "o") / "sweep.csv")
    assert len(rows) == 2 and all(r["status"] == "ok" for r in rows)


@pytest.mark.parametrize("grid", [[], ["p="], ["p"]])
def test_sweep_bad_grid(tmp_path, grid):
    argv = [*SWEEP, "--p", "0.01", "--out", str(tmp_path)]
    for g in grid:
        argv += ["--grid", g]
    assert main(argv) == EXIT_CONFIG


# ---------------------------------------------------------------- round trip

def test_psd_file_round_trips_exactly(tmp_path):
    rng = np.random.default_rng(0)
    om = np.sort(rng.random(500)) * np.pi
    est = rng.random(500) * 1e-8
    ref = rng.random(500) / 3
    tab = read_psd(write_psd(tmp_path / "p.csv", om, est, ref, 95))
    np.testing.assert_array_equal(tab.omega, om)
    np.testing.assert_array_equal(tab.s_est, est)
    np.testing.assert_array_equal(tab.s_analytic, ref)
    assert tab.n_segments == 95
