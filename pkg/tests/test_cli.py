import json

import numpy as np
import pytest

from voltref.cli import main

SHORT = ["--set", "duration_s=300", "--set", "burn_in_s=0"]


def test_run_single_dc_within_band(tmp_path, capsys):
    assert main(["run", "single_dc", "-o", str(tmp_path)]) == 0
    metrics = json.loads((tmp_path / "metrics.json").read_text())
    assert metrics["controller"] == "switching"
    assert metrics["metrics"]["max_abs_dev"] <= 0.05
    assert metrics["metrics"]["violations"] == 0
    header = (tmp_path / "trajectory.csv").open().readline().strip().split(",")
    assert header[:3] == ["time_s", "ctrl", "violation"]
    assert "v_22" in header and "q_22" in header and "vref_22" in header and "p_22" in header
    assert "max|v-1|" in capsys.readouterr().out


def test_run_missing_config(tmp_path, capsys):
    assert main(["run", str(tmp_path / "nope.ini"), "-o", str(tmp_path / "out")]) == 2
    assert "not found" in capsys.readouterr().err


def test_run_fixed_override(tmp_path):
    assert main(["run", "single_dc", "-o", str(tmp_path), "--set", "controller=fixed", *SHORT]) == 0
    assert json.loads((tmp_path / "metrics.json").read_text())["controller"] == "fixed"


def test_config_problems_enumerated(tmp_path, capsys):
    code = main(["run", "single_dc", "-o", str(tmp_path), "--set", "controller=pid",
                 "--set", "eta_b=3", "--set", "dt_ctrl_s=0.25"])
    assert code == 2
    err = capsys.readouterr().err
    assert err.count("\n  - ") >= 2 and "eta_b" in err and "integer multiple" in err


def test_no_silent_overwrite(tmp_path, capsys):
    args = ["run", "single_dc", "-o", str(tmp_path), *SHORT]
    assert main(args) == 0
    before = (tmp_path / "metrics.json").read_text()
    assert main(args + ["--set", "controller=fixed"]) == 2
    assert "--force" in capsys.readouterr().err
    assert (tmp_path / "metrics.json").read_text() == before
    assert main(args + ["--set", "controller=fixed", "--force"]) == 0
    assert (tmp_path / "metrics.json").read_text() != before


def test_output_dir_created(tmp_path):
    out = tmp_path / "a" / "b"
    assert main(["gen-trace", "two_dc", "-o", str(out), *SHORT]) == 0
    for name in ("trace_dc22.csv", "trace_dc25.csv", "modes_dc22.csv", "modes_dc25.csv"):
        assert (out / name).is_file()
    data = np.loadtxt(out / "trace_dc22.csv", delimiter=",", skiprows=1)
    assert data.shape == (3000, 2)
    # consumption in watts on a 10 MVA base
    assert 0.28e6 <= data[:, 1].min() and data[:, 1].max() <= 2.79e6


def test_generated_trace_roundtrip(tmp_path):
    assert main(["gen-trace", "single_dc", "-o", str(tmp_path), *SHORT]) == 0
    ini = tmp_path / "csv.ini"
    ini.write_text("[scenario]\nduration_s = 300\n[dc.22]\nsource = csv\npath = trace_dc22.csv\n")
    assert main(["run", str(ini), "-o", str(tmp_path / "csv"), "--set", "controller=fixed"]) == 0
    assert main(["run", "single_dc", "-o", str(tmp_path / "syn"), "--set", "controller=fixed", *SHORT]) == 0
    a = np.loadtxt(tmp_path / "csv" / "trajectory.csv", delimiter=",", skiprows=1)
    b = np.loadtxt(tmp_path / "syn" / "trajectory.csv", delimiter=",", skiprows=1)
    np.testing.assert_allclose(a, b, atol=1e-9)


def test_verify_default_passes(tmp_path):
    assert main(["verify", "-o", str(tmp_path)]) == 0
    report = (tmp_path / "verify_report.txt").read_text()
    assert "FAIL" not in report
    assert "epsilon=0.9995" in report
    js = json.loads((tmp_path / "verify_report.json").read_text())
    assert js["certificate"]["valid"] and all(c["passed"] for c in js["checks"])


def test_verify_bad_gain_fails(tmp_path, capsys):
    assert main(["verify", "-o", str(tmp_path), "--set", "controller.gain=30"]) == 1
    report = (tmp_path / "verify_report.txt").read_text()
    assert "FAIL  gain_region" in report
    assert "epsilon=" in report
    assert "gain_region" in capsys.readouterr().err


def test_compare_two_dc(tmp_path):
    assert main(["compare", "two_dc", "-o", str(tmp_path)]) == 0
    js = json.loads((tmp_path / "comparison.json").read_text())
    assert js["controllers"] == ["fixed", "switching"]
    assert js["deltas"]["effort"] < 0 and js["deltas"]["max_abs_dev"] < 0
    assert (tmp_path / "fixed_trajectory.csv").is_file()
    assert (tmp_path / "switching_trajectory.csv").is_file()


def test_self_compare_zero_deltas(tmp_path):
    assert main(["compare", "single_dc", "-o", str(tmp_path), "--controllers", "switching,switching",
                 *SHORT]) == 0
    js = json.loads((tmp_path / "comparison.json").read_text())
    assert all(v == 0 for v in js["deltas"].values())
    a = (tmp_path / "switching1_trajectory.csv").read_bytes()
    assert a == (tmp_path / "switching2_trajectory.csv").read_bytes()


def test_compare_rejects_unknown_controller(tmp_path):
    assert main(["compare", "single_dc", "-o", str(tmp_path), "--controllers", "fixed,pid"]) == 2


def test_usage_error_exit_code(tmp_path):
    assert main(["run"]) == 2
    assert main(["bogus"]) == 2
