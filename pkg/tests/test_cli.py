import csv
import json
import subprocess
import sys
from pathlib import Path

import pytest

from nonlocal_euler.cli import main
from nonlocal_euler.experiments import (EXIT_BOUND, EXIT_OK, EXIT_SUBCRITICAL_BLOWUP,
                                        EXIT_USAGE, WORKERS_ENV)

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
GAUSS = {"family": "gaussian", "width": 0.5}
TANH = {"rho0": 0.2, "u0": "-0.5*tanh(x)"}


def _write(tmp_path, body, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(body))
    return path


def _run(command, cfg_path, out, *extra):
    return main([command, "--config", str(cfg_path), "--out", str(out), *extra])


def _summary(out):
    return json.loads((out / "summary.json").read_text())


def _header(path):
    with open(path) as fh:
        return next(csv.reader(fh))


def test_classify_shipped_config(tmp_path):
    assert _run("classify", CONFIGS / "classify_tanh.json", tmp_path, "--quiet") == EXIT_OK
    s = _summary(tmp_path)
    assert s["verdict"] == "supercritical"
    assert s["threshold"]["blowup_upper_bound"] == pytest.approx(10 / 3, rel=1e-3)
    assert _header(tmp_path / "threshold.csv") == ["x", "d0"]
    assert (tmp_path / "threshold.png").stat().st_size > 0


def test_supercritical_blowup_within_bound(tmp_path):
    cfg = _write(tmp_path, {"experiment": "simulate", "kernel": GAUSS,
                            "grid": {"a": -10, "b": 10, "n": 512}, "initial_data": TANH,
                            "scheme": {"t_end": 4.0, "G_max": 3.0, "output_times": [1.0, 2.0]}})
    out = tmp_path / "out"
    assert _run("simulate", cfg, out, "--quiet") == EXIT_OK
    b = _summary(out)["blowup"]
    assert b["within_bound"] and b["t"] <= 1.2 * b["upper_bound"]
    assert set(b) >= {"t", "x", "trigger", "max_neg_ux"}
    assert _header(out / "diagnostics.csv") == ["t", "u_min", "u_max", "density_ratio",
                                                "ux_ratio", "energy_Y"]
    assert _header(out / "snapshots.csv") == ["index", "t", "file"]
    assert _header(out / "snapshots" / "snapshot_0000.csv") == ["x", "rho", "u"]
    for png in ("snapshots.png", "diagnostics.png"):
        assert (out / png).stat().st_size > 0


def test_supercritical_without_detection_is_bound_failure(tmp_path):
    cfg = _write(tmp_path, {"experiment": "simulate", "kernel": GAUSS,
                            "grid": {"a": -10, "b": 10, "n": 256}, "initial_data": TANH,
                            "scheme": {"t_end": 5.0, "G_max": 1e6}})
    assert _run("simulate", cfg, tmp_path / "o", "--quiet") == EXIT_BOUND
    assert "past the predicted upper bound" in _summary(tmp_path / "o")["failure"]


def test_subcritical_blowup_exit_code(tmp_path):
    cfg = _write(tmp_path, {"experiment": "simulate", "kernel": GAUSS,
                            "grid": {"a": -10, "b": 10, "n": 256},
                            "initial_data": {"rho0": "gaussian(0, 1) + 0.2", "u0": "0.1*sin(x)"},
                            "scheme": {"t_end": 1.0, "G_max": 0.05}})
    assert _run("simulate", cfg, tmp_path / "o", "--quiet") == EXIT_SUBCRITICAL_BLOWUP


def test_validate_kernel_ok_and_violation(tmp_path):
    assert _run("validate-kernel", CONFIGS / "validate_kernel.json", tmp_path / "a",
                "--quiet") == EXIT_OK
    assert _summary(tmp_path / "a")["valid"]
    bad = _write(tmp_path, {"experiment": "validate_kernel",
                            "kernel": {"family": "table",
                                       "table": [[-1, 0], [-0.5, 1], [0, 0.5], [0.5, 1], [1, 0]]},
                            "grid": {"a": -10, "b": 10, "n": 256}})
    assert _run("validate-kernel", bad, tmp_path / "b", "--quiet") == EXIT_BOUND
    assert _summary(tmp_path / "b")["violations"]


def test_epsilon_sweep_columns(tmp_path):
    cfg = _write(tmp_path, {"experiment": {"epsilon_sweep": {"eps_list": [0.4, 0.2, 0.1],
                                                             "T_cmp": 0.25}},
                            "kernel": {"family": "table", "allow_asymmetric": True,
                                       "bump": {"left": 0.5, "right": 1.5}},
                            "grid": {"a": 0, "b": 6.283185307179586, "n": 256},
                            "initial_data": {"rho0": "1 + 0.2*sin(x)", "u0": "0.2*cos(x)"}})
    assert _run("epsilon-sweep", cfg, tmp_path / "o", "--quiet") == EXIT_OK
    assert _header(tmp_path / "o" / "error_vs_eps.csv") == ["eps", "sup_err_rho", "sup_err_u"]
    assert (tmp_path / "o" / "error_vs_eps.png").exists()


def test_bad_config_and_missing_file(tmp_path, capsys):
    bad = _write(tmp_path, {"experiment": {"epsilon_sweep": {"eps_list": [0.4, 0.4]}},
                            "kernel": GAUSS, "grid": {"a": 0, "b": 1, "n": 64},
                            "initial_data": TANH})
    assert _run("epsilon-sweep", bad, tmp_path / "o") == EXIT_USAGE
    assert "experiment.epsilon_sweep.eps_list" in capsys.readouterr().err
    assert _run("simulate", tmp_path / "nope.json", tmp_path / "o") == EXIT_USAGE
    assert _run("picard", CONFIGS / "classify_tanh.json", tmp_path / "o") == EXIT_USAGE


def test_usage_errors_exit_one():
    with pytest.raises(SystemExit) as info:
        main(["simulate"])
    assert info.value.code == EXIT_USAGE
    with pytest.raises(SystemExit) as info:
        main(["bogus", "--config", "x"])
    assert info.value.code == EXIT_USAGE


def test_output_dir_from_config(tmp_path):
    body = json.loads((CONFIGS / "classify_tanh.json").read_text())
    body["output_dir"] = str(tmp_path / "from_cfg")
    cfg = _write(tmp_path, body)
    assert main(["classify", "--config", str(cfg), "--quiet"]) == EXIT_OK
    assert (tmp_path / "from_cfg" / "summary.json").exists()


def test_quiet_suppresses_progress(tmp_path, capsys):
    _run("classify", CONFIGS / "classify_tanh.json", tmp_path / "a")
    loud = capsys.readouterr().err
    _run("classify", CONFIGS / "classify_tanh.json", tmp_path / "b", "--quiet")
    assert loud and capsys.readouterr().err == ""


def _convergence_cfg(tmp_path):
    return _write(tmp_path, {"experiment": {"convergence": {"grid_list": [64, 128, 256]}},
                             "kernel": GAUSS, "grid": {"a": -10, "b": 10, "n": 64},
                             "initial_data": {"rho0": "gaussian(0, 1) + 0.2",
                                              "u0": "0.2*sin(pi*x/10)"},
                             "scheme": {"t_end": 0.5}})


def test_csv_bytes_deterministic_and_worker_independent(tmp_path, monkeypatch):
    cfg = _convergence_cfg(tmp_path)
    monkeypatch.setenv(WORKERS_ENV, "1")
    assert _run("convergence", cfg, tmp_path / "a", "--quiet") == EXIT_OK
    assert _run("convergence", cfg, tmp_path / "b", "--quiet") == EXIT_OK
    monkeypatch.setenv(WORKERS_ENV, "2")
    assert _run("convergence", cfg, tmp_path / "c", "--quiet") == EXIT_OK
    ref = (tmp_path / "a" / "convergence.csv").read_bytes()
    assert ref == (tmp_path / "b" / "convergence.csv").read_bytes()
    assert ref == (tmp_path / "c" / "convergence.csv").read_bytes()
    assert _header(tmp_path / "a" / "convergence.csv") == ["n", "dx", "l1_err_rho", "l1_err_u",
                                                           "order_rho", "order_u"]


def test_picard_command(tmp_path):
    cfg = _write(tmp_path, {"experiment": {"picard": {"T_iter": 0.5}}, "kernel": GAUSS,
                            "grid": {"a": -10, "b": 10, "n": 128},
                            "initial_data": {"rho0": "gaussian(0, 1)",
                                             "u0": "0.3*sin(pi*x/10)"}})
    assert _run("picard", cfg, tmp_path / "o", "--quiet") == EXIT_OK
    s = _summary(tmp_path / "o")
    assert s["agreement_ok"] and s["converged"]
    assert _header(tmp_path / "o" / "picard.csv") == ["iter", "delta", "ratio"]


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "nonlocal_euler", "classify", "--config",
                           str(CONFIGS / "classify_tanh.json"), "--out", str(tmp_path), "--quiet"],
                          capture_output=True, text=True)
    assert proc.returncode == EXIT_OK, proc.stderr
