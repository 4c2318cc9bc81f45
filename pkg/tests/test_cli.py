import json
import subprocess
import sys

from bilinctl.cli import main

ACADEMIC = {"system": {"name": "academic"}, "T": 1500, "sigma_w": 0.1, "delta": 0.05,
            "region": {"kind": "norm-ball", "c": 0.1}, "input_box": {"half_width": 2.0},
            "bound_kind": "ellipsoidal", "seed": 4}


def write_cfg(tmp_path, cfg):
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(cfg))
    return str(p)


def test_collect_and_identify(tmp_path, capsys):
    cfg = write_cfg(tmp_path, dict(ACADEMIC, T=50))
    assert main(["--config", cfg, "--out", str(tmp_path / "o"), "collect"]) == 0
    assert (tmp_path / "o" / "datasets" / "manifest.json").exists()
    assert main(["--config", cfg, "--out", str(tmp_path / "o"), "identify"]) == 0
    assert (tmp_path / "o" / "estimates.json").exists()


def test_bounds_command(tmp_path, capsys):
    cfg = write_cfg(tmp_path, dict(ACADEMIC, T=200))
    assert main(["--config", cfg, "--out", str(tmp_path / "o"), "--bound-kind", "data",
                 "bounds"]) == 0
    data = json.loads((tmp_path / "o" / "bounds.json").read_text())
    assert data["kind"] == "data-dependent"
    assert main(["--config", cfg, "--out", str(tmp_path / "o2"), "--bound-kind", "apriori",
                 "bounds"]) == 0
    data = json.loads((tmp_path / "o2" / "bounds.json").read_text())
    assert data["kind"] == "a-priori"


def test_synthesize_success_exit_code(tmp_path):
    cfg = write_cfg(tmp_path, ACADEMIC)
    assert main(["--config", cfg, "--out", str(tmp_path / "o"), "synthesize"]) == 0
    payload = json.loads((tmp_path / "o" / "controller.json").read_text())
    assert payload["solution"]["status"] == "feasible"


def test_synthesize_infeasible_exit_code(tmp_path):
    cfg = write_cfg(tmp_path, dict(ACADEMIC, T=6))
    assert main(["--config", cfg, "--out", str(tmp_path / "o"), "synthesize"]) == 2


def test_config_error_exit_code(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["--config", str(bad), "synthesize"]) == 3
    assert main(["--config", str(tmp_path / "missing.json"), "synthesize"]) == 3
    cfg = write_cfg(tmp_path, dict(ACADEMIC, delta=1.5))
    assert main(["--config", cfg, "synthesize"]) == 3


def test_simulate_command(tmp_path):
    cfg = write_cfg(tmp_path, ACADEMIC)
    assert main(["--config", cfg, "--out", str(tmp_path / "o"), "simulate",
                 "--x0", "0.1,0.05", "--steps", "60"]) == 0
    sim = json.loads((tmp_path / "o" / "simulation.json").read_text())
    assert sim["passed"]


def test_sweep_command(tmp_path):
    cfg = write_cfg(tmp_path, {"kind": "error-vs-T", "n_x": 3, "T_grid": [1000, 2000],
                               "trials": 3, "sigma_w": 0.5, "delta": 0.1, "seed": 0})
    assert main(["--config", cfg, "--out", str(tmp_path / "o"), "sweep"]) == 0
    assert (tmp_path / "o" / "error_sweep.csv").exists()


def test_config_from_stdin():
    proc = subprocess.run(
        [sys.executable, "-m", "bilinctl", "--config", "-", "--out", "/tmp/bilinctl-stdin-test",
         "bounds"],
        input=json.dumps(dict(ACADEMIC, T=100)), capture_output=True, text=True)
    assert proc.returncode == 0


def test_trials_flag_overrides_config(tmp_path):
    cfg = write_cfg(tmp_path, {"kind": "error-vs-T", "n_x": 2, "T_grid": [500],
                               "trials": 50, "sigma_w": 0.5, "seed": 0})
    assert main(["--config", cfg, "--out", str(tmp_path / "o"), "--trials", "2", "sweep"]) == 0
    meta = json.loads((tmp_path / "o" / "error_sweep.csv.meta.json").read_text())
    assert meta["config"]["trials"] == 2


def test_empty_grid_rejected(tmp_path):
    cfg = write_cfg(tmp_path, {"kind": "error-vs-T", "T_grid": [], "trials": 3})
    assert main(["--config", cfg, "sweep"]) == 3
    cfg = write_cfg(tmp_path, {"kind": "error-vs-T", "T_grid": [100], "trials": 0})
    assert main(["--config", cfg, "sweep"]) == 3
