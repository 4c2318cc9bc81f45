import csv
import json

import numpy as np
import pytest

from bilinctl.experiments import (affine_error_trial, minimal_feasible_T, run_end_to_end,
                                  run_error_sweep, run_feasibility_search, run_pendulum)
from bilinctl.residual import InputBox
from bilinctl.synthesis import region_from_norm_bound
from bilinctl.systems import academic_system, substream


def test_affine_error_trial_fields():
    res = affine_error_trial(3, 2000, 0.5, 0.1, substream(0, 0))
    assert res["err"] > 0
    assert res["data_bound"] > res["err"]          # bounds hold with large margin here
    assert res["apriori_bound"] >= res["data_bound"]


def test_error_sweep_outputs_and_replay(tmp_path):
    cfg = {"kind": "error-vs-T", "n_x": 4, "T_grid": [2000, 8000], "trials": 5,
           "sigma_w": 0.5, "delta": 0.1, "seed": 3}
    recs = run_error_sweep(cfg, tmp_path / "a")
    assert len(recs) == 2
    for r in recs:
        if np.isfinite(r["apriori_bound"]):
            assert r["apriori_bound"] >= r["data_bound_mean"] >= r["err_mean"]
        # coverage audit: escape fraction within the binomial band around delta
        slack = 0.1 + 3 * np.sqrt(0.1 * 0.9 / r["trials"])
        assert r["data_violations"] / r["trials"] <= slack
        assert r["apriori_violations"] / r["trials"] <= slack
    run_error_sweep(cfg, tmp_path / "b")
    assert (tmp_path / "a" / "error_sweep.csv").read_bytes() == \
        (tmp_path / "b" / "error_sweep.csv").read_bytes()
    meta = json.loads((tmp_path / "a" / "error_sweep.csv.meta.json").read_text())
    assert meta["seed"] == 3 and meta["config"]["kind"] == "error-vs-T"


def test_error_sweep_nx_kind(tmp_path):
    cfg = {"kind": "error-vs-nx", "nx_grid": [2, 4], "T": 3000, "trials": 4,
           "sigma_w": 0.5, "delta": 0.1, "seed": 1}
    recs = run_error_sweep(cfg, tmp_path)
    assert [r["n_x"] for r in recs] == [2, 4]
    assert recs[1]["err_mean"] > recs[0]["err_mean"]


def test_minimal_feasible_T_academic():
    res = minimal_feasible_T(academic_system(), region_from_norm_bound(0.1, 2),
                             InputBox.symmetric(2.0, 1), bound_kind="ellipsoidal",
                             sigma_w=0.1, delta=0.05, seed=0, cap=4096)
    assert res["T_min"] is not None
    assert 8 <= res["T_min"] <= 150        # paper-scale value is a few tens
    assert res["trace_P"] > 0


def test_minimal_feasible_T_respects_cap():
    res = minimal_feasible_T(academic_system(), region_from_norm_bound(0.9, 2),
                             InputBox.symmetric(2.0, 1), bound_kind="data",
                             sigma_w=0.1, delta=0.05, seed=0, cap=10)
    assert res["T_min"] is None and res["capped"]


def test_feasibility_search_runner(tmp_path):
    cfg = {"system": {"name": "academic"}, "c_grid": [0.1], "bound_kinds": ["ellipsoidal"],
           "sigma_w": 0.1, "delta": 0.05, "seeds": [0, 1], "cap": 4096,
           "input_box": {"half_width": 2.0}}
    recs = run_feasibility_search(cfg, tmp_path)
    assert len(recs) == 1
    assert recs[0]["T_min_median"] is not None
    rows = list(csv.reader(open(tmp_path / "feasibility_search.csv")))
    assert rows[0] == ["region", "bound_kind", "seed", "T_min", "trace_P"]
    assert len(rows) == 3


def test_end_to_end_success(tmp_path):
    cfg = {"system": {"name": "academic"}, "T": 2000, "sigma_w": 0.1, "delta": 0.05,
           "region": {"kind": "norm-ball", "c": 0.1}, "input_box": {"half_width": 2.0},
           "bound_kind": "ellipsoidal", "retries": 0, "seed": 5}
    report = run_end_to_end(cfg, tmp_path)
    assert report["status"] == "success"
    att = report["attempts"][-1]
    assert att["certificates_pass"]
    assert att["roa"]["roa_in_region"]
    assert (tmp_path / "end_to_end_report.json").exists()


def test_end_to_end_failure_with_tiny_T():
    cfg = {"system": {"name": "academic"}, "T": 1, "sigma_w": 0.1, "delta": 0.05,
           "region": {"kind": "norm-ball", "c": 0.1}, "input_box": {"half_width": 2.0},
           "bound_kind": "ellipsoidal", "retries": 0, "seed": 5}
    report = run_end_to_end(cfg)
    assert report["status"] == "failure"
    assert "retries exhausted" in report["reason"]
    assert report["attempts"][0]["status"] == "infeasible"


def test_end_to_end_retry_doubles_T():
    cfg = {"system": {"name": "academic"}, "T": 16, "sigma_w": 0.1, "delta": 0.05,
           "region": {"kind": "norm-ball", "c": 0.1}, "input_box": {"half_width": 2.0},
           "bound_kind": "ellipsoidal", "retries": 5, "seed": 2}
    report = run_end_to_end(cfg)
    assert report["status"] == "success"
    sizes = [a["T_list"][0] for a in report["attempts"]]
    assert sizes == [16 * 2 ** k for k in range(len(sizes))]


@pytest.mark.slow
def test_pendulum_study_smoke(tmp_path):
    report = run_pendulum({"seed": 0, "sim_steps": 1500}, tmp_path)
    assert report["status"] == "feasible"
    assert report["all_converged"]
    assert (tmp_path / "pendulum_roa_boundary.csv").exists()
    assert (tmp_path / "pendulum_trajectories.csv").exists()
    boundary = np.array([[float(a), float(b)] for a, b in
                         list(csv.reader(open(tmp_path / "pendulum_roa_boundary.csv")))[1:]])
    # RoA stays inside the certified region |x|^2 <= 11 after lifting
    lifted_sq = boundary[:, 0] ** 2 + boundary[:, 1] ** 2 + np.sin(boundary[:, 0]) ** 2
    assert np.all(lifted_sq <= 11.0 + 1e-6)


@pytest.mark.slow
def test_error_sweep_reference_values_at_scale(tmp_path):
    # large-sample reference values for this exact configuration; the bound
    # columns concentrate hard at T = 250000 so the tolerances can be tight
    recs = run_error_sweep({"kind": "error-vs-nx", "nx_grid": [10, 25], "T": 250_000,
                            "trials": 5, "sigma_w": 0.5, "delta": 0.1, "seed": 0}, tmp_path)
    ref = {10: (0.00566, 0.03020, 0.06296), 25: (0.00951, 0.04633, 0.09712)}
    for r in recs:
        err_ref, data_ref, ap_ref = ref[r["n_x"]]
        assert abs(r["data_bound_mean"] - data_ref) / data_ref < 0.01
        assert abs(r["apriori_bound"] - ap_ref) / ap_ref < 0.01
        assert abs(r["err_mean"] - err_ref) / err_ref < 0.25   # 5-trial Monte Carlo noise
