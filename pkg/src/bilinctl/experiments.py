"""Experiment harness: Monte Carlo bound-validation sweeps, minimum-data-length
feasibility searches, the end-to-end design loop, and the lifted-pendulum study.

Every runner takes a plain-dict config (see bilinctl.config for the schema),
derives all randomness from the master seed through keyed substreams, and
writes plot-ready CSV plus a JSON sidecar carrying the full config and seed so
a rerun reproduces byte-identical outputs.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .bounds import (a_priori_bounds, data_dependent_bounds, data_eps_affine,
                     ellipsoidal_bounds)
from .collect import CollectionPlan, ExperimentDataset, collect
from .identify import gram, identify, ols_affine
from .lifting import pendulum_lifted_system, pendulum_lifting
from .residual import InputBox, overestimate_norm, qdelta_ellipsoidal, qdelta_individual
from .synthesis import (StateRegion, region_from_norm_bound, roa_membership, roa_report,
                        simulate_closed_loop, synthesize)
from .systems import (BilinearSystem, NoiseSpec, StateSamplerSpec, academic_system,
                      cstr_system, substream)

PENDULUM_INITIAL_CONDITIONS = ((2.0, 1.5), (-1.0, -2.2), (1.0, -2.6), (-2.0, 2.05), (-0.16, 3.05))


def _write_csv(path: Path, header: list[str], rows: list[list], meta: dict):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, float) else v for v in row])
    path.with_suffix(path.suffix + ".meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True))


# --- error sweeps (affine identification study) ------------------------------

def affine_error_trial(n_x: int, T: int, sigma_w: float, delta: float, rng) -> dict:
    """One Monte Carlo draw of the affine identification problem x+ = B1 x + B0 + w.

    Returns the realized spectral error of B1 together with the two bound
    families evaluated for this draw (n_u = 1 throughout, sigma_x = 1).
    """
    B1 = rng.standard_normal((n_x, n_x))
    b0 = rng.standard_normal(n_x)
    X = rng.standard_normal((T, n_x))
    W = sigma_w * rng.standard_normal((T, n_x))
    Xplus = X @ B1.T + b0[None, :] + W
    ds = ExperimentDataset(input_index=1, X=X, Xplus=Xplus)
    B1_hat, b0_hat = ols_affine(ds)
    g = gram(ds, sigma_x=1.0)
    data_bound = data_eps_affine(T, g.lambda_min, n_x, 1, delta, sigma_w, 1.0)
    ap = a_priori_bounds(n_x, 1, delta, sigma_w, 1.0, [T, T])
    return {
        "err": float(np.linalg.norm(B1_hat - B1, 2)),
        "err_b0": float(np.linalg.norm(b0_hat - b0)),
        "data_bound": data_bound,
        "apriori_bound": float(ap.eps_B[0]),
        "data_covered": float(np.linalg.norm(B1_hat - B1, 2)) <= data_bound,
        "apriori_covered": (not np.isfinite(ap.eps_B[0])) or float(np.linalg.norm(B1_hat - B1, 2)) <= ap.eps_B[0],
    }


def run_error_sweep(cfg: dict, out_dir) -> list[dict]:
    """Mean/std of the affine identification error and both bounds over a grid.

    kind "error-vs-T" sweeps T at fixed n_x; "error-vs-nx" sweeps n_x at fixed T.
    """
    kind = cfg["kind"]
    sigma_w = float(cfg.get("sigma_w", 0.5))
    delta = float(cfg.get("delta", 0.1))
    trials = int(cfg.get("trials", 30))
    seed = int(cfg.get("seed", 0))
    if kind == "error-vs-T":
        points = [(int(cfg.get("n_x", 25)), int(t)) for t in cfg["T_grid"]]
    elif kind == "error-vs-nx":
        points = [(int(n), int(cfg.get("T", 250_000))) for n in cfg["nx_grid"]]
    else:
        raise ValueError(f"unknown sweep kind {kind!r}")

    rows, records = [], []
    for p_idx, (n_x, T) in enumerate(points):
        res = [affine_error_trial(n_x, T, sigma_w, delta, substream(seed, p_idx, k))
               for k in range(trials)]
        err = np.array([r["err"] for r in res])
        db = np.array([r["data_bound"] for r in res])
        ab = float(res[0]["apriori_bound"])
        rec = {
            "n_x": n_x, "T": T, "trials": trials,
            "err_mean": float(err.mean()), "err_std": float(err.std()),
            "err_sqrtT_mean": float((err * math.sqrt(T)).mean()),
            "data_bound_mean": float(db.mean()), "data_bound_std": float(db.std()),
            "apriori_bound": ab,
            "ratio_apriori_over_err": float(ab / err.mean()),
            "ratio_data_over_err": float(db.mean() / err.mean()),
            "data_violations": int(sum(not r["data_covered"] for r in res)),
            "apriori_violations": int(sum(not r["apriori_covered"] for r in res)),
        }
        records.append(rec)
        rows.append([rec[k] for k in _ERROR_SWEEP_HEADER])
    _write_csv(Path(out_dir) / "error_sweep.csv", list(_ERROR_SWEEP_HEADER), rows,
               {"config": cfg, "seed": seed})
    return records


_ERROR_SWEEP_HEADER = ("n_x", "T", "trials", "err_mean", "err_std", "err_sqrtT_mean",
                       "data_bound_mean", "data_bound_std", "apriori_bound",
                       "ratio_apriori_over_err", "ratio_data_over_err",
                       "data_violations", "apriori_violations")


# --- pipeline pieces shared by the controller studies -------------------------

def _residual_bound(kind: str, datasets, sigma_x, delta, sigma_w, n_x, n_u, box,
                    norm_overestimate=False):
    grams = [gram(ds, sigma_x) for ds in datasets]
    if kind == "ellipsoidal":
        q = qdelta_ellipsoidal(ellipsoidal_bounds(grams, delta, sigma_w, n_x, n_u), box, n_x)
    elif kind == "data":
        q = qdelta_individual(data_dependent_bounds(grams, delta, sigma_w, sigma_x, n_x, n_u), box, n_x)
    elif kind == "apriori":
        T_list = [ds.T for ds in sorted(datasets, key=lambda d: d.input_index)]
        q = qdelta_individual(a_priori_bounds(n_x, n_u, delta, sigma_w, sigma_x, T_list), box, n_x)
    else:
        raise ValueError(f"unknown bound kind {kind!r}")
    if norm_overestimate and q.finite:
        q = overestimate_norm(q)
    return q


def synthesis_options_from_cfg(cfg: dict):
    """Non-default synthesis knobs; the objective switch is config-only."""
    from .synthesis import SynthesisOptions
    obj = cfg.get("synthesis_objective", "trace-p")
    if obj not in ("trace-p", "min-tau"):
        raise ValueError(f"unknown synthesis objective {obj!r}")
    return SynthesisOptions(objective=obj)


def design_from_data(sys_est_datasets, sigma_x, delta, sigma_w, region, box, bound_kind,
                     norm_overestimate=False, synthesis_opts=None):
    """identify -> bound -> residual quadratic -> synthesize, from raw datasets.

    Rank-deficient regressors (too little data) are reported as an infeasible
    design rather than an exception, matching the retry semantics of the
    end-to-end loop.
    """
    from .identify import RankDeficientError
    from .residual import ResidualQuadBound
    from .synthesis import ControllerSolution
    try:
        est, _ = identify(sys_est_datasets, sigma_x)
    except RankDeficientError as exc:
        q = ResidualQuadBound(Q=None, delta=delta, provenance=bound_kind,
                              n_x=sys_est_datasets[0].n_x, n_u=len(sys_est_datasets) - 1,
                              finite=False)
        sol = ControllerSolution(None, None, None, None, None, None, None,
                                 status="infeasible", method="rank-deficient-data",
                                 diagnostics={"reason": str(exc)})
        return None, q, sol
    q = _residual_bound(bound_kind, sys_est_datasets, sigma_x, delta, sigma_w,
                        est.n_x, est.n_u, box, norm_overestimate)
    sol = synthesize(est, region, q, opts=synthesis_opts)
    return est, q, sol


# --- feasibility search (Tables 1 and 2) --------------------------------------

def minimal_feasible_T(sys: BilinearSystem, region: StateRegion, box: InputBox, *,
                       bound_kind: str, sigma_w: float, delta: float, seed: int,
                       cap: int, sigma_x: float = 1.0,
                       sampler: StateSamplerSpec | None = None,
                       norm_overestimate: bool = False) -> dict:
    """Smallest common data length T0 = ... = Tnu with a feasible verified design.

    Data are collected once at the cap and reused as prefixes across the
    doubling/bisection search, so feasibility is monotone along the search
    path; fresh draws per T would break the bisection invariant.
    """
    sampler = sampler or StateSamplerSpec(sigma_x=sigma_x)
    plan = CollectionPlan(T_list=(cap,) * (sys.n_u + 1), sampler=sampler,
                          noise=NoiseSpec(sigma_w=sigma_w), seed=seed)
    full = collect(sys, plan)
    trace = []

    def attempt(T):
        datasets = [ds.prefix(T) for ds in full]
        est, q, sol = design_from_data(datasets, sigma_x, delta, sigma_w, region, box,
                                       bound_kind, norm_overestimate)
        trace.append({"T": T, "status": sol.status,
                      "trace_P": sol.objective if sol.feasible else None})
        return sol

    lo = max(sys.n_x + 2, 4)
    hi = lo
    sol_hi = attempt(hi)
    while not sol_hi.feasible and hi < cap:
        lo, hi = hi, min(2 * hi, cap)
        sol_hi = attempt(hi)
    if not sol_hi.feasible:
        return {"T_min": None, "capped": True, "trace": trace, "trace_P": None}
    best = sol_hi
    while hi - lo > 1:
        mid = (lo + hi) // 2
        sol_mid = attempt(mid)
        if sol_mid.feasible:
            hi, best = mid, sol_mid
        else:
            lo = mid
    return {"T_min": hi, "capped": False, "trace": trace, "trace_P": best.objective}


def run_feasibility_search(cfg: dict, out_dir) -> list[dict]:
    """Minimal data length per region value, bound kind, and seed."""
    sys = _system_from_cfg(cfg)
    box = _box_from_cfg(cfg, sys.n_u)
    sigma_w = float(cfg.get("sigma_w", 0.1))
    delta = float(cfg.get("delta", 0.05))
    cap = int(cfg.get("cap", 200_000))
    seeds = [int(s) for s in cfg.get("seeds", [0, 1, 2, 3, 4])]
    kinds = list(cfg.get("bound_kinds", ["ellipsoidal", "data"]))
    regions = _region_grid_from_cfg(cfg, sys.n_x)

    rows, records = [], []
    for label, region in regions:
        for kind in kinds:
            per_seed = []
            for seed in seeds:
                res = minimal_feasible_T(sys, region, box, bound_kind=kind, sigma_w=sigma_w,
                                         delta=delta, seed=seed, cap=cap,
                                         norm_overestimate=bool(cfg.get("norm_overestimate", False)))
                per_seed.append(res)
                rows.append([label, kind, seed,
                             res["T_min"] if res["T_min"] is not None else f">{cap}",
                             res["trace_P"] if res["trace_P"] is not None else ""])
            finite = [r["T_min"] for r in per_seed if r["T_min"] is not None]
            records.append({"region": label, "bound_kind": kind,
                            "T_min_by_seed": [r["T_min"] for r in per_seed],
                            "T_min_median": float(np.median(finite)) if finite else None,
                            "capped_seeds": sum(r["capped"] for r in per_seed)})
    _write_csv(Path(out_dir) / "feasibility_search.csv",
               ["region", "bound_kind", "seed", "T_min", "trace_P"], rows,
               {"config": cfg, "seeds": seeds})
    (Path(out_dir) / "feasibility_summary.json").write_text(json.dumps(records, indent=2))
    return records


# --- end-to-end loop (choose parameters, collect, design, retry) ---------------

def run_end_to_end(cfg: dict, out_dir=None) -> dict:
    """One pass of the full design loop with the doubling retry policy."""
    sys = _system_from_cfg(cfg)
    box = _box_from_cfg(cfg, sys.n_u)
    region = _region_from_cfg(cfg, sys.n_x)
    sigma_w = float(cfg.get("sigma_w", 0.1))
    sigma_x = float(cfg.get("sigma_x", 1.0))
    delta = float(cfg.get("delta", 0.05))
    bound_kind = cfg.get("bound_kind", "ellipsoidal")
    retries = int(cfg.get("retries", 3))
    seed = int(cfg.get("seed", 0))
    T_list = [int(t) for t in (cfg["T_list"] if "T_list" in cfg
                               else [cfg.get("T", 1000)] * (sys.n_u + 1))]
    sampler = _sampler_from_cfg(cfg)

    report = {"config": cfg, "seed": seed, "attempts": []}
    for attempt in range(retries + 1):
        plan = CollectionPlan(T_list=tuple(T_list), sampler=sampler,
                              noise=NoiseSpec(sigma_w=sigma_w), seed=int(substream(seed, attempt).integers(2 ** 63)))
        datasets = collect(sys, plan)
        est, q, sol = design_from_data(datasets, sigma_x, delta, sigma_w, region, box,
                                       bound_kind, bool(cfg.get("norm_overestimate", False)),
                                       synthesis_opts=synthesis_options_from_cfg(cfg))
        entry = {"attempt": attempt, "T_list": list(T_list), "status": sol.status,
                 "q_finite": q.finite,
                 "q_norm": float(np.linalg.norm(q.Q, 2)) if q.finite else None}
        if sol.feasible:
            certs = []
            rng = substream(seed, 10_000 + attempt)
            w, V = np.linalg.eigh(0.5 * (sol.P + sol.P.T))
            n_sim = int(cfg.get("n_certificate_sims", 5))
            for k in range(n_sim):
                v = rng.standard_normal(sys.n_x)
                v /= np.linalg.norm(v)
                x0 = (V * np.sqrt(np.clip(w, 0, None))) @ v * float(rng.uniform(0.2, 0.99))
                sim = simulate_closed_loop(sys, sol, x0, steps=int(cfg.get("sim_steps", 200)),
                                           region=region)
                certs.append(sim.to_dict())
            entry.update({"roa": roa_report(sol, region), "controller": sol.to_dict(),
                          "certificates": certs,
                          "certificates_pass": all(c["passed"] for c in certs)})
            report["attempts"].append(entry)
            report["status"] = "success"
            break
        report["attempts"].append(entry)
        T_list = [2 * t for t in T_list]
    else:
        report["status"] = "failure"
        report["reason"] = f"retries exhausted after {retries + 1} attempts"
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "end_to_end_report.json").write_text(json.dumps(report, indent=2, sort_keys=True))
    return report


# --- pendulum study -------------------------------------------------------------

def roa_boundary_in_base_plane(sol, n_angles: int = 180, r_max: float = 8.0) -> np.ndarray:
    """Boundary of {z : Phi(z)' P^-1 Phi(z) = 1} in the (z1, z2) plane.

    Radial bisection on each ray; rays that never reach the boundary within
    r_max are skipped (the set is star-shaped around the origin in practice).
    """
    spec = pendulum_lifting()
    Pinv = np.linalg.inv(sol.P)

    def quad(r, c, s):
        x = np.array([r * c, r * s, np.sin(r * c)])
        return x @ Pinv @ x

    pts = []
    for theta in np.linspace(0.0, 2.0 * np.pi, n_angles, endpoint=False):
        c, s = np.cos(theta), np.sin(theta)
        if quad(r_max, c, s) < 1.0:
            continue
        lo, hi = 0.0, r_max
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            if quad(mid, c, s) <= 1.0:
                lo = mid
            else:
                hi = mid
        pts.append([lo * c, lo * s])
    return np.array(pts)


def run_pendulum(cfg: dict, out_dir=None) -> dict:
    """Lifted-pendulum study: ellipsoidal bounds, norm over-estimate, RoA, trajectories."""
    sys = pendulum_lifted_system()
    T = int(cfg.get("T", 50_000))
    sigma_w = float(cfg.get("sigma_w", 1e-3))
    delta = float(cfg.get("delta", 0.05))
    c = float(cfg.get("c", 11.0))
    seed = int(cfg.get("seed", 0))
    box = InputBox.symmetric(float(cfg.get("u_max", 2.0)), 1)
    region = region_from_norm_bound(c, 3)
    sampler = StateSamplerSpec(family="lifted", sigma_x=1.0, base_dim=2, lifting=pendulum_lifting())
    plan = CollectionPlan(T_list=(T, T), sampler=sampler, noise=NoiseSpec(sigma_w=sigma_w), seed=seed)
    datasets = collect(sys, plan)
    est, q, sol = design_from_data(datasets, 1.0, delta, sigma_w, region, box,
                                   "ellipsoidal", norm_overestimate=True,
                                   synthesis_opts=synthesis_options_from_cfg(cfg))
    report = {"config": cfg, "seed": seed, "T": T, "status": sol.status,
              "q_norm": float(np.linalg.norm(q.Q, 2)) if q.finite else None,
              "bound_kind": "ellipsoidal + norm-overestimate"}
    if not sol.feasible:
        report["reason"] = "synthesis infeasible; report carries the bound magnitude"
        if out_dir is not None:
            _pendulum_write(out_dir, report, None, [])
        return report

    report["roa"] = roa_report(sol, region)
    report["controller_trace_P"] = sol.objective
    boundary = roa_boundary_in_base_plane(sol)
    trajectories = []
    ics = [tuple(z) for z in cfg.get("initial_conditions", PENDULUM_INITIAL_CONDITIONS)]
    for z0 in ics:
        x0 = np.array([z0[0], z0[1], np.sin(z0[0])])
        sim = simulate_closed_loop(sys, sol, x0, steps=int(cfg.get("sim_steps", 2500)),
                                   region=region)
        trajectories.append({"z0": list(z0), "in_roa": roa_membership(sol, x0),
                             "certificate": sim.to_dict(), "states": sim.states})
    report["trajectories"] = [{k: t[k] for k in ("z0", "in_roa", "certificate")} for t in trajectories]
    report["all_converged"] = all(t["certificate"]["passed"] for t in report["trajectories"])
    if out_dir is not None:
        _pendulum_write(out_dir, report, boundary, trajectories)
    return report


def _pendulum_write(out_dir, report, boundary, trajectories):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "pendulum_report.json").write_text(json.dumps(report, indent=2, sort_keys=True))
    if boundary is not None and len(boundary):
        _write_csv(out / "pendulum_roa_boundary.csv", ["z1", "z2"],
                   [[float(a), float(b)] for a, b in boundary],
                   {"config": report["config"], "seed": report["seed"]})
    rows = []
    for t in trajectories:
        for step_idx, x in enumerate(t["states"]):
            rows.append([repr(t["z0"][0]) + "/" + repr(t["z0"][1]), step_idx,
                         float(x[0]), float(x[1]), float(x[2])])
    if rows:
        _write_csv(out / "pendulum_trajectories.csv", ["ic", "step", "z1", "z2", "sin_z1"],
                   rows, {"config": report["config"], "seed": report["seed"]})


# --- config helpers --------------------------------------------------------------

_NAMED_SYSTEMS = {
    "academic": academic_system,
    "cstr": cstr_system,
    "pendulum_lifted": pendulum_lifted_system,
}


def _system_from_cfg(cfg: dict) -> BilinearSystem:
    spec = cfg.get("system", {"name": "academic"})
    if "name" in spec:
        try:
            return _NAMED_SYSTEMS[spec["name"]]()
        except KeyError:
            raise ValueError(f"unknown named system {spec['name']!r}") from None
    return BilinearSystem.from_dict(spec)


def _sampler_from_cfg(cfg: dict) -> StateSamplerSpec:
    s = cfg.get("sampler", {})
    family = s.get("family", "gaussian-isotropic")
    if family == "lifted":
        from .lifting import LiftingSpec
        spec = LiftingSpec.from_dict(s["lifting"])
        return StateSamplerSpec(family="lifted", sigma_x=float(s.get("sigma_x", 1.0)),
                                base_dim=spec.n_z, lifting=spec)
    return StateSamplerSpec(family=family, sigma_x=float(s.get("sigma_x", 1.0)))


def _box_from_cfg(cfg: dict, n_u: int) -> InputBox:
    b = cfg.get("input_box", {"half_width": 2.0})
    if "half_width" in b:
        return InputBox.symmetric(float(b["half_width"]), n_u)
    return InputBox(lower=np.array(b["lower"], dtype=float), upper=np.array(b["upper"], dtype=float))


def _region_from_cfg(cfg: dict, n_x: int) -> StateRegion:
    r = cfg.get("region", {"kind": "norm-ball", "c": 0.1})
    if r.get("kind", "norm-ball") == "norm-ball":
        return region_from_norm_bound(float(r["c"]), n_x)
    return StateRegion(Qx=np.array(r["Qx"], dtype=float), Sx=np.array(r["Sx"], dtype=float),
                       Rx=float(r["Rx"]))


def _region_grid_from_cfg(cfg: dict, n_x: int) -> list[tuple[str, StateRegion]]:
    if "c_grid" in cfg:
        return [(f"c={c}", region_from_norm_bound(float(c), n_x)) for c in cfg["c_grid"]]
    if "Rx_grid" in cfg:
        Qx = np.array(cfg.get("Qx", (-np.eye(n_x)).tolist()), dtype=float)
        Sx = np.array(cfg.get("Sx", np.zeros(n_x).tolist()), dtype=float)
        return [(f"Rx={r}", StateRegion(Qx=Qx, Sx=Sx, Rx=float(r))) for r in cfg["Rx_grid"]]
    return [("region", _region_from_cfg(cfg, n_x))]
