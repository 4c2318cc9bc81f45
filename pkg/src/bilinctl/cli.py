"""Command-line front end.

Subcommands: collect, identify, bounds, synthesize, simulate, sweep, pendulum.
Global flags: --config <file|->  --seed <int>  --out <dir>
              --bound-kind {apriori,data,ellipsoidal}  --trials <n>
Exit codes: 0 success, 2 infeasible design, 3 config error, 4 solver error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .bounds import a_priori_bounds, data_dependent_bounds, ellipsoidal_bounds
from .collect import CollectionPlan, collect, export_datasets, import_datasets
from .config import ConfigError, default_out_dir, load_config, validate_config
from .experiments import (_box_from_cfg, _region_from_cfg, _sampler_from_cfg, _system_from_cfg,
                          design_from_data, run_end_to_end, run_error_sweep,
                          run_feasibility_search, run_pendulum, synthesis_options_from_cfg)
from .identify import gram, identify
from .synthesis import simulate_closed_loop, synthesize
from .systems import NoiseSpec

EXIT_OK, EXIT_INFEASIBLE, EXIT_CONFIG, EXIT_SOLVER = 0, 2, 3, 4


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bilinctl",
                                description="Finite-sample identification and robust control of bilinear systems")
    p.add_argument("--config", help="JSON config file, or - for stdin")
    p.add_argument("--seed", type=int, help="master seed (overrides config)")
    p.add_argument("--out", help="output directory (default: $BILINCTL_OUT or ./bilinctl-out)")
    p.add_argument("--bound-kind", choices=("apriori", "data", "ellipsoidal"),
                   help="bound family (overrides config)")
    p.add_argument("--trials", type=int, help="Monte Carlo trials (overrides config)")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("collect", help="run the n_u+1 experiments and export datasets as CSV")
    sub.add_parser("identify", help="OLS estimates from a dataset directory or fresh data")
    sub.add_parser("bounds", help="identification error bounds for collected data")
    sub.add_parser("synthesize", help="full design pass: collect, identify, bound, synthesize")
    sim = sub.add_parser("simulate", help="closed-loop simulation of a synthesized design")
    sim.add_argument("--x0", help="comma-separated initial state (default: RoA boundary sample)")
    sim.add_argument("--steps", type=int, default=200)
    sub.add_parser("sweep", help="error sweeps or feasibility searches per the config kind")
    sub.add_parser("pendulum", help="lifted inverted-pendulum study")
    return p


def _merged_config(args) -> dict:
    cfg = validate_config(load_config(args.config))
    if args.seed is not None:
        cfg["seed"] = args.seed
    if args.bound_kind is not None:
        cfg["bound_kind"] = args.bound_kind
    if args.trials is not None:
        cfg["trials"] = args.trials
    return cfg


def _collect_from_cfg(cfg):
    sys_ = _system_from_cfg(cfg)
    T_list = cfg["T_list"] if "T_list" in cfg else [int(cfg.get("T", 1000))] * (sys_.n_u + 1)
    plan = CollectionPlan(T_list=tuple(int(t) for t in T_list), sampler=_sampler_from_cfg(cfg),
                          noise=NoiseSpec(sigma_w=float(cfg.get("sigma_w", 0.1))),
                          seed=int(cfg.get("seed", 0)))
    return sys_, plan, collect(sys_, plan)


def cmd_collect(cfg, out: Path) -> int:
    _, plan, datasets = _collect_from_cfg(cfg)
    manifest = export_datasets(datasets, plan, out / "datasets")
    print(f"wrote {len(datasets)} experiment datasets; manifest: {manifest}")
    return EXIT_OK


def cmd_identify(cfg, out: Path) -> int:
    manifest = out / "datasets" / "manifest.json"
    if manifest.exists():
        datasets, _ = import_datasets(manifest)
    else:
        _, _, datasets = _collect_from_cfg(cfg)
    est, grams = identify(datasets, float(cfg.get("sigma_x", 1.0)))
    out.mkdir(parents=True, exist_ok=True)
    (out / "estimates.json").write_text(est.to_json())
    summary = {"lambda_min": {g.input_index: g.lambda_min for g in grams}}
    print(json.dumps(summary, indent=2))
    return EXIT_OK


def cmd_bounds(cfg, out: Path) -> int:
    sys_, _, datasets = _collect_from_cfg(cfg)
    sigma_x = float(cfg.get("sigma_x", 1.0))
    delta = float(cfg.get("delta", 0.05))
    sigma_w = float(cfg.get("sigma_w", 0.1))
    grams = [gram(ds, sigma_x) for ds in datasets]
    kind = cfg.get("bound_kind", "data")
    if kind == "apriori":
        b = a_priori_bounds(sys_.n_x, sys_.n_u, delta, sigma_w, sigma_x, [ds.T for ds in datasets])
    elif kind == "data":
        b = data_dependent_bounds(grams, delta, sigma_w, sigma_x, sys_.n_x, sys_.n_u)
    else:
        b = ellipsoidal_bounds(grams, delta, sigma_w, sys_.n_x, sys_.n_u)
    out.mkdir(parents=True, exist_ok=True)
    (out / "bounds.json").write_text(json.dumps(b.to_dict(), indent=2))
    print(json.dumps(b.to_dict(), indent=2))
    return EXIT_OK


def _design(cfg):
    sys_, _, datasets = _collect_from_cfg(cfg)
    region = _region_from_cfg(cfg, sys_.n_x)
    box = _box_from_cfg(cfg, sys_.n_u)
    kind = cfg.get("bound_kind", "ellipsoidal")
    est, q, sol = design_from_data(datasets, float(cfg.get("sigma_x", 1.0)),
                                   float(cfg.get("delta", 0.05)), float(cfg.get("sigma_w", 0.1)),
                                   region, box, kind, bool(cfg.get("norm_overestimate", False)),
                                   synthesis_opts=synthesis_options_from_cfg(cfg))
    return sys_, region, est, q, sol


def cmd_synthesize(cfg, out: Path) -> int:
    _, _, _, q, sol = _design(cfg)
    out.mkdir(parents=True, exist_ok=True)
    payload = {"q": q.to_dict(), "solution": sol.to_dict()}
    (out / "controller.json").write_text(json.dumps(payload, indent=2, sort_keys=True))
    print(f"synthesis status: {sol.status} (method {sol.method})")
    if sol.status == "feasible":
        return EXIT_OK
    return EXIT_INFEASIBLE if sol.status == "infeasible" else EXIT_SOLVER


def cmd_simulate(cfg, out: Path, args) -> int:
    sys_, region, _, _, sol = _design(cfg)
    if sol.status != "feasible":
        print(f"synthesis status: {sol.status}; nothing to simulate")
        return EXIT_INFEASIBLE if sol.status == "infeasible" else EXIT_SOLVER
    if args.x0:
        x0 = np.array([float(v) for v in args.x0.split(",")])
    else:
        w, V = np.linalg.eigh(sol.P)
        x0 = 0.9 * V[:, -1] * np.sqrt(max(w[-1], 0.0))
    sim = simulate_closed_loop(sys_, sol, x0, steps=args.steps, region=region)
    out.mkdir(parents=True, exist_ok=True)
    (out / "simulation.json").write_text(json.dumps(sim.to_dict(), indent=2, sort_keys=True))
    print(json.dumps(sim.to_dict(), indent=2))
    return EXIT_OK if sim.passed else EXIT_SOLVER


def cmd_sweep(cfg, out: Path) -> int:
    kind = cfg.get("kind", "error-vs-T")
    if kind in ("error-vs-T", "error-vs-nx"):
        run_error_sweep(cfg, out)
    elif kind == "feasibility-search":
        run_feasibility_search(cfg, out)
    elif kind == "end-to-end":
        report = run_end_to_end(cfg, out)
        return EXIT_OK if report["status"] == "success" else EXIT_INFEASIBLE
    else:
        raise ConfigError(f"unknown sweep kind {kind!r}")
    print(f"sweep outputs written to {out}")
    return EXIT_OK


def cmd_pendulum(cfg, out: Path) -> int:
    report = run_pendulum(cfg, out)
    print(f"pendulum synthesis: {report['status']}")
    if report["status"] == "feasible":
        return EXIT_OK
    return EXIT_INFEASIBLE if report["status"] == "infeasible" else EXIT_SOLVER


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        cfg = _merged_config(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = default_out_dir(args.out)
    try:
        if args.command == "collect":
            return cmd_collect(cfg, out)
        if args.command == "identify":
            return cmd_identify(cfg, out)
        if args.command == "bounds":
            return cmd_bounds(cfg, out)
        if args.command == "synthesize":
            return cmd_synthesize(cfg, out)
        if args.command == "simulate":
            return cmd_simulate(cfg, out, args)
        if args.command == "sweep":
            return cmd_sweep(cfg, out)
        if args.command == "pendulum":
            return cmd_pendulum(cfg, out)
        raise AssertionError(f"unhandled command {args.command}")
    except (ConfigError, KeyError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except RuntimeError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    raise SystemExit(main())
