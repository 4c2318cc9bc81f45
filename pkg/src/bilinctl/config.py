"""JSON run-configuration loading and validation.

Schema (all sections optional unless a command requires them):

    {
      "system":    {"name": "academic" | "cstr" | "pendulum_lifted"}
                   or {"A": [[...]], "B0": [[...]], "B_list": [[[...]]]}
                   or {"A": ..., "B0": ..., "A_list": ...},
      "sampler":   {"family": "gaussian-isotropic" | "uniform-box" | "lifted",
                    "sigma_x": 1.0, "lifting": {"kind": ..., "n_z": ..., ...}},
      "noise":     {"family": "gaussian-isotropic" | ..., "sigma_w": 0.1},
      "sigma_w":   0.1,            # shorthand when "noise" is omitted
      "sigma_x":   1.0,
      "delta":     0.05,
      "T":         1000            # or "T_list": [T0, T1, ...],
      "region":    {"kind": "norm-ball", "c": 0.1}
                   or {"kind": "matrices", "Qx": ..., "Sx": ..., "Rx": ...},
      "input_box": {"half_width": 2.0} or {"lower": [...], "upper": [...]},
      "bound_kind": "apriori" | "data" | "ellipsoidal",
      "norm_overestimate": false,
      "retries":   3,
      "seed":      0,
      "kind":      "error-vs-T" | "error-vs-nx",       # sweep selector
      "T_grid":    [...], "nx_grid": [...], "c_grid": [...], "Rx_grid": [...],
      "trials":    30, "seeds": [...], "cap": 200000
    }

The environment variable BILINCTL_OUT provides the default output directory.
"""

from __future__ import annotations

import json
import os
import sys
from pathlib import Path

BOUND_KINDS = ("apriori", "data", "ellipsoidal")
DEFAULT_OUT_ENV = "BILINCTL_OUT"


class ConfigError(ValueError):
    pass


def load_config(path_or_dash: str | None) -> dict:
    """Read a JSON config from a file path, or from stdin when given '-'."""
    if path_or_dash is None:
        return {}
    try:
        if path_or_dash == "-":
            return json.load(sys.stdin)
        return json.loads(Path(path_or_dash).read_text())
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path_or_dash}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc


def validate_config(cfg: dict) -> dict:
    if not isinstance(cfg, dict):
        raise ConfigError("config root must be a JSON object")
    if "delta" in cfg and not (0.0 < float(cfg["delta"]) < 1.0):
        raise ConfigError("delta must lie in (0, 1)")
    if "bound_kind" in cfg and cfg["bound_kind"] not in BOUND_KINDS:
        raise ConfigError(f"bound_kind must be one of {BOUND_KINDS}")
    if "noise" in cfg:
        cfg.setdefault("sigma_w", cfg["noise"].get("sigma_w", 0.1))
    for key in ("T", "retries", "cap", "seed"):
        if key in cfg and int(cfg[key]) < 0:
            raise ConfigError(f"{key} must be nonnegative")
    if "trials" in cfg and int(cfg["trials"]) < 1:
        raise ConfigError("trials must be >= 1")
    if "T_list" in cfg and any(int(t) < 1 for t in cfg["T_list"]):
        raise ConfigError("all entries of T_list must be >= 1")
    for key in ("T_grid", "nx_grid", "c_grid", "Rx_grid"):
        if key in cfg and not cfg[key]:
            raise ConfigError(f"{key} must be a nonempty list")
    if "sweep" in cfg:
        # flattened sweeps are also accepted at the top level
        inner = dict(cfg.pop("sweep"))
        inner.update({k: v for k, v in cfg.items() if k not in inner})
        cfg = inner
    return cfg


def default_out_dir(cli_value: str | None) -> Path:
    if cli_value:
        return Path(cli_value)
    return Path(os.environ.get(DEFAULT_OUT_ENV, "bilinctl-out"))
