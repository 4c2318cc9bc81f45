"""Data collection: n_u + 1 experiments with constant inputs u = 0 and u = e_i.

Each experiment samples states i.i.d. from the declared sampler, applies the
constant input, and records successor states.  Experiments use disjoint seed
substreams derived from the master seed and the input index, so they are
statistically independent and individually replayable.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .systems import (BilinearSystem, NoiseSpec, StateSamplerSpec, sample_noise,
                      sample_states, step_batch, substream)


@dataclass
class ExperimentDataset:
    """Regression data for one subsystem: constant input u^i, i = input_index.

    W is the realized noise; it is kept for test oracles only and the
    identification operations never read it.
    """

    input_index: int
    X: np.ndarray
    Xplus: np.ndarray
    W: np.ndarray | None = None

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        self.Xplus = np.asarray(self.Xplus, dtype=float)
        if self.X.ndim != 2 or self.X.shape != self.Xplus.shape:
            raise ValueError("X and Xplus must be equal-shape (T, n_x) arrays")
        if self.T < 1:
            raise ValueError("need at least one sample")
        if self.input_index < 0:
            raise ValueError("input_index must be >= 0")

    @property
    def T(self) -> int:
        return self.X.shape[0]

    @property
    def n_x(self) -> int:
        return self.X.shape[1]

    def prefix(self, T: int) -> "ExperimentDataset":
        """First T rows as a new dataset (used by feasibility searches)."""
        return ExperimentDataset(self.input_index, self.X[:T], self.Xplus[:T],
                                 None if self.W is None else self.W[:T])


@dataclass(frozen=True)
class CollectionPlan:
    """Sample counts, sampler, noise, and master seed for one collection run."""

    T_list: tuple[int, ...]
    sampler: StateSamplerSpec
    noise: NoiseSpec
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "T_list", tuple(int(t) for t in self.T_list))
        if any(t < 1 for t in self.T_list):
            raise ValueError("all T_i must be >= 1")


def constant_input(n_u: int, index: int) -> np.ndarray:
    """u^0 = 0, u^i = e_i for i >= 1."""
    u = np.zeros(n_u)
    if index >= 1:
        u[index - 1] = 1.0
    return u


def collect(sys: BilinearSystem, plan: CollectionPlan) -> list[ExperimentDataset]:
    """Run the n_u + 1 constant-input experiments and return one dataset each."""
    if len(plan.T_list) != sys.n_u + 1:
        raise ValueError(f"plan.T_list must have n_u + 1 = {sys.n_u + 1} entries, got {len(plan.T_list)}")
    datasets = []
    for i, T in enumerate(plan.T_list):
        rng = substream(plan.seed, i)
        X = sample_states(plan.sampler, sys.n_x, T, rng)
        W = sample_noise(plan.noise, sys.n_x, rng, size=T)
        Xplus = step_batch(sys, X, constant_input(sys.n_u, i), W)
        datasets.append(ExperimentDataset(input_index=i, X=X, Xplus=Xplus, W=W))
    return datasets


def validate_assumption(dataset: ExperimentDataset, sigma_x: float = 1.0) -> dict:
    """Advisory diagnostics for the i.i.d. zero-mean sampling assumption.

    Flags (warning only) coordinates whose empirical mean deviates from zero by
    more than 4 sigma_x / sqrt(T); also reports the empirical covariance
    spectrum so gross anisotropy is visible.
    """
    if dataset.T < 2:
        mean = dataset.X.mean(axis=0)
        return {"T": dataset.T, "mean": mean.tolist(), "mean_norm": float(np.linalg.norm(mean)),
                "cov_spectrum": [], "flagged_coords": [], "ok": True,
                "note": "T < 2: tolerance too wide to test anything"}
    mean = dataset.X.mean(axis=0)
    cov = np.cov(dataset.X, rowvar=False).reshape(dataset.n_x, dataset.n_x)
    tol = 4.0 * sigma_x / np.sqrt(dataset.T)
    flagged = [int(j) for j in np.nonzero(np.abs(mean) > tol)[0]]
    return {
        "T": dataset.T,
        "mean": mean.tolist(),
        "mean_norm": float(np.linalg.norm(mean)),
        "mean_tolerance_per_coord": tol,
        "cov_spectrum": np.linalg.eigvalsh(0.5 * (cov + cov.T)).tolist(),
        "flagged_coords": flagged,
        "ok": not flagged,
    }


def export_datasets(datasets: list[ExperimentDataset], plan: CollectionPlan, out_dir) -> Path:
    """Write one CSV per experiment plus a JSON manifest; returns the manifest path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    n_x = datasets[0].n_x
    header = [f"x_{j + 1}" for j in range(n_x)] + [f"xplus_{j + 1}" for j in range(n_x)]
    files = []
    for ds in datasets:
        name = f"experiment_{ds.input_index}.csv"
        with open(out / name, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for xr, xp in zip(ds.X, ds.Xplus):
                w.writerow([repr(float(v)) for v in xr] + [repr(float(v)) for v in xp])
        files.append(name)
    manifest = {
        "seed": plan.seed,
        "T_list": list(plan.T_list),
        "sampler": {"family": plan.sampler.family, "sigma_x": plan.sampler.sigma_x,
                    "base_dim": plan.sampler.base_dim,
                    "lifting": plan.sampler.lifting.to_dict() if plan.sampler.lifting is not None else None},
        "noise": {"family": plan.noise.family, "sigma_w": plan.noise.sigma_w},
        "files": files,
    }
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2))
    return path


def import_datasets(manifest_path) -> tuple[list[ExperimentDataset], dict]:
    """Read datasets written by export_datasets.  W is not persisted."""
    manifest_path = Path(manifest_path)
    manifest = json.loads(manifest_path.read_text())
    datasets = []
    for i, name in enumerate(manifest["files"]):
        rows = []
        with open(manifest_path.parent / name, newline="") as fh:
            r = csv.reader(fh)
            header = next(r)
            n_x = sum(1 for h in header if h.startswith("x_"))
            for row in r:
                rows.append([float(v) for v in row])
        arr = np.array(rows)
        datasets.append(ExperimentDataset(input_index=i, X=arr[:, :n_x], Xplus=arr[:, n_x:]))
    return datasets, manifest
