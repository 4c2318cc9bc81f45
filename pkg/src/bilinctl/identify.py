"""Ordinary least squares for the linear and affine subsystems, plus the Gram
matrices whose smallest eigenvalues drive the data-dependent error bounds.

The normal equations are solved through numpy's SVD-based lstsq rather than
explicit Gram inversion; rank is decided at max(T, n_cols) * eps * sigma_max.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .collect import ExperimentDataset
from .systems import BilinearSystem


class RankDeficientError(ValueError):
    """Regressor matrix does not have full column rank."""

    def __init__(self, what, rank, needed):
        self.rank = rank
        self.needed = needed
        super().__init__(f"{what}: numerical rank {rank} < {needed}")


@dataclass
class EstimateSet:
    """OLS estimates of all unknown matrices of the bilinear system."""

    A_hat: np.ndarray
    B0_hat: np.ndarray
    B_hat_list: tuple[np.ndarray, ...]

    @property
    def n_x(self) -> int:
        return self.A_hat.shape[0]

    @property
    def n_u(self) -> int:
        return self.B0_hat.shape[1]

    @property
    def A_ux_hat(self) -> np.ndarray:
        return np.hstack([B - self.A_hat for B in self.B_hat_list])

    def as_system(self, name="estimate") -> BilinearSystem:
        return BilinearSystem(A=self.A_hat, B0=self.B0_hat, B_list=self.B_hat_list, name=name)

    def to_json(self) -> str:
        return json.dumps({"A_hat": self.A_hat.tolist(), "B0_hat": self.B0_hat.tolist(),
                           "B_hat_list": [B.tolist() for B in self.B_hat_list]})

    @classmethod
    def from_json(cls, s: str) -> "EstimateSet":
        d = json.loads(s)
        return cls(A_hat=np.array(d["A_hat"]), B0_hat=np.array(d["B0_hat"]),
                   B_hat_list=tuple(np.array(B) for B in d["B_hat_list"]))


@dataclass
class GramInfo:
    """Gram matrix of the sigma_x-normalized regressors for one experiment.

    Index 0 uses M = sum xi_t xi_t'; index >= 1 appends the constant regressor,
    M = [[sum xi xi', sum xi], [sum xi', T]].
    """

    input_index: int
    M: np.ndarray
    T: int

    @property
    def lambda_min(self) -> float:
        return float(np.linalg.eigvalsh(0.5 * (self.M + self.M.T))[0])


def _lstsq_full_rank(regressors: np.ndarray, targets: np.ndarray, what: str) -> np.ndarray:
    sol, _, rank, _ = np.linalg.lstsq(regressors, targets, rcond=None)
    needed = regressors.shape[1]
    if rank < needed:
        raise RankDeficientError(what, rank, needed)
    return sol


def ols_linear(dataset: ExperimentDataset) -> np.ndarray:
    """Estimate A from the zero-input experiment: A_hat' = (X'X)^-1 X'X+."""
    if dataset.input_index != 0:
        raise ValueError("ols_linear expects the input_index 0 dataset")
    return _lstsq_full_rank(dataset.X, dataset.Xplus, "X").T


def ols_affine(dataset: ExperimentDataset) -> tuple[np.ndarray, np.ndarray]:
    """Estimate (B_i, [B0]_i) from experiment i >= 1 via the augmented regressor [x' 1]."""
    if dataset.input_index < 1:
        raise ValueError("ols_affine expects an input_index >= 1 dataset")
    Y = np.hstack([dataset.X, np.ones((dataset.T, 1))])
    theta = _lstsq_full_rank(Y, dataset.Xplus, "Y").T      # n_x x (n_x + 1)
    return theta[:, :-1], theta[:, -1]


def gram(dataset: ExperimentDataset, sigma_x: float) -> GramInfo:
    """Gram matrix of the normalized regressors xi_t = x_t / sigma_x."""
    if sigma_x <= 0:
        raise ValueError("sigma_x must be positive")
    Xi = dataset.X / sigma_x
    S = Xi.T @ Xi
    if dataset.input_index == 0:
        M = S
    else:
        s = Xi.sum(axis=0)
        M = np.block([[S, s[:, None]], [s[None, :], np.array([[float(dataset.T)]])]])
    return GramInfo(input_index=dataset.input_index, M=0.5 * (M + M.T), T=dataset.T)


def assemble(A_hat: np.ndarray, affine_estimates: dict[int, tuple[np.ndarray, np.ndarray]]) -> EstimateSet:
    """Combine per-experiment estimates into one EstimateSet.

    affine_estimates maps input_index i >= 1 to (B_hat_i, b0_hat_i); all of
    1..n_u must be present, in any order.
    """
    if not affine_estimates:
        raise ValueError("need at least one affine experiment")
    n_u = max(affine_estimates)
    missing = sorted(set(range(1, n_u + 1)) - set(affine_estimates))
    if missing:
        raise ValueError(f"missing affine experiments for input indices {missing}")
    B_list = tuple(np.asarray(affine_estimates[i][0], dtype=float) for i in range(1, n_u + 1))
    B0 = np.column_stack([np.asarray(affine_estimates[i][1], dtype=float) for i in range(1, n_u + 1)])
    return EstimateSet(A_hat=np.asarray(A_hat, dtype=float), B0_hat=B0, B_hat_list=B_list)


def identify(datasets: list[ExperimentDataset], sigma_x: float = 1.0) -> tuple[EstimateSet, list[GramInfo]]:
    """Full identification pass: OLS for every experiment plus Gram information."""
    by_index = {ds.input_index: ds for ds in datasets}
    if 0 not in by_index:
        raise ValueError("missing the zero-input experiment")
    A_hat = ols_linear(by_index[0])
    affine = {i: ols_affine(ds) for i, ds in by_index.items() if i >= 1}
    est = assemble(A_hat, affine)
    grams = [gram(by_index[i], sigma_x) for i in sorted(by_index)]
    return est, grams
