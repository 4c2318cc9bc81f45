"""Finite-sample identification error bounds: a priori and data-dependent
spectral bounds plus ellipsoidal bounds, with burn-in validation.

Conventions shared by all three families:
  * natural logarithms throughout; log(9**n_x) is computed as n_x*log(9) so
    nothing overflows for large state dimensions;
  * the failure budget is fixed as in the union-bound proofs: delta/2 for the
    zero-input experiment and delta/(2 n_u) for each affine experiment;
  * a Gram matrix with zero smallest eigenvalue (or a violated burn-in
    condition) yields an infinite bound, flagged per experiment.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import log, sqrt

import numpy as np

from .identify import EstimateSet, GramInfo
from .systems import BilinearSystem

LOG9 = log(9.0)
_C_AFFINE = 4.0 * sqrt(10.0) / 3.0          # noise-term constant of the affine analysis
_BURN_AFFINE = 64.0 * (3.0 + 2.0 * sqrt(2.0))


def _check_delta(delta: float):
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie in (0, 1)")


@dataclass
class SpectralBoundSet:
    """Per-matrix spectral-norm bounds; entries are +inf when not certified."""

    eps_A: float
    eps_B: np.ndarray
    eps_b0: np.ndarray
    delta: float
    kind: str                                 # "a-priori" | "data-dependent"
    burn_in_ok: list[bool] = field(default_factory=list)

    @property
    def all_finite(self) -> bool:
        return np.isfinite(self.eps_A) and np.all(np.isfinite(self.eps_B)) and np.all(np.isfinite(self.eps_b0))

    def to_dict(self) -> dict:
        return {"kind": self.kind, "delta": self.delta, "eps_A": self.eps_A,
                "eps_B": list(self.eps_B), "eps_b0": list(self.eps_b0),
                "burn_in_ok": list(self.burn_in_ok)}


@dataclass
class EllipsoidBoundSet:
    """PSD-order bounds on the error outer products; None marks an uncertified entry."""

    E_A: np.ndarray | None
    E_B: list[np.ndarray | None]
    delta: float
    C1: float
    burn_in_ok: list[bool] = field(default_factory=list)

    @property
    def all_finite(self) -> bool:
        return self.E_A is not None and all(E is not None for E in self.E_B)

    def to_dict(self) -> dict:
        return {"kind": "ellipsoidal", "delta": self.delta, "C1": self.C1,
                "E_A": None if self.E_A is None else self.E_A.tolist(),
                "E_B": [None if E is None else E.tolist() for E in self.E_B],
                "burn_in_ok": list(self.burn_in_ok)}


def burn_in_a_priori(n_x: int, n_u: int, delta: float) -> tuple[float, float]:
    """Minimum sample counts for the a priori bounds (exact reals; callers ceil).

    T0_bar = 128 log(8 * 9**n_x / delta)
    Ti_bar = 64 (3 + 2 sqrt 2) log(8 n_u 9**n_x / delta)
    """
    _check_delta(delta)
    if n_x < 1 or n_u < 1:
        raise ValueError("dimensions must be >= 1")
    T0 = 128.0 * (log(8.0 / delta) + n_x * LOG9)
    Ti = _BURN_AFFINE * (log(8.0 * n_u / delta) + n_x * LOG9)
    return T0, Ti


def burn_in_data_dependent(n_x: int, n_u: int, delta: float) -> tuple[float, float]:
    """T0 >= 0.5 log(2 * 9**n_x / delta), Ti >= 0.5 log(2 n_u 9**(2 n_x) / delta)."""
    _check_delta(delta)
    T0 = 0.5 * (log(2.0 / delta) + n_x * LOG9)
    Ti = 0.5 * (log(2.0 * n_u / delta) + 2.0 * n_x * LOG9)
    return T0, Ti


def a_priori_bounds(n_x: int, n_u: int, delta: float, sigma_w: float, sigma_x: float,
                    T_list) -> SpectralBoundSet:
    """Bounds computable before any data from (n_x, n_u, delta, sigma_w, sigma_x, T).

    eps_A    = (sw/sx) * 16 sqrt(T0 L4) / T0,                L4 = log(4 * 9**n_x / delta)
    eps_Bi   = (sw/sx) * (4 sqrt10 / 3) sqrt(2 Ti L4u) / (Ti/2 - (4/3) sqrt(2 Ti L4u)),
    eps_b0i  = sigma_x * eps_Bi,                             L4u = log(4 n_u 9**n_x / delta)
    with entries set to +inf (and flagged) when T is below its burn-in time.
    """
    _check_delta(delta)
    if sigma_x <= 0:
        raise ValueError("sigma_x must be positive")
    T_list = [int(t) for t in T_list]
    if len(T_list) != n_u + 1:
        raise ValueError(f"T_list must have n_u + 1 = {n_u + 1} entries")
    T0_bar, Ti_bar = burn_in_a_priori(n_x, n_u, delta)
    burn_ok = [T_list[0] >= T0_bar] + [T_list[i] >= Ti_bar for i in range(1, n_u + 1)]

    if burn_ok[0]:
        L4 = log(4.0 / delta) + n_x * LOG9
        T0 = T_list[0]
        eps_A = (sigma_w / sigma_x) * 16.0 * sqrt(T0 * L4) / T0
    else:
        eps_A = np.inf

    L4u = log(4.0 * n_u / delta) + n_x * LOG9
    eps_B = np.full(n_u, np.inf)
    for i in range(1, n_u + 1):
        if not burn_ok[i]:
            continue
        Ti = T_list[i]
        num = _C_AFFINE * sqrt(2.0 * Ti * L4u)
        den = Ti / 2.0 - (4.0 / 3.0) * sqrt(2.0 * Ti * L4u)
        if den > 0:
            eps_B[i - 1] = (sigma_w / sigma_x) * num / den
        else:
            burn_ok[i] = False
    eps_b0 = sigma_x * eps_B
    return SpectralBoundSet(eps_A=float(eps_A), eps_B=eps_B, eps_b0=eps_b0,
                            delta=delta, kind="a-priori", burn_in_ok=burn_ok)


def data_eps_affine(T: int, lambda_min: float, n_x: int, n_u: int, delta: float,
                    sigma_w: float, sigma_x: float) -> float:
    """Data-dependent bound on ||B_hat_i - B_i||_2 for one affine experiment."""
    _check_delta(delta)
    if lambda_min <= 0:
        return float("inf")
    L2u = log(2.0 * n_u / delta) + n_x * LOG9
    return (sigma_w / sigma_x) * _C_AFFINE * sqrt(2.0 * T * L2u) / lambda_min


def data_dependent_bounds(gram_list: list[GramInfo], delta: float, sigma_w: float,
                          sigma_x: float, n_x: int, n_u: int) -> SpectralBoundSet:
    """Bounds using the realized smallest Gram eigenvalues.

    eps_A   = (sw/sx) *  4 sqrt(T0 log(4 * 9**n_x / delta))      / lambda_min(M_0)
    eps_Bi  = (sw/sx) * (4 sqrt10/3) sqrt(2 Ti log(2 n_u 9**n_x / delta)) / lambda_min(M_i)
    eps_b0i = sigma_x * eps_Bi
    A zero eigenvalue means an infinite bound (the inverse of 0 is taken as inf).
    """
    _check_delta(delta)
    if sigma_x <= 0:
        raise ValueError("sigma_x must be positive")
    by_index = {g.input_index: g for g in gram_list}
    if set(by_index) != set(range(n_u + 1)):
        raise ValueError(f"need GramInfo for every input index 0..{n_u}")
    T0_bar, Ti_bar = burn_in_data_dependent(n_x, n_u, delta)
    burn_ok = [by_index[0].T >= T0_bar] + [by_index[i].T >= Ti_bar for i in range(1, n_u + 1)]

    eps_A = np.inf
    if burn_ok[0]:
        lam0 = by_index[0].lambda_min
        if lam0 > 0:
            L4 = log(4.0 / delta) + n_x * LOG9
            eps_A = (sigma_w / sigma_x) * 4.0 * sqrt(by_index[0].T * L4) / lam0

    eps_B = np.full(n_u, np.inf)
    for i in range(1, n_u + 1):
        if burn_ok[i]:
            eps_B[i - 1] = data_eps_affine(by_index[i].T, by_index[i].lambda_min,
                                           n_x, n_u, delta, sigma_w, sigma_x)
    eps_b0 = sigma_x * eps_B
    return SpectralBoundSet(eps_A=float(eps_A), eps_B=eps_B, eps_b0=eps_b0,
                            delta=delta, kind="data-dependent", burn_in_ok=burn_ok)


def ellipsoid_scaling_A(n_x: int, delta: float, sigma_w: float) -> float:
    """sigma_w**2 (2 sqrt(n_x) + sqrt(2 log(2/delta)))**2."""
    _check_delta(delta)
    return sigma_w ** 2 * (2.0 * sqrt(n_x) + sqrt(2.0 * log(2.0 / delta))) ** 2


def ellipsoid_scaling_B(n_x: int, n_u: int, delta: float, sigma_w: float) -> float:
    """C1(n_x, delta) = sigma_w**2 (sqrt(n_x+1) + sqrt(n_x) + sqrt(2 log(2 n_u / delta)))**2."""
    _check_delta(delta)
    return sigma_w ** 2 * (sqrt(n_x + 1.0) + sqrt(n_x) + sqrt(2.0 * log(2.0 * n_u / delta))) ** 2


def ellipsoidal_bounds(gram_list: list[GramInfo], delta: float, sigma_w: float,
                       n_x: int, n_u: int) -> EllipsoidBoundSet:
    """PSD-order bounds (Gaussian-noise statement): E_A covers (A_hat - A)(A_hat - A)',
    E_Bi covers the stacked affine error outer product.

    Requires T0 >= n_x and Ti >= n_x + 1; singular Gram matrices yield
    uncertified (None) entries.
    """
    _check_delta(delta)
    by_index = {g.input_index: g for g in gram_list}
    if set(by_index) != set(range(n_u + 1)):
        raise ValueError(f"need GramInfo for every input index 0..{n_u}")
    burn_ok = [by_index[0].T >= n_x] + [by_index[i].T >= n_x + 1 for i in range(1, n_u + 1)]

    E_A = None
    if burn_ok[0] and by_index[0].lambda_min > 0:
        E_A = ellipsoid_scaling_A(n_x, delta, sigma_w) * np.linalg.inv(by_index[0].M)
        E_A = 0.5 * (E_A + E_A.T)
    C1 = ellipsoid_scaling_B(n_x, n_u, delta, sigma_w)
    E_B: list[np.ndarray | None] = []
    for i in range(1, n_u + 1):
        if burn_ok[i] and by_index[i].lambda_min > 0:
            E = C1 * np.linalg.inv(by_index[i].M)
            E_B.append(0.5 * (E + E.T))
        else:
            E_B.append(None)
    return EllipsoidBoundSet(E_A=E_A, E_B=E_B, delta=delta, C1=C1, burn_in_ok=burn_ok)


def check_spectral_coverage(true_sys: BilinearSystem, est: EstimateSet,
                            bounds: SpectralBoundSet) -> dict:
    """True iff each spectral error is within its bound (inf bounds always hold)."""
    ok_A = np.linalg.norm(est.A_hat - true_sys.A, 2) <= bounds.eps_A
    ok_B, ok_b0 = [], []
    for i in range(true_sys.n_u):
        ok_B.append(bool(np.linalg.norm(est.B_hat_list[i] - true_sys.B_list[i], 2) <= bounds.eps_B[i]))
        ok_b0.append(bool(np.linalg.norm(est.B0_hat[:, i] - true_sys.B0[:, i], 2) <= bounds.eps_b0[i]))
    return {"A": bool(ok_A), "B": ok_B, "b0": ok_b0,
            "all": bool(ok_A and all(ok_B) and all(ok_b0))}


def check_ellipsoid_coverage(true_sys: BilinearSystem, est: EstimateSet,
                             bounds: EllipsoidBoundSet, tol: float = 1e-10) -> dict:
    """PSD-order check: error outer products below their ellipsoid matrices."""
    ok_A = True
    if bounds.E_A is not None:
        E = est.A_hat - true_sys.A
        gap = bounds.E_A - E @ E.T
        ok_A = bool(np.linalg.eigvalsh(0.5 * (gap + gap.T))[0] >= -tol * max(1.0, np.linalg.norm(bounds.E_A, 2)))
    ok_B = []
    for i in range(true_sys.n_u):
        Ei = bounds.E_B[i]
        if Ei is None:
            ok_B.append(True)
            continue
        F = np.vstack([(est.B_hat_list[i] - true_sys.B_list[i]).T,
                       (est.B0_hat[:, i] - true_sys.B0[:, i])[None, :]])
        gap = Ei - F @ F.T
        ok_B.append(bool(np.linalg.eigvalsh(0.5 * (gap + gap.T))[0] >= -tol * max(1.0, np.linalg.norm(Ei, 2))))
    return {"A": ok_A, "B": ok_B, "all": bool(ok_A and all(ok_B))}
