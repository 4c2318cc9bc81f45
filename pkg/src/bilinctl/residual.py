"""Conversion of identification error bounds into the quadratic residual bound

    ||r(x, u)||^2 <= [x; u]' Q [x; u]   for all u in a user-declared input box,

either from individual spectral bounds or from ellipsoidal bounds.  The box
restriction keeps every maximization closed-form (vertex evaluation).
"""

from __future__ import annotations

from dataclasses import dataclass
from math import sqrt

import numpy as np

from .bounds import EllipsoidBoundSet, SpectralBoundSet


@dataclass(frozen=True)
class InputBox:
    """Axis-aligned compact input set [lower, upper] containing the origin."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float))
        hi = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError("lower and upper must be equal-length vectors")
        if np.any(lo > hi):
            raise ValueError("need lower <= upper")
        if np.any(lo > 0) or np.any(hi < 0):
            raise ValueError("the input box must contain 0 so the residual bound vanishes at the origin")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def n_u(self) -> int:
        return self.lower.shape[0]

    @classmethod
    def symmetric(cls, half_width: float, n_u: int) -> "InputBox":
        return cls(lower=-half_width * np.ones(n_u), upper=half_width * np.ones(n_u))

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return rng.uniform(self.lower, self.upper, size=(size, self.n_u))


@dataclass
class ResidualQuadBound:
    """Symmetric PSD matrix Q with the (x, u) block partition, plus provenance.

    finite == False marks the infeasible case (some underlying bound was
    infinite); Q is None then and synthesis must report infeasibility.
    """

    Q: np.ndarray | None
    delta: float
    provenance: str      # "individual" | "ellipsoidal" | "norm-overestimate"
    n_x: int
    n_u: int
    finite: bool = True

    def regularized(self, eps_scale: float = 1e-9) -> np.ndarray:
        """Q + eps * I with eps = eps_scale * max(1, ||Q||_2); keeps Q invertible
        when an exact offset makes a block singular, while only enlarging the
        residual bound (so downstream guarantees stay valid)."""
        if not self.finite:
            raise ValueError("cannot regularize an infeasible residual bound")
        eps = eps_scale * max(1.0, float(np.linalg.norm(self.Q, 2)))
        return self.Q + eps * np.eye(self.Q.shape[0])

    def to_dict(self) -> dict:
        return {"Q": None if self.Q is None else self.Q.tolist(), "delta": self.delta,
                "provenance": self.provenance, "n_x": self.n_x, "n_u": self.n_u,
                "finite": self.finite}


def box_extremes(box: InputBox) -> tuple[float, np.ndarray]:
    """(max |1 - sum u_i|, per-coordinate max |u_i|) over the box.

    The sum functional is linear, so its range is an interval whose endpoints
    come from summing the box bounds; the absolute maxima sit at those ends.
    """
    lo_sum = float(np.sum(box.lower))
    hi_sum = float(np.sum(box.upper))
    m1 = max(abs(1.0 - lo_sum), abs(1.0 - hi_sum))
    m2 = np.maximum(np.abs(box.lower), np.abs(box.upper))
    return m1, m2


def _clip_psd(Q: np.ndarray) -> np.ndarray:
    """Symmetrize and zero out negative eigenvalues within -1e-12 * ||Q||."""
    Q = 0.5 * (Q + Q.T)
    w, V = np.linalg.eigh(Q)
    floor = -1e-12 * max(1.0, float(np.abs(w).max(initial=0.0)))
    if w.min(initial=0.0) < floor:
        raise ValueError("residual quadratic bound is not PSD")
    w = np.clip(w, 0.0, None)
    return (V * w) @ V.T


def qdelta_individual(bounds: SpectralBoundSet, box: InputBox, n_x: int) -> ResidualQuadBound:
    """Diagonal residual bound from individual spectral error bounds.

    c_x = m1 * eps_A + sum_i m2_i * eps_Bi,  c_u = sqrt(sum_i eps_b0i ** 2),
    Q = diag(2 c_x^2 I_{n_x}, 2 c_u^2 I_{n_u}).
    """
    n_u = box.n_u
    if len(bounds.eps_B) != n_u:
        raise ValueError("bound set and box disagree on n_u")
    if not bounds.all_finite:
        return ResidualQuadBound(Q=None, delta=bounds.delta, provenance="individual",
                                 n_x=n_x, n_u=n_u, finite=False)
    m1, m2 = box_extremes(box)
    c_x = m1 * bounds.eps_A + float(np.dot(m2, bounds.eps_B))
    c_u = sqrt(float(np.sum(bounds.eps_b0 ** 2)))
    Q = np.diag(np.concatenate([np.full(n_x, 2.0 * c_x ** 2), np.full(n_u, 2.0 * c_u ** 2)]))
    return ResidualQuadBound(Q=Q, delta=bounds.delta, provenance="individual", n_x=n_x, n_u=n_u)


def stacked_ellipsoid(bounds: EllipsoidBoundSet, n_x: int) -> np.ndarray:
    """Permuted block layout of the per-input ellipsoids:

    the (n_u n_x + n_u)-square matrix with [E_Bi]_11 blocks on the upper-left
    diagonal band, [E_Bi]_12 columns on the upper-right band, their transposes
    below, and the [E_Bi]_22 scalars on the lower-right diagonal.  Its quadratic
    form at [u (x) x; u] equals sum_i [u_i x; u_i]' E_Bi [u_i x; u_i].
    """
    n_u = len(bounds.E_B)
    big = np.zeros((n_u * n_x + n_u, n_u * n_x + n_u))
    for i, E in enumerate(bounds.E_B):
        sl = slice(i * n_x, (i + 1) * n_x)
        big[sl, sl] = E[:n_x, :n_x]
        big[sl, n_u * n_x + i] = E[:n_x, n_x]
        big[n_u * n_x + i, sl] = E[n_x, :n_x]
        big[n_u * n_x + i, n_u * n_x + i] = E[n_x, n_x]
    return big


def qdelta_ellipsoidal(bounds: EllipsoidBoundSet, box: InputBox, n_x: int) -> ResidualQuadBound:
    """Residual bound from ellipsoidal error bounds.

    Q = blkdiag((n_u+1) m1^2 E_A, 0) + (n_u+1) T' Etilde T with the congruence
    T = [[m2 (x) I_{n_x}, 0], [0, I_{n_u}]] applied to the permuted block
    layout; m2 is the per-coordinate |u| maximum over the box.
    """
    n_u = box.n_u
    if len(bounds.E_B) != n_u:
        raise ValueError("bound set and box disagree on n_u")
    if not bounds.all_finite:
        return ResidualQuadBound(Q=None, delta=bounds.delta, provenance="ellipsoidal",
                                 n_x=n_x, n_u=n_u, finite=False)
    m1, m2 = box_extremes(box)
    Etil = stacked_ellipsoid(bounds, n_x)
    T = np.zeros((n_u * n_x + n_u, n_x + n_u))
    T[:n_u * n_x, :n_x] = np.kron(m2[:, None], np.eye(n_x))
    T[n_u * n_x:, n_x:] = np.eye(n_u)
    Q = (n_u + 1.0) * (T.T @ Etil @ T)
    Q[:n_x, :n_x] += (n_u + 1.0) * m1 ** 2 * bounds.E_A
    return ResidualQuadBound(Q=_clip_psd(Q), delta=bounds.delta, provenance="ellipsoidal",
                             n_x=n_x, n_u=n_u)


def overestimate_norm(q: ResidualQuadBound) -> ResidualQuadBound:
    """Replace Q by ||Q||_2 * I; dominates the input in the PSD order."""
    if not q.finite:
        raise ValueError("cannot over-estimate an infeasible residual bound")
    n = q.n_x + q.n_u
    Q = float(np.linalg.norm(q.Q, 2)) * np.eye(n)
    return ResidualQuadBound(Q=Q, delta=q.delta, provenance="norm-overestimate",
                             n_x=q.n_x, n_u=q.n_u)


def quad_form_batch(Q: np.ndarray, X: np.ndarray, U: np.ndarray) -> np.ndarray:
    """[x; u]' Q [x; u] for paired rows of X and U."""
    Z = np.hstack([X, U])
    return np.einsum("ti,ij,tj->t", Z, Q, Z)
