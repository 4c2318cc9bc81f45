"""Bilinear system representation, one-step dynamics, and sampling primitives.

A discrete-time bilinear system

    x+ = A x + B0 u + sum_i [u]_i A_i x + w

is stored in the shifted parameterization B_i = A_i + A, which turns the
dynamics into

    x+ = A x + B0 u + A_ux (u (x) x) + w,      A_ux = [B_1 - A ... B_nu - A],

where (x) is the Kronecker product with input index outer and state index
inner.  Constant inputs u = 0 and u = e_i reduce the system to one linear and
n_u affine subsystems, which is what the identification pipeline exploits.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

NOISE_FAMILIES = ("gaussian-isotropic", "uniform-box", "rademacher-scaled")
SAMPLER_FAMILIES = ("gaussian-isotropic", "uniform-box", "lifted")


class DimensionError(ValueError):
    """Raised when a vector or matrix does not match the declared sizes."""

    def __init__(self, what, expected, actual):
        self.what = what
        self.expected = expected
        self.actual = actual
        super().__init__(f"{what}: expected shape {expected}, got {actual}")


def substream(seed, *key) -> np.random.Generator:
    """Deterministic child generator for (seed, key).

    Distinct keys give statistically independent streams, so concurrent
    experiments and Monte Carlo trials never share generator state.
    """
    return np.random.default_rng(np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key)))


@dataclass(frozen=True)
class BilinearSystem:
    """True or estimated bilinear dynamics in the shifted (B_i) form."""

    A: np.ndarray
    B0: np.ndarray
    B_list: tuple[np.ndarray, ...]
    name: str = ""

    def __post_init__(self):
        A = np.asarray(self.A, dtype=float)
        B0 = np.asarray(self.B0, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise DimensionError("A", "(n_x, n_x)", A.shape)
        n_x = A.shape[0]
        if B0.ndim != 2 or B0.shape[0] != n_x:
            raise DimensionError("B0", f"({n_x}, n_u)", B0.shape)
        B_list = tuple(np.asarray(B, dtype=float) for B in self.B_list)
        if len(B_list) != B0.shape[1]:
            raise DimensionError("B_list", f"{B0.shape[1]} matrices", len(B_list))
        for i, B in enumerate(B_list):
            if B.shape != (n_x, n_x):
                raise DimensionError(f"B_list[{i}]", (n_x, n_x), B.shape)
        for M in (A, B0, *B_list):
            if not np.all(np.isfinite(M)):
                raise ValueError("system matrices must be finite")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B0", B0)
        object.__setattr__(self, "B_list", B_list)

    @property
    def n_x(self) -> int:
        return self.A.shape[0]

    @property
    def n_u(self) -> int:
        return self.B0.shape[1]

    @property
    def A_ux(self) -> np.ndarray:
        """Column-block matrix [B_1 - A ... B_nu - A], shape (n_x, n_u*n_x)."""
        return np.hstack([B - self.A for B in self.B_list])

    @classmethod
    def from_input_coupling(cls, A, B0, A_list, name="") -> "BilinearSystem":
        """Construct from the unshifted parameterization x+ = Ax + B0u + sum u_i A_i x."""
        A = np.asarray(A, dtype=float)
        return cls(A=A, B0=np.asarray(B0, dtype=float),
                   B_list=tuple(np.asarray(Ai, dtype=float) + A for Ai in A_list), name=name)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "n_x": self.n_x,
            "n_u": self.n_u,
            "A": self.A.tolist(),
            "B0": self.B0.tolist(),
            "B_list": [B.tolist() for B in self.B_list],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BilinearSystem":
        if "B_list" in d:
            return cls(A=np.array(d["A"], dtype=float), B0=np.array(d["B0"], dtype=float),
                       B_list=tuple(np.array(B, dtype=float) for B in d["B_list"]),
                       name=d.get("name", ""))
        return cls.from_input_coupling(d["A"], d["B0"], d["A_list"], name=d.get("name", ""))


@dataclass(frozen=True)
class NoiseSpec:
    """Zero-mean sub-Gaussian process noise with variance proxy sigma_w**2.

    All families are calibrated so sigma_w**2 is a valid variance proxy:
    the uniform family draws from [-sigma_w, sigma_w] (Hoeffding proxy equals
    the squared half-width) and the Rademacher family scales +-1 by sigma_w.
    """

    family: str = "gaussian-isotropic"
    sigma_w: float = 0.0

    def __post_init__(self):
        if self.family not in NOISE_FAMILIES:
            raise ValueError(f"unsupported noise family {self.family!r}; choose from {NOISE_FAMILIES}")
        if self.sigma_w < 0:
            raise ValueError("sigma_w must be nonnegative")


@dataclass(frozen=True)
class StateSamplerSpec:
    """I.i.d. zero-mean sub-Gaussian state sampler with variance proxy sigma_x**2.

    The "lifted" family draws a base vector z ~ N(0, sigma_x**2 I) of dimension
    ``base_dim`` and pushes it through ``lifting`` (see bilinctl.lifting), so the
    sampled states live on the image of the lifting map.
    """

    family: str = "gaussian-isotropic"
    sigma_x: float = 1.0
    base_dim: int | None = None
    lifting: object | None = None

    def __post_init__(self):
        if self.family not in SAMPLER_FAMILIES:
            raise ValueError(f"unsupported sampler family {self.family!r}; choose from {SAMPLER_FAMILIES}")
        if self.sigma_x <= 0:
            raise ValueError("sigma_x must be positive")
        if self.family == "lifted" and (self.base_dim is None or self.lifting is None):
            raise ValueError("lifted sampler needs base_dim and a lifting spec")


def kron_input_state(u: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Kronecker product u (x) x with block i equal to u_i * x."""
    u = np.asarray(u, dtype=float).reshape(-1)
    x = np.asarray(x, dtype=float).reshape(-1)
    return np.kron(u, x)


def step(sys: BilinearSystem, x, u, w=None) -> np.ndarray:
    """One-step update A x + B0 u + A_ux (u (x) x) + w."""
    x = np.asarray(x, dtype=float).reshape(-1)
    u = np.asarray(u, dtype=float).reshape(-1)
    if x.shape != (sys.n_x,):
        raise DimensionError("x", (sys.n_x,), x.shape)
    if u.shape != (sys.n_u,):
        raise DimensionError("u", (sys.n_u,), u.shape)
    out = sys.A @ x + sys.B0 @ u + sys.A_ux @ kron_input_state(u, x)
    if w is not None:
        w = np.asarray(w, dtype=float).reshape(-1)
        if w.shape != (sys.n_x,):
            raise DimensionError("w", (sys.n_x,), w.shape)
        out = out + w
    return out


def step_batch(sys: BilinearSystem, X: np.ndarray, u: np.ndarray, W=None) -> np.ndarray:
    """Row-wise one-step update for a batch of states under one constant input."""
    X = np.asarray(X, dtype=float)
    u = np.asarray(u, dtype=float).reshape(-1)
    out = X @ sys.A.T + u @ sys.B0.T
    Aux = sys.A_ux
    for i in range(sys.n_u):
        if u[i] != 0.0:
            out = out + u[i] * (X @ Aux[:, i * sys.n_x:(i + 1) * sys.n_x].T)
    if W is not None:
        out = out + W
    return out


def sample_noise(spec: NoiseSpec, n: int, rng: np.random.Generator | int, size: int | None = None) -> np.ndarray:
    """Draw noise vectors; deterministic given the generator or integer seed.

    Returns shape (n,) when size is None, else (size, n).
    """
    if isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(int(rng))
    shape = (n,) if size is None else (size, n)
    s = spec.sigma_w
    if s == 0.0:
        return np.zeros(shape)
    if spec.family == "gaussian-isotropic":
        return s * rng.standard_normal(shape)
    if spec.family == "uniform-box":
        return rng.uniform(-s, s, size=shape)
    return s * rng.choice([-1.0, 1.0], size=shape)


def sample_states(spec: StateSamplerSpec, n_x: int, T: int, rng: np.random.Generator | int) -> np.ndarray:
    """Draw T i.i.d. states, shape (T, n_x)."""
    if isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(int(rng))
    s = spec.sigma_x
    if spec.family == "gaussian-isotropic":
        return s * rng.standard_normal((T, n_x))
    if spec.family == "uniform-box":
        return rng.uniform(-s, s, size=(T, n_x))
    from .lifting import lift_batch  # local import to avoid a cycle

    Z = s * rng.standard_normal((T, spec.base_dim))
    X = lift_batch(spec.lifting, Z)
    if X.shape[1] != n_x:
        raise DimensionError("lifted state", (T, n_x), X.shape)
    return X


def residual(true_sys: BilinearSystem, est_sys: BilinearSystem, x, u) -> np.ndarray:
    """One-step prediction residual r(x, u) between the true and estimated systems."""
    return step(true_sys, x, u) - step(est_sys, x, u)


def residual_batch(true_sys: BilinearSystem, est_sys: BilinearSystem, X: np.ndarray, U: np.ndarray) -> np.ndarray:
    """Residuals for paired rows of X (states) and U (inputs)."""
    X = np.asarray(X, dtype=float)
    U = np.asarray(U, dtype=float)
    dA = true_sys.A - est_sys.A
    dB0 = true_sys.B0 - est_sys.B0
    dAux = true_sys.A_ux - est_sys.A_ux
    n_x = true_sys.n_x
    out = X @ dA.T + U @ dB0.T
    for i in range(true_sys.n_u):
        out = out + U[:, i:i + 1] * (X @ dAux[:, i * n_x:(i + 1) * n_x].T)
    return out


def academic_system() -> BilinearSystem:
    """Two-state, one-input system with identity input-state coupling."""
    return BilinearSystem.from_input_coupling(
        A=[[1.0, 1.0], [0.0, 1.0]], B0=[[1.0], [1.0]], A_list=[np.eye(2)], name="academic")


def cstr_system() -> BilinearSystem:
    """Continuous stirred-tank reactor cooling model (temperature/concentration deviations)."""
    return BilinearSystem.from_input_coupling(
        A=[[1.425, 0.1], [-0.625, 0.8]], B0=[[-0.025], [0.0]],
        A_list=[[[-0.1, 0.0], [0.0, 0.0]]], name="cstr")
