"""Robust state-feedback synthesis for identified bilinear systems.

The design solves, over P > 0, L, L_w, Lambda > 0, tau > 0, nu > 0,

    maximize trace(P)  subject to the 5x5 Lyapunov-decay LMI and the
    region-invariance LMI,

and returns the controller u(x) = (I - L_w (Lambda^-1 (x) x))^-1 L P^-1 x with
region of attraction {x : x' P^-1 x <= 1}.

Two implementation notes that matter in practice:

  * the decay LMI mixes the residual-bound channel tau * Qd^-1 (entries up to
    1/||Qd||) with O(1) system blocks, so the assembled constraint applies a
    congruence scaling of that channel by sqrt(||Qd||); the paper-form LMI is
    evaluated unscaled during verification;
  * interior-point solvers routinely stall on near-degenerate instances, so a
    failed or unverified joint solve falls back to coordinate polish: fix the
    gain shape (K, L_w, Lambda), re-solve the small SDP in (P, tau, nu) for
    maximum slack and then maximum trace, optionally re-optimizing the gain at
    fixed P.  Every returned "feasible" solution passes an independent
    eigenvalue check of both LMIs, so the fallback path cannot weaken the
    certificate.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import cvxpy as cp
import numpy as np
from scipy.linalg import solve_discrete_are

from .identify import EstimateSet
from .residual import ResidualQuadBound
from .sdp import CvxpySdpSolver, SdpProblem, safe_cvxpy_solve
from .systems import BilinearSystem, step


class SingularGainError(RuntimeError):
    """The controller's middle matrix I - L_w (Lambda^-1 (x) x) is singular."""

    def __init__(self, cond):
        self.cond = cond
        super().__init__(f"singular controller gain matrix (condition number {cond:.3e})")


@dataclass(frozen=True)
class StateRegion:
    """State set {x : [x; 1]' [[Qx, Sx], [Sx', Rx]] [x; 1] >= 0} with Qx < 0, Rx > 0."""

    Qx: np.ndarray
    Sx: np.ndarray
    Rx: float

    def __post_init__(self):
        Qx = np.asarray(self.Qx, dtype=float)
        Sx = np.asarray(self.Sx, dtype=float).reshape(-1, 1)
        Rx = float(self.Rx)
        if Qx.shape[0] != Qx.shape[1] or Qx.shape[0] != Sx.shape[0]:
            raise ValueError("Qx must be square and compatible with Sx")
        if np.linalg.eigvalsh(0.5 * (Qx + Qx.T)).max() >= 0:
            raise ValueError("Qx must be negative definite")
        if Rx <= 0:
            raise ValueError("Rx must be positive")
        blk = np.block([[Qx, Sx], [Sx.T, np.array([[Rx]])]])
        if np.linalg.cond(blk) > 1e10:
            raise ValueError("region block matrix is too ill-conditioned (cond > 1e10)")
        object.__setattr__(self, "Qx", 0.5 * (Qx + Qx.T))
        object.__setattr__(self, "Sx", Sx)
        object.__setattr__(self, "Rx", Rx)

    @property
    def n_x(self) -> int:
        return self.Qx.shape[0]

    def block(self) -> np.ndarray:
        return np.block([[self.Qx, self.Sx], [self.Sx.T, np.array([[self.Rx]])]])

    def inverse_blocks(self) -> tuple[np.ndarray, np.ndarray, float]:
        """(Qx~, Sx~, Rx~): blocks of the inverse of the region matrix, recomputed."""
        inv = np.linalg.inv(self.block())
        n = self.n_x
        return 0.5 * (inv[:n, :n] + inv[:n, :n].T), inv[:n, n:], float(inv[n, n])

    def contains(self, x) -> bool:
        x = np.asarray(x, dtype=float).reshape(-1)
        v = np.concatenate([x, [1.0]])
        return bool(v @ self.block() @ v >= 0.0)

    def membership_batch(self, X: np.ndarray) -> np.ndarray:
        V = np.hstack([X, np.ones((X.shape[0], 1))])
        return np.einsum("ti,ij,tj->t", V, self.block(), V) >= 0.0


def region_from_norm_bound(c: float, n_x: int) -> StateRegion:
    """Norm-ball region ||x||^2 <= c: Qx = -I, Sx = 0, Rx = c."""
    if c <= 0:
        raise ValueError("c must be positive")
    return StateRegion(Qx=-np.eye(n_x), Sx=np.zeros(n_x), Rx=float(c))


@dataclass
class SynthesisOptions:
    eps_lmi: float = 1e-6            # strictness margin on solved LMIs
    invariance_tol: float = 1e-7     # a-posteriori lambda_max tolerance on the invariance LMI
    objective: str = "trace-p"       # "trace-p" (default) or "min-tau"
    lqr_rho_grid: tuple[float, ...] = (1.0, 1e-2, 1e-4)
    polish_rounds: int = 1
    qd_reg_scale: float = 1e-9


@dataclass
class ControllerSolution:
    P: np.ndarray | None
    L: np.ndarray | None
    L_w: np.ndarray | None
    Lambda: np.ndarray | None
    nu: float | None
    tau: float | None
    objective: float | None
    status: str                      # "feasible" | "infeasible" | "solver-error"
    method: str = ""
    diagnostics: dict = field(default_factory=dict)

    @property
    def feasible(self) -> bool:
        return self.status == "feasible"

    def to_dict(self) -> dict:
        def arr(a):
            return None if a is None else np.asarray(a).tolist()
        return {"status": self.status, "method": self.method, "objective": self.objective,
                "P": arr(self.P), "L": arr(self.L), "L_w": arr(self.L_w),
                "Lambda": arr(self.Lambda), "nu": self.nu, "tau": self.tau,
                "diagnostics": self.diagnostics}


# --- LMI assembly (cvxpy) and evaluation (numpy) ----------------------------

def _decay_blocks(A, B0, Aux, Qd_inv, region: StateRegion, P, L, Lw, Lam, tau, lib):
    """Upper-triangular blocks of the 5x5 decay LMI; lib is cp or np.

    Block row/col sizes: (n_x, n_u, n_x + n_u, n_x, n_u * n_x).  The printed
    (2,3) block has its Kronecker identity on n_u (the n_x reading does not
    type-check) and multiplies the transposed [0; L_w] stack.
    """
    n_x, n_u = A.shape[0], B0.shape[1]
    Qxt, Sxt, Rxt = region.inverse_blocks()
    Qxt_inv = np.linalg.inv(Qxt)
    kron = np.kron if lib is np else cp.kron
    vstack = np.vstack if lib is np else cp.vstack
    I_nx, I_nu = np.eye(n_x), np.eye(n_u)
    kron_I_Sxt = np.kron(I_nu, Sxt)                       # (n_u n_x, n_u)
    zero_Lw = vstack([np.zeros((n_x, n_x * n_u)), Lw])    # (n_x + n_u, n_x n_u)
    PL = vstack([P, L])                                   # (n_x + n_u, n_x)

    b11 = P - tau * I_nx
    b12 = -Aux @ kron(Lam, Sxt) - B0 @ Lw @ kron_I_Sxt
    b13 = np.zeros((n_x, n_x + n_u))
    b14 = A @ P + B0 @ L
    b15 = Aux @ kron(Lam, I_nx) + B0 @ Lw
    b22 = kron(Lam, np.array([[Rxt]])) - Lw @ kron_I_Sxt - kron_I_Sxt.T @ Lw.T
    b23 = -(np.kron(I_nu, Sxt.T)) @ zero_Lw.T
    b24 = L
    b25 = Lw
    b33 = tau * Qd_inv
    b34 = PL
    b35 = -zero_Lw
    b44 = P
    b45 = np.zeros((n_x, n_u * n_x))
    b55 = -kron(Lam, Qxt_inv)
    return [[b11, b12, b13, b14, b15],
            [None, b22, b23, b24, b25],
            [None, None, b33, b34, b35],
            [None, None, None, b44, b45],
            [None, None, None, None, b55]]


def _bmat_symmetric(rows, lib):
    n = len(rows)
    full = [[rows[i][j] if j >= i else rows[j][i].T for j in range(n)] for i in range(n)]
    return np.block(full) if lib is np else cp.bmat(full)


def decay_block_sizes(n_x: int, n_u: int) -> tuple[int, ...]:
    return (n_x, n_u, n_x + n_u, n_x, n_u * n_x)


def assemble_lmi_main(est: EstimateSet, region: StateRegion, Qd: np.ndarray,
                      P, L, Lw, Lam, tau, scale: float = 1.0):
    """Decay LMI of the synthesis as one cvxpy expression (must be >> 0).

    ``scale`` applies the congruence D M D with D = blkdiag(I, I, scale*I, I, I)
    to equilibrate the residual channel; scale = 1 gives the paper-form matrix.
    """
    Qd_inv = np.linalg.inv(Qd)
    rows = _decay_blocks(est.A_hat, est.B0_hat, est.A_ux_hat, Qd_inv, region, P, L, Lw, Lam, tau, cp)
    if scale != 1.0:
        rows = [[(scale if (i == 2) != (j == 2) else (scale * scale if i == 2 and j == 2 else 1.0)) * rows[i][j]
                 if rows[i][j] is not None else None
                 for j in range(5)] for i in range(5)]
    return _bmat_symmetric(rows, cp)


def assemble_lmi_invariance(region: StateRegion, P, nu, lib=cp):
    """Invariance LMI [[nu Rx~ - 1, -nu Sx~'], [-nu Sx~, nu Qx~ + P]] (must be << 0)."""
    Qxt, Sxt, Rxt = region.inverse_blocks()
    n_x = region.n_x
    if lib is np:
        return np.block([[np.array([[nu * Rxt - 1.0]]), -nu * Sxt.T],
                         [-nu * Sxt, nu * Qxt + P]])
    return cp.bmat([[cp.reshape(nu * Rxt - 1.0, (1, 1), order="F"), -nu * Sxt.T],
                    [-nu * Sxt, nu * Qxt + P]])


def lmi_main_value(est: EstimateSet, region: StateRegion, Qd: np.ndarray,
                   P, L, Lw, Lam, tau) -> np.ndarray:
    """Paper-form decay LMI at a numeric assignment (independent numpy path)."""
    Qd_inv = np.linalg.inv(Qd)
    M = _bmat_symmetric(_decay_blocks(est.A_hat, est.B0_hat, est.A_ux_hat, Qd_inv, region,
                                      np.asarray(P), np.asarray(L), np.asarray(Lw),
                                      np.asarray(Lam), float(tau), np), np)
    return 0.5 * (M + M.T)


def lmi_invariance_value(region: StateRegion, P, nu) -> np.ndarray:
    M = assemble_lmi_invariance(region, np.asarray(P), float(nu), lib=np)
    return 0.5 * (M + M.T)


def verify_solution(est: EstimateSet, region: StateRegion, Qd: np.ndarray, sol: dict,
                    invariance_tol: float = 1e-7) -> dict:
    """Independent eigenvalue check of both LMIs at a candidate solution."""
    M = lmi_main_value(est, region, Qd, sol["P"], sol["L"], sol["L_w"], sol["Lambda"], sol["tau"])
    inv = lmi_invariance_value(region, sol["P"], sol["nu"])
    lmin_decay = float(np.linalg.eigvalsh(M)[0])
    lmax_inv = float(np.linalg.eigvalsh(inv)[-1])
    lmin_P = float(np.linalg.eigvalsh(0.5 * (sol["P"] + sol["P"].T))[0])
    lmin_Lam = float(np.linalg.eigvalsh(0.5 * (sol["Lambda"] + sol["Lambda"].T))[0])
    ok = (lmin_decay >= 0.0 and lmax_inv <= invariance_tol and lmin_P > 0.0
          and lmin_Lam > 0.0 and sol["tau"] > 0.0 and sol["nu"] > 0.0)
    return {"ok": bool(ok), "lmin_decay": lmin_decay, "lmax_invariance": lmax_inv,
            "lmin_P": lmin_P, "lmin_Lambda": lmin_Lam}


# --- solving -----------------------------------------------------------------

def build_synthesis_problem(est: EstimateSet, region: StateRegion, Qd: np.ndarray,
                            opts: SynthesisOptions) -> SdpProblem:
    """Joint SDP over (P, L, L_w, Lambda, tau, nu) with the strictness margin."""
    n_x, n_u = est.n_x, est.n_u
    prob = SdpProblem()
    P = prob.add_variable("P", (n_x, n_x), "symmetric")
    L = prob.add_variable("L", (n_u, n_x), "rectangular")
    Lw = prob.add_variable("L_w", (n_u, n_x * n_u), "rectangular")
    Lam = prob.add_variable("Lambda", (n_u, n_u), "symmetric")
    tau = prob.add_variable("tau", (), "scalar")
    nu = prob.add_variable("nu", (), "scalar")
    scale = float(np.sqrt(np.linalg.norm(Qd, 2)))
    prob.add_constraint("lyapunov-decay", assemble_lmi_main(est, region, Qd, P, L, Lw, Lam, tau, scale=scale),
                        sense="psd", margin=opts.eps_lmi)
    prob.add_constraint("invariance", assemble_lmi_invariance(region, P, nu), sense="nsd")
    prob.add_constraint("P-pd", P, sense="psd", margin=opts.eps_lmi)
    prob.add_constraint("Lambda-pd", Lam, sense="psd", margin=opts.eps_lmi)
    prob.extra_scalar_constraints = [tau >= opts.eps_lmi, nu >= opts.eps_lmi]
    prob.objective = cp.trace(P) if opts.objective == "trace-p" else -tau
    return prob


def _dlqr_gain(A: np.ndarray, B: np.ndarray, rho: float) -> np.ndarray | None:
    try:
        X = solve_discrete_are(A, B, np.eye(A.shape[0]), rho * np.eye(B.shape[1]))
        return -np.linalg.solve(rho * np.eye(B.shape[1]) + B.T @ X @ B, B.T @ X @ A)
    except Exception:
        return None


def _polish_P_step(est, region, Qd, K, Lw_v, opts, scale, Lam_v=None) -> dict | None:
    """Fix the gain shape; small SDP in (P, Lambda = lam*I, tau, nu).

    Maximizes the LMI slack first and re-solves for trace(P) at half that
    slack.  Lambda is restricted to a scalar multiple of the identity here
    (pre-scaled by its natural magnitude c^2 (1 + |K|^2)), which keeps the
    problem linear; passing Lam_v fixes Lambda instead.
    """
    n_x, n_u = est.n_x, est.n_u
    lam_scale = max(1.0, region.Rx ** 2 * (1.0 + float(np.linalg.norm(K, 2)) ** 2))
    best = None
    for objective in ("slack", "trace"):
        P = cp.Variable((n_x, n_x), symmetric=True)
        tau = cp.Variable(nonneg=True)
        nu = cp.Variable(nonneg=True)
        s = cp.Variable()
        L = K @ P
        if Lam_v is None:
            lam_bar = cp.Variable(nonneg=True)
            Lam = cp.multiply(lam_scale * lam_bar, np.eye(n_u))
        else:
            Lam = Lam_v
        M = _bmat_symmetric(_decay_blocks(est.A_hat, est.B0_hat, est.A_ux_hat, np.linalg.inv(Qd),
                                          region, P, L, Lw_v, Lam, tau, cp), cp)
        D = np.concatenate([np.ones(n_x + n_u), np.full(n_x + n_u, scale), np.ones(n_x + n_u * n_x)])
        Ms = cp.multiply(np.outer(D, D), M)
        ntot = Ms.shape[0]
        cons = [Ms >> s * np.eye(ntot), assemble_lmi_invariance(region, P, nu) << 0,
                P >> opts.eps_lmi * np.eye(n_x), tau >= opts.eps_lmi, nu >= opts.eps_lmi]
        if objective == "slack":
            cvx = cp.Problem(cp.Maximize(cp.minimum(s, 1.0)), cons)
        else:
            floor = min(max(best["slack"] * 0.5, opts.eps_lmi), 1.0)
            cvx = cp.Problem(cp.Maximize(cp.trace(P)), cons + [s >= floor])
        status = None
        for sv, kw in (("CLARABEL", {}), ("SCS", dict(eps=1e-9, max_iters=100_000))):
            status = safe_cvxpy_solve(cvx, sv, **kw)
            if status in ("optimal", "optimal_inaccurate"):
                break
        if status not in ("optimal", "optimal_inaccurate") or P.value is None:
            return best if objective == "trace" else None
        Lam_out = Lam_v if Lam_v is not None else lam_scale * float(lam_bar.value) * np.eye(n_u)
        cand = {"P": np.asarray(P.value), "L": K @ np.asarray(P.value), "L_w": Lw_v,
                "Lambda": Lam_out, "tau": float(tau.value), "nu": float(nu.value),
                "slack": float(s.value)}
        if objective == "slack" and cand["slack"] <= 0:
            return None
        best = cand
    return best


def _margin_probe(est, region, Qd, opts, scale) -> tuple[str, float | None, dict | None]:
    """Maximize the decay-LMI slack over all decision variables.

    Returns (status, best slack, candidate solution).  A certified optimum
    below the strictness margin settles infeasibility of the strict design.
    """
    n_x, n_u = est.n_x, est.n_u
    P = cp.Variable((n_x, n_x), symmetric=True)
    L = cp.Variable((n_u, n_x))
    Lw = cp.Variable((n_u, n_x * n_u))
    Lam = cp.Variable((n_u, n_u), symmetric=True)
    tau = cp.Variable(nonneg=True)
    nu = cp.Variable(nonneg=True)
    s = cp.Variable()
    M = _bmat_symmetric(_decay_blocks(est.A_hat, est.B0_hat, est.A_ux_hat, np.linalg.inv(Qd),
                                      region, P, L, Lw, Lam, tau, cp), cp)
    D = np.concatenate([np.ones(n_x + n_u), np.full(n_x + n_u, scale), np.ones(n_x + n_u * n_x)])
    Ms = cp.multiply(np.outer(D, D), M)
    cons = [Ms >> s * np.eye(Ms.shape[0]), s >= opts.eps_lmi,
            assemble_lmi_invariance(region, P, nu) << 0,
            P >> opts.eps_lmi * np.eye(n_x), Lam >> opts.eps_lmi * np.eye(n_u),
            tau >= opts.eps_lmi, nu >= opts.eps_lmi]
    prob = cp.Problem(cp.Maximize(cp.minimum(s, 1.0)), cons)
    for sv, kw in (("CLARABEL", {}), ("SCS", dict(eps=1e-9, max_iters=100_000))):
        status = safe_cvxpy_solve(prob, sv, **kw)
        if status in ("infeasible", "infeasible_inaccurate"):
            return "infeasible", None, None
        if status in ("optimal", "optimal_inaccurate") and P.value is not None:
            cand = {"P": 0.5 * (np.asarray(P.value) + np.asarray(P.value).T),
                    "L": np.asarray(L.value), "L_w": np.asarray(Lw.value),
                    "Lambda": 0.5 * (np.asarray(Lam.value) + np.asarray(Lam.value).T),
                    "tau": float(tau.value), "nu": float(nu.value)}
            return "ok", float(s.value), cand
    return "solver-error", None, None


def _polish_gain_step(est, region, Qd, P_v, opts, scale) -> dict | None:
    """Fix P; re-optimize (L, L_w, Lambda, tau) for maximum slack."""
    n_x, n_u = est.n_x, est.n_u
    L = cp.Variable((n_u, n_x))
    Lw = cp.Variable((n_u, n_x * n_u))
    Lam = cp.Variable((n_u, n_u), symmetric=True)
    tau = cp.Variable(nonneg=True)
    s = cp.Variable()
    M = _bmat_symmetric(_decay_blocks(est.A_hat, est.B0_hat, est.A_ux_hat, np.linalg.inv(Qd),
                                      region, P_v, L, Lw, Lam, tau, cp), cp)
    D = np.concatenate([np.ones(n_x + n_u), np.full(n_x + n_u, scale), np.ones(n_x + n_u * n_x)])
    Ms = cp.multiply(np.outer(D, D), M)
    cons = [Ms >> s * np.eye(Ms.shape[0]), Lam >> opts.eps_lmi * np.eye(n_u), tau >= opts.eps_lmi]
    cvx = cp.Problem(cp.Maximize(cp.minimum(s, 1.0)), cons)
    for sv, kw in (("CLARABEL", {}), ("SCS", dict(eps=1e-9, max_iters=100_000))):
        status = safe_cvxpy_solve(cvx, sv, **kw)
        if status in ("optimal", "optimal_inaccurate") and L.value is not None \
                and s.value is not None and float(s.value) > 0:
            return {"L": np.asarray(L.value), "L_w": np.asarray(Lw.value),
                    "Lambda": np.asarray(Lam.value), "tau": float(tau.value)}
    return None


def synthesize(est: EstimateSet, region: StateRegion, q: ResidualQuadBound,
               solver: CvxpySdpSolver | None = None,
               opts: SynthesisOptions | None = None) -> ControllerSolution:
    """Solve the synthesis SDP; every feasible result is eigenvalue-verified."""
    opts = opts or SynthesisOptions()
    if not q.finite:
        return ControllerSolution(None, None, None, None, None, None, None,
                                  status="infeasible", method="unbounded-residual",
                                  diagnostics={"reason": "residual bound is infinite"})
    if region.n_x != est.n_x:
        raise ValueError("region dimension does not match the estimates")
    Qd = q.regularized(opts.qd_reg_scale)
    solver = solver or CvxpySdpSolver()
    scale = float(np.sqrt(np.linalg.norm(Qd, 2)))
    diagnostics = {"attempts": []}

    def finish(sol, method):
        check = verify_solution(est, region, Qd, sol, opts.invariance_tol)
        diagnostics["attempts"].append({"method": method, "verified": check["ok"],
                                        "lmin_decay": check["lmin_decay"],
                                        "lmax_invariance": check["lmax_invariance"]})
        if not check["ok"]:
            return None
        diagnostics["verification"] = check
        return ControllerSolution(P=sol["P"], L=sol["L"], L_w=sol["L_w"], Lambda=sol["Lambda"],
                                  nu=sol["nu"], tau=sol["tau"],
                                  objective=float(np.trace(sol["P"])),
                                  status="feasible", method=method, diagnostics=diagnostics)

    problem = build_synthesis_problem(est, region, Qd, opts)
    result = solver.solve(problem)
    diagnostics["joint"] = {"status": result.status, "solver": result.solver, "raw": result.raw_status}
    saw_infeasible = result.status == "infeasible"
    joint_K = None
    if result.status == "ok":
        v = result.values
        sol = {"P": 0.5 * (v["P"] + v["P"].T), "L": v["L"], "L_w": v["L_w"],
               "Lambda": 0.5 * (v["Lambda"] + v["Lambda"].T),
               "tau": float(v["tau"]), "nu": float(v["nu"])}
        done = finish(sol, "joint")
        if done is not None:
            return done
        try:
            joint_K = sol["L"] @ np.linalg.inv(sol["P"])
        except np.linalg.LinAlgError:
            joint_K = None

    # margin probe: decides strict infeasibility and supplies a centered candidate
    probe_status, probe_slack, probe_sol = _margin_probe(est, region, Qd, opts, scale)
    diagnostics["margin_probe"] = {"status": probe_status, "slack": probe_slack}
    if probe_status == "infeasible":
        return ControllerSolution(None, None, None, None, None, None, None,
                                  status="infeasible", method="margin-probe",
                                  diagnostics=diagnostics)
    probe_trace = None
    if probe_status == "ok" and probe_sol is not None:
        probe_trace = finish(probe_sol, "margin-probe")

    # coordinate polish fallback
    n_x, n_u = est.n_x, est.n_u
    candidates = []
    if joint_K is not None and np.all(np.isfinite(joint_K)):
        candidates.append(joint_K)
    if probe_sol is not None:
        try:
            Kp = probe_sol["L"] @ np.linalg.inv(probe_sol["P"])
            if np.all(np.isfinite(Kp)):
                candidates.append(Kp)
        except np.linalg.LinAlgError:
            pass
    for rho in opts.lqr_rho_grid:
        K = _dlqr_gain(est.A_hat, est.B0_hat, rho)
        if K is not None and np.all(np.isfinite(K)):
            candidates.append(K)
    best = probe_trace
    for K in candidates:
        sol = _polish_P_step(est, region, Qd, K, np.zeros((n_u, n_x * n_u)), opts, scale)
        if sol is None:
            continue
        for _ in range(opts.polish_rounds):
            gain = _polish_gain_step(est, region, Qd, sol["P"], opts, scale)
            if gain is None:
                break
            K2 = gain["L"] @ np.linalg.inv(sol["P"])
            sol2 = _polish_P_step(est, region, Qd, K2, gain["L_w"], opts, scale,
                                  Lam_v=gain["Lambda"])
            if sol2 is None or sol2["slack"] <= 0:
                break
            sol = sol2
        done = finish(sol, "polish")
        if done is not None and (best is None or done.objective > best.objective):
            best = done
    if best is not None:
        return best
    if saw_infeasible:
        return ControllerSolution(None, None, None, None, None, None, None,
                                  status="infeasible", method="joint",
                                  diagnostics=diagnostics)
    return ControllerSolution(None, None, None, None, None, None, None,
                              status="solver-error", method="none", diagnostics=diagnostics)


# --- controller evaluation ----------------------------------------------------

def control_input(sol: ControllerSolution, x) -> np.ndarray:
    """u = (I - L_w (Lambda^-1 (x) x))^-1 L P^-1 x."""
    if not sol.feasible:
        raise ValueError("controller is not feasible")
    x = np.asarray(x, dtype=float).reshape(-1)
    n_u = sol.L.shape[0]
    mid = np.eye(n_u) - sol.L_w @ np.kron(np.linalg.inv(sol.Lambda), x[:, None])
    cond = np.linalg.cond(mid)
    if not np.isfinite(cond) or cond > 1e12:
        raise SingularGainError(cond)
    return np.linalg.solve(mid, sol.L @ np.linalg.solve(sol.P, x))


def roa_membership(sol: ControllerSolution, x) -> bool:
    """x' P^-1 x <= 1 (closed set)."""
    if not sol.feasible:
        raise ValueError("controller is not feasible")
    x = np.asarray(x, dtype=float).reshape(-1)
    return bool(x @ np.linalg.solve(sol.P, x) <= 1.0)


def roa_report(sol: ControllerSolution, region: StateRegion, n_boundary: int = 256,
               seed: int = 0) -> dict:
    """Trace, semi-axes, and containment evidence for the RoA ellipsoid."""
    if not sol.feasible:
        raise ValueError("controller is not feasible")
    w, V = np.linalg.eigh(0.5 * (sol.P + sol.P.T))
    inv = lmi_invariance_value(region, sol.P, sol.nu)
    report = {
        "trace_P": float(np.trace(sol.P)),
        "semi_axes": np.sqrt(np.clip(w, 0.0, None)).tolist(),
        "invariance_lambda_max": float(np.linalg.eigvalsh(inv)[-1]),
    }
    norm_ball = bool(np.allclose(region.Qx, -np.eye(region.n_x)) and np.allclose(region.Sx, 0.0))
    if norm_ball:
        report["lambda_max_P"] = float(w[-1])
        report["norm_ball_containment"] = bool(w[-1] <= region.Rx + 1e-9)
    rng = np.random.default_rng(seed)
    U = rng.standard_normal((n_boundary, region.n_x))
    U /= np.linalg.norm(U, axis=1, keepdims=True)
    boundary = U @ (V * np.sqrt(np.clip(w, 0.0, None))).T     # points with x' P^-1 x = 1
    Vaug = np.hstack([boundary, np.ones((n_boundary, 1))])
    vals = np.einsum("ti,ij,tj->t", Vaug, region.block(), Vaug)
    tol = 1e-9 * max(1.0, abs(region.Rx))     # the RoA may touch the region boundary
    report["boundary_in_region_fraction"] = float(np.mean(vals >= -tol))
    report["roa_in_region"] = bool(np.all(vals >= -tol))
    return report


@dataclass
class SimulationResult:
    states: np.ndarray
    inputs: np.ndarray
    lyapunov: np.ndarray
    monotone: bool
    rho_fit: float | None
    left_region: bool
    passed: bool

    def to_dict(self) -> dict:
        return {"monotone": self.monotone, "rho_fit": self.rho_fit,
                "left_region": self.left_region, "passed": self.passed,
                "final_state_norm": float(np.linalg.norm(self.states[-1])),
                "V0": float(self.lyapunov[0]), "V_final": float(self.lyapunov[-1])}


def simulate_closed_loop(true_sys: BilinearSystem, sol: ControllerSolution, x0,
                         steps: int = 200, region: StateRegion | None = None,
                         rho_threshold: float = 1.0 - 1e-4) -> SimulationResult:
    """Noise-free closed-loop rollout with a Lyapunov-decrease certificate.

    The certificate asserts monotone decrease of V(x) = x' P^-1 x and a fitted
    geometric envelope V_t <= rho^t V_0 with rho below the threshold; leaving
    the state region is reported as a certificate failure, not an exception.
    """
    if not sol.feasible:
        raise ValueError("controller is not feasible")
    x = np.asarray(x0, dtype=float).reshape(-1)
    Pinv = np.linalg.inv(sol.P)
    X = [x.copy()]
    U = []
    V = [float(x @ Pinv @ x)]
    left_region = region is not None and not region.contains(x)
    for _ in range(steps):
        u = control_input(sol, x)
        U.append(u)
        x = step(true_sys, x, u)
        X.append(x.copy())
        V.append(float(x @ Pinv @ x))
        if region is not None and not region.contains(x):
            left_region = True
    V = np.array(V)
    X = np.array(X)
    diffs = np.diff(V)
    monotone = bool(np.all(diffs <= 1e-12 * max(1.0, V[0])))
    # geometric envelope: least squares on log V, ignoring values at numerical zero
    mask = V > max(V[0], 1e-300) * 1e-280
    rho_fit = None
    if mask.sum() >= 2 and V[0] > 0:
        t = np.nonzero(mask)[0]
        slope = np.polyfit(t, np.log(V[mask]), 1)[0]
        rho_fit = float(np.exp(slope))
    passed = bool(monotone and not left_region and
                  (V[0] == 0.0 or (rho_fit is not None and rho_fit <= rho_threshold)))
    return SimulationResult(states=X, inputs=np.array(U) if U else np.zeros((0, true_sys.n_u)),
                            lyapunov=V, monotone=monotone, rho_fit=rho_fit,
                            left_region=left_region, passed=passed)
