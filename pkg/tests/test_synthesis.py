import numpy as np
import pytest

from bilinctl.bounds import ellipsoidal_bounds
from bilinctl.collect import CollectionPlan, collect
from bilinctl.identify import assemble, gram, identify
from bilinctl.residual import InputBox, ResidualQuadBound, qdelta_ellipsoidal
from bilinctl.synthesis import (ControllerSolution, SingularGainError, StateRegion,
                                SynthesisOptions, build_synthesis_problem, control_input,
                                decay_block_sizes, lmi_invariance_value, lmi_main_value,
                                region_from_norm_bound, roa_membership, roa_report,
                                simulate_closed_loop, synthesize, verify_solution)
from bilinctl.systems import NoiseSpec, StateSamplerSpec, academic_system


def exact_estimates(sys):
    return assemble(sys.A, {i + 1: (sys.B_list[i], sys.B0[:, i]) for i in range(sys.n_u)})


def tiny_q(n_x, n_u, mag=1e-12):
    return ResidualQuadBound(Q=mag * np.eye(n_x + n_u), delta=0.05, provenance="individual",
                             n_x=n_x, n_u=n_u)


# --- region ------------------------------------------------------------------

def test_norm_ball_region_membership():
    region = region_from_norm_bound(0.1, 2)
    assert region.contains([0.0, 0.0])
    assert region.contains([0.3, 0.1])              # norm^2 = 0.1 boundary
    assert not region.contains([0.4, 0.0])


def test_region_inverse_blocks_roundtrip():
    region = region_from_norm_bound(0.37, 3)
    Qxt, Sxt, Rxt = region.inverse_blocks()
    inv = np.block([[Qxt, Sxt], [Sxt.T, np.array([[Rxt]])]])
    assert np.max(np.abs(region.block() @ inv - np.eye(4))) < 1e-10
    assert np.allclose(Qxt, -np.eye(3)) and np.allclose(Sxt, 0) and np.isclose(Rxt, 1 / 0.37)


def test_region_validation():
    with pytest.raises(ValueError):
        region_from_norm_bound(0.0, 2)
    with pytest.raises(ValueError):
        StateRegion(Qx=np.eye(2), Sx=np.zeros(2), Rx=1.0)       # Qx must be negative definite
    with pytest.raises(ValueError):
        StateRegion(Qx=-np.diag([1.0, 1e-12]), Sx=np.zeros(2), Rx=1.0)   # cond > 1e10


# --- LMI assembly -------------------------------------------------------------

def test_decay_lmi_dimensional_audit():
    assert sum(decay_block_sizes(2, 1)) == 10
    sys = academic_system()
    est = exact_estimates(sys)
    prob = build_synthesis_problem(est, region_from_norm_bound(0.1, 2),
                                   np.eye(3) * 1e-6, SynthesisOptions())
    decay = next(c for c in prob.constraints if c.name == "lyapunov-decay")
    assert decay.expr.shape == (10, 10)
    inv = next(c for c in prob.constraints if c.name == "invariance")
    assert inv.expr.shape == (3, 3)


def test_printed_kron_index_only_typechecks_on_nu():
    # block (2,3) of the decay LMI: -(I (x) Sx~') [0; L_w]'.
    # With the identity on n_u the product is (n_u, n_u n_x) @ (n_u n_x, n_x + n_u):
    # well-typed for all dimensions.  With the identity on n_x it is
    # (n_x, n_x^2) @ (n_u n_x, n_x + n_u): only square when n_x == n_u.
    n_x, n_u = 3, 2
    Sxt = np.zeros((n_x, 1))
    stack_T = np.zeros((n_x + n_u, n_x * n_u)).T          # [0; L_w] transposed
    ok = np.kron(np.eye(n_u), Sxt.T) @ stack_T
    assert ok.shape == (n_u, n_x + n_u)
    bad = np.kron(np.eye(n_x), Sxt.T)
    assert bad.shape[1] != stack_T.shape[0]


def test_lmi_affinity_midpoint_probe():
    sys = academic_system()
    est = exact_estimates(sys)
    prob = build_synthesis_problem(est, region_from_norm_bound(0.5, 2),
                                   1e-3 * np.eye(3), SynthesisOptions())
    rng = np.random.default_rng(0)

    def draw():
        S = rng.standard_normal((2, 2))
        Lam = rng.standard_normal((1, 1))
        return {"P": S + S.T, "L": rng.standard_normal((1, 2)),
                "L_w": rng.standard_normal((1, 2)), "Lambda": Lam + Lam.T,
                "tau": np.array(rng.uniform(0.1, 2)), "nu": np.array(rng.uniform(0.1, 2))}

    a, b = draw(), draw()
    mid = {k: 0.5 * (a[k] + b[k]) for k in a}
    for name in ("lyapunov-decay", "invariance"):
        fa = prob.constraint_values(a)[name]
        fb = prob.constraint_values(b)[name]
        fm = prob.constraint_values(mid)[name]
        assert np.max(np.abs(fa + fb - 2 * fm)) < 1e-10


def test_cvxpy_and_numpy_lmi_paths_agree():
    # dual route: the solver-facing assembly (after unscaling) must equal the
    # independent numpy evaluation of the paper-form matrix
    sys = academic_system()
    est = exact_estimates(sys)
    region = region_from_norm_bound(0.5, 2)
    Qd = np.diag([2e-3, 1e-3, 5e-4])
    prob = build_synthesis_problem(est, region, Qd, SynthesisOptions())
    rng = np.random.default_rng(1)
    S = rng.standard_normal((2, 2))
    assign = {"P": S + S.T, "L": rng.standard_normal((1, 2)),
              "L_w": rng.standard_normal((1, 2)), "Lambda": np.array([[1.3]]),
              "tau": np.array(0.7), "nu": np.array(0.9)}
    scaled = prob.constraint_values(assign)["lyapunov-decay"]
    gam = np.sqrt(np.linalg.norm(Qd, 2))
    D = np.diag(np.concatenate([np.ones(3), np.full(3, 1 / gam), np.ones(4)]))
    unscaled = D @ scaled @ D
    direct = lmi_main_value(est, region, Qd, assign["P"], assign["L"], assign["L_w"],
                            assign["Lambda"], float(assign["tau"]))
    assert np.max(np.abs(unscaled - direct)) < 1e-9
    inv = prob.constraint_values(assign)["invariance"]
    assert np.allclose(inv, lmi_invariance_value(region, assign["P"], 0.9), atol=1e-12)


def test_scalar_kronecker_in_lambda_block():
    sys = academic_system()
    est = exact_estimates(sys)
    region = region_from_norm_bound(0.5, 2)
    M = lmi_main_value(est, region, np.eye(3), np.eye(2), np.zeros((1, 2)),
                       np.zeros((1, 2)), np.array([[2.0]]), 0.1)
    # block (5,5) = -Lambda (x) Qx~^(-1) = 2 * I for the norm ball
    assert np.allclose(M[-2:, -2:], 2.0 * np.eye(2))


def test_invariance_norm_ball_forces_P_below_c():
    region = region_from_norm_bound(0.1, 2)
    # nu = c and P = 0.99 c I satisfies the LMI; P = 1.01 c I cannot for any nu <= c
    ok = lmi_invariance_value(region, 0.099 * np.eye(2), 0.1)
    assert np.linalg.eigvalsh(ok)[-1] <= 1e-12
    for nu in np.linspace(1e-4, 0.1, 30):
        bad = lmi_invariance_value(region, 0.101 * np.eye(2), nu)
        assert np.linalg.eigvalsh(bad)[-1] > 0


# --- synthesize ----------------------------------------------------------------

def test_exact_model_academic_is_feasible_and_verified():
    sys = academic_system()
    est = exact_estimates(sys)
    region = region_from_norm_bound(0.1, 2)
    sol = synthesize(est, region, tiny_q(2, 1))
    assert sol.status == "feasible"
    assert sol.diagnostics["verification"]["lmin_decay"] >= 0.0
    assert sol.diagnostics["verification"]["lmax_invariance"] <= 1e-7
    assert np.linalg.eigvalsh(sol.P)[-1] <= 0.1 + 1e-8      # P below c is necessary
    assert sol.objective > 0.19                              # trace close to 2c


def test_huge_uncertainty_is_infeasible():
    sys = academic_system()
    est = exact_estimates(sys)
    sol = synthesize(est, region_from_norm_bound(0.1, 2),
                     ResidualQuadBound(Q=1e6 * np.eye(3), delta=0.05,
                                       provenance="individual", n_x=2, n_u=1))
    assert sol.status == "infeasible"


def test_infinite_residual_bound_reports_infeasible():
    sys = academic_system()
    est = exact_estimates(sys)
    q = ResidualQuadBound(Q=None, delta=0.05, provenance="individual", n_x=2, n_u=1,
                          finite=False)
    sol = synthesize(est, region_from_norm_bound(0.1, 2), q)
    assert sol.status == "infeasible"
    assert sol.method == "unbounded-residual"


def test_monotone_feasibility_in_residual_scale():
    sys = academic_system()
    est = exact_estimates(sys)
    region = region_from_norm_bound(0.1, 2)
    base = 0.02 * np.eye(3)
    sol = synthesize(est, region, ResidualQuadBound(Q=base, delta=0.05,
                                                    provenance="individual", n_x=2, n_u=1))
    assert sol.status == "feasible"
    for scale in (0.25, 0.05):
        smaller = synthesize(est, region, ResidualQuadBound(Q=scale * base, delta=0.05,
                                                            provenance="individual", n_x=2, n_u=1))
        assert smaller.status == "feasible"


def test_verify_solution_rejects_corrupted_certificate():
    sys = academic_system()
    est = exact_estimates(sys)
    region = region_from_norm_bound(0.1, 2)
    sol = synthesize(est, region, tiny_q(2, 1))
    good = {"P": sol.P, "L": sol.L, "L_w": sol.L_w, "Lambda": sol.Lambda,
            "tau": sol.tau, "nu": sol.nu}
    assert verify_solution(est, region, tiny_q(2, 1).regularized(), good)["ok"]
    bad = dict(good)
    bad["L"] = -good["L"]
    assert not verify_solution(est, region, tiny_q(2, 1).regularized(), bad)["ok"]


# --- controller evaluation ------------------------------------------------------

def fake_solution(P, L, Lw, Lam, nu=1.0, tau=1.0):
    return ControllerSolution(P=np.atleast_2d(np.asarray(P, float)),
                              L=np.atleast_2d(np.asarray(L, float)),
                              L_w=np.atleast_2d(np.asarray(Lw, float)),
                              Lambda=np.atleast_2d(np.asarray(Lam, float)),
                              nu=nu, tau=tau, objective=None, status="feasible")


def test_control_input_scalar_hand_value():
    sol = fake_solution([[1.0]], [[1.0]], [[0.5]], [[2.0]])
    u = control_input(sol, [1.0])
    assert np.allclose(u, [4.0 / 3.0])


def test_control_input_linear_when_Lw_zero():
    rng = np.random.default_rng(2)
    P = np.diag([2.0, 1.0])
    L = rng.standard_normal((1, 2))
    sol = fake_solution(P, L, np.zeros((1, 2)), [[1.0]])
    x = rng.standard_normal(2)
    assert np.allclose(control_input(sol, x), L @ np.linalg.inv(P) @ x)
    assert np.allclose(control_input(sol, np.zeros(2)), [0.0])


def test_control_input_singular_middle_matrix():
    sol = fake_solution([[1.0]], [[1.0]], [[1.0]], [[1.0]])
    with pytest.raises(SingularGainError):
        control_input(sol, [1.0])     # 1 - 1*1 = 0


def test_roa_membership_and_report():
    sol = fake_solution(np.diag([0.09, 0.04]), np.zeros((1, 2)), np.zeros((1, 2)), [[1.0]],
                        nu=0.1)
    assert roa_membership(sol, [0.0, 0.0])
    assert roa_membership(sol, [0.3, 0.0])     # boundary point, closed set
    assert not roa_membership(sol, [0.31, 0.0])
    report = roa_report(sol, region_from_norm_bound(0.1, 2))
    assert np.allclose(sorted(report["semi_axes"]), [0.2, 0.3])
    assert report["lambda_max_P"] == pytest.approx(0.09)
    assert report["norm_ball_containment"]
    assert report["roa_in_region"]


def test_simulation_certificates():
    sys = academic_system()
    est = exact_estimates(sys)
    region = region_from_norm_bound(0.1, 2)
    sol = synthesize(est, region, tiny_q(2, 1))
    rng = np.random.default_rng(3)
    w, V = np.linalg.eigh(sol.P)
    for _ in range(20):
        v = rng.standard_normal(2)
        v /= np.linalg.norm(v)
        x0 = (V * np.sqrt(w)) @ v * rng.uniform(0.1, 0.999)
        sim = simulate_closed_loop(sys, sol, x0, steps=80, region=region)
        assert sim.passed and sim.monotone and sim.rho_fit < 1 - 1e-4

    zero = simulate_closed_loop(sys, sol, np.zeros(2), steps=10, region=region)
    assert zero.passed and np.allclose(zero.states, 0.0)

    broken = ControllerSolution(P=sol.P, L=-sol.L, L_w=sol.L_w, Lambda=sol.Lambda,
                                nu=sol.nu, tau=sol.tau, objective=None, status="feasible")
    failures = 0
    for _ in range(10):
        v = rng.standard_normal(2)
        v /= np.linalg.norm(v)
        x0 = (V * np.sqrt(w)) @ v * 0.9
        sim = simulate_closed_loop(sys, broken, x0, steps=40, region=region)
        failures += not sim.passed
    assert failures > 0


def test_full_pipeline_synthesis_on_noisy_data():
    sys = academic_system()
    plan = CollectionPlan(T_list=(300, 300), sampler=StateSamplerSpec(sigma_x=1.0),
                          noise=NoiseSpec(sigma_w=0.1), seed=11)
    datasets = collect(sys, plan)
    est, _ = identify(datasets, 1.0)
    grams = [gram(ds, 1.0) for ds in datasets]
    q = qdelta_ellipsoidal(ellipsoidal_bounds(grams, 0.05, 0.1, 2, 1),
                           InputBox.symmetric(2.0, 1), 2)
    sol = synthesize(est, region_from_norm_bound(0.1, 2), q)
    assert sol.status == "feasible"
    sim = simulate_closed_loop(sys, sol, np.array([0.2, 0.1]), steps=100,
                               region=region_from_norm_bound(0.1, 2))
    assert sim.passed


def test_min_tau_objective_switch():
    sys = academic_system()
    est = exact_estimates(sys)
    region = region_from_norm_bound(0.1, 2)
    sol = synthesize(est, region, tiny_q(2, 1), opts=SynthesisOptions(objective="min-tau"))
    assert sol.status == "feasible"
    default = synthesize(est, region, tiny_q(2, 1))
    assert sol.tau <= default.tau + 1e-9
