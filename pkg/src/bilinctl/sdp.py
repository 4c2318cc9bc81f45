"""Solver-facing encoding of semidefinite programs.

SdpProblem is a thin catalog of cvxpy decision variables, named affine
matrix-cone constraints, and a linear objective.  The adapter contract is:
an adapter takes an SdpProblem and returns primal variable values plus a
normalized status; the default adapter runs through a list of cvxpy-installed
conic solvers.  A sparse-triplet text export of the affine constraint data is
provided for external-solver debugging.
"""

from __future__ import annotations

import io
import os
from dataclasses import dataclass, field

import cvxpy as cp
import numpy as np

# Clarabel panics (caught below) print a Rust backtrace to stderr otherwise
os.environ.setdefault("RUST_BACKTRACE", "0")

VAR_KINDS = ("symmetric", "rectangular", "scalar")


@dataclass
class SdpConstraint:
    """Affine matrix constraint: expr >> margin*I ("psd") or expr << -margin*I ("nsd")."""

    name: str
    expr: cp.Expression
    sense: str = "psd"
    margin: float = 0.0

    def to_cvxpy(self):
        n = self.expr.shape[0]
        if self.sense == "psd":
            return self.expr >> self.margin * np.eye(n)
        if self.sense == "nsd":
            return self.expr << -self.margin * np.eye(n)
        raise ValueError(f"unknown sense {self.sense!r}")


@dataclass
class SdpProblem:
    """Decision-variable catalog + PSD-cone constraints + linear objective (maximized)."""

    variables: dict[str, cp.Variable] = field(default_factory=dict)
    kinds: dict[str, str] = field(default_factory=dict)
    constraints: list[SdpConstraint] = field(default_factory=list)
    objective: cp.Expression | None = None
    extra_scalar_constraints: list = field(default_factory=list)

    def add_variable(self, name: str, shape, kind: str) -> cp.Variable:
        if kind not in VAR_KINDS:
            raise ValueError(f"unknown variable kind {kind!r}")
        if name in self.variables:
            raise ValueError(f"duplicate variable {name!r}")
        if kind == "scalar":
            v = cp.Variable(name=name)
        elif kind == "symmetric":
            v = cp.Variable(shape, name=name, symmetric=True)
        else:
            v = cp.Variable(shape, name=name)
        self.variables[name] = v
        self.kinds[name] = kind
        return v

    def add_constraint(self, name: str, expr, sense="psd", margin=0.0):
        self.constraints.append(SdpConstraint(name=name, expr=expr, sense=sense, margin=margin))

    def set_values(self, assignment: dict[str, np.ndarray]):
        for name, var in self.variables.items():
            if name in assignment:
                var.value = np.asarray(assignment[name], dtype=float).reshape(var.shape)

    def constraint_values(self, assignment: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
        """Numeric LHS matrices of every constraint at the given assignment."""
        self.set_values(assignment)
        return {c.name: np.asarray(c.expr.value) for c in self.constraints}

    def to_cvxpy_problem(self) -> cp.Problem:
        cons = [c.to_cvxpy() for c in self.constraints] + list(self.extra_scalar_constraints)
        obj = cp.Maximize(self.objective if self.objective is not None else 0.0)
        return cp.Problem(obj, cons)

    # --- debugging/export -----------------------------------------------

    def _scalar_slots(self) -> list[tuple[str, int]]:
        slots = []
        for name, var in self.variables.items():
            slots.extend((name, k) for k in range(int(np.prod(var.shape)) if var.shape else 1))
        return slots

    def export_triplets(self) -> str:
        """Affine decomposition of every constraint as sparse triplets.

        Format, one record per line:
            var <name> <kind> <shape>
            con <name> <sense> <size> <margin>
            <con> const <i> <j> <value>
            <con> coef <var> <slot> <i> <j> <value>
        Coefficients are recovered by probing unit assignments, which is exact
        for affine expressions.
        """
        out = io.StringIO()
        for name, var in self.variables.items():
            out.write(f"var {name} {self.kinds[name]} {tuple(var.shape)}\n")
        zero = {name: np.zeros(var.shape if var.shape else ()) for name, var in self.variables.items()}
        base = self.constraint_values(zero)
        for c in self.constraints:
            out.write(f"con {c.name} {c.sense} {c.expr.shape[0]} {c.margin}\n")
            B = base[c.name]
            for i, j in zip(*np.nonzero(B)):
                out.write(f"{c.name} const {i} {j} {float(B[i, j])!r}\n")
        for vname, var in self.variables.items():
            size = int(np.prod(var.shape)) if var.shape else 1
            for k in range(size):
                probe = {n: z.copy() for n, z in zero.items()}
                flat = probe[vname].reshape(-1) if var.shape else None
                if var.shape:
                    flat[k] = 1.0
                    if self.kinds[vname] == "symmetric":
                        probe[vname] = 0.5 * (probe[vname] + probe[vname].T)
                        probe[vname][np.unravel_index(k, var.shape)] = 1.0
                        probe[vname] = np.maximum(probe[vname], probe[vname].T)
                else:
                    probe[vname] = np.array(1.0)
                vals = self.constraint_values(probe)
                for c in self.constraints:
                    D = vals[c.name] - base[c.name]
                    for i, j in zip(*np.nonzero(D)):
                        out.write(f"{c.name} coef {vname} {k} {i} {j} {float(D[i, j])!r}\n")
        return out.getvalue()


def safe_cvxpy_solve(prob: cp.Problem, solver: str, **options) -> str | None:
    """Run prob.solve and absorb solver failures, returning the status or None.

    Clarabel's Rust core can panic through pyo3 with a BaseException subclass,
    so a bare ``except Exception`` is not enough here.
    """
    try:
        prob.solve(solver=solver, **options)
        return prob.status
    except (KeyboardInterrupt, SystemExit):
        raise
    except BaseException:
        return None


@dataclass
class SolverResult:
    status: str                      # "ok" | "infeasible" | "unbounded" | "solver-error"
    values: dict[str, np.ndarray] | None
    solver: str = ""
    raw_status: str = ""
    objective: float | None = None


class CvxpySdpSolver:
    """Adapter from SdpProblem to cvxpy's installed conic solvers.

    Tries solvers in order and returns the first usable outcome; "inaccurate"
    statuses are passed through as ok/infeasible and must be screened by the
    caller's a-posteriori verification.
    """

    def __init__(self, solvers: tuple[str, ...] | None = None, **solver_options):
        installed = set(cp.installed_solvers())
        chain = solvers if solvers is not None else ("CLARABEL", "SCS")
        self.solvers = tuple(s for s in chain if s in installed)
        if not self.solvers:
            raise RuntimeError(f"none of the requested solvers {chain} is installed")
        self.solver_options = solver_options

    def solve(self, problem: SdpProblem) -> SolverResult:
        prob = problem.to_cvxpy_problem()
        last = SolverResult(status="solver-error", values=None, raw_status="no solver succeeded")
        for name in self.solvers:
            status = safe_cvxpy_solve(prob, name, **self.solver_options.get(name, {}))
            if status is None:
                last = SolverResult(status="solver-error", values=None, solver=name,
                                    raw_status="solver raised")
                continue
            if status in ("optimal", "optimal_inaccurate"):
                values = {n: np.asarray(v.value) for n, v in problem.variables.items()}
                if any(v is None or not np.all(np.isfinite(np.atleast_1d(v))) for v in values.values()):
                    last = SolverResult(status="solver-error", values=None, solver=name, raw_status=status)
                    continue
                return SolverResult(status="ok", values=values, solver=name, raw_status=status,
                                    objective=float(prob.value))
            if status in ("infeasible", "infeasible_inaccurate"):
                return SolverResult(status="infeasible", values=None, solver=name, raw_status=status)
            if status in ("unbounded", "unbounded_inaccurate"):
                last = SolverResult(status="unbounded", values=None, solver=name, raw_status=status)
                continue
            last = SolverResult(status="solver-error", values=None, solver=name, raw_status=str(status))
        return last
