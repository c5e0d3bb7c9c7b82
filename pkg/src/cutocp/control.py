"""Gradient descent for the distributed optimal control problem on one geometry.

The discrete state and adjoint equations are

    K y = M u + d,        K p = M y + b,

and the reduced gradient's coefficient vector is ``g = alpha u + p``; the
derivative of the discrete cost in direction ``e_i`` is ``(M g)_i``.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field

import numpy as np

from .fem import AssembledSystem, Norm, P1Space, Penalties, assemble_system, l2_misfit, measure_error
from .geometry import DEFAULT_ORDER, LevelSet, LevelSetKind, classify_elements
from .linalg.krylov import SolveReport, cg_solve
from .linalg.precond import PrecondKind, make_preconditioner
from .mesh import build_structured_mesh
from .multilevel import Discretization
from .problems import ExactTriple, ProblemData

DEFAULT_EPS = 1e-6
DEFAULT_INNER_TOL = 1e-8
DEFAULT_MAX_OUTER = 500


class StepRule(enum.Enum):
    EXACT = "exact"
    FIXED = "fixed"


@dataclass(eq=False)
class ControlProblem:
    """Assembled discrete control problem for one geometry sample."""

    system: AssembledSystem
    alpha: float = 0.1
    y_d: object = None
    omega: tuple | None = None
    level: int | None = None
    exact: ExactTriple | None = None

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")

    @classmethod
    def build(cls, ls: LevelSet, data: ProblemData, bbox, n, alpha: float = 0.1,
              penalties: Penalties = Penalties(), strict: bool = False) -> "ControlProblem":
        """Single background mesh with ``n`` cells per axis."""
        mesh = build_structured_mesh(bbox, n)
        space = P1Space(mesh, classify_elements(mesh, ls, strict=strict))
        system = assemble_system(space, data.f, data.g_D, data.g_N, data.y_d, penalties)
        omega = ls.params if ls.kind is LevelSetKind.GASKET else None
        return cls(system, alpha, data.y_d, omega, None, data.exact)

    @property
    def space(self) -> P1Space:
        return self.system.space

    @property
    def ndofs(self) -> int:
        return self.space.ndofs


@dataclass(eq=False)
class OptimalTriple:
    y: np.ndarray
    p: np.ndarray
    u: np.ndarray
    cost: float
    outer_iterations: int
    converged: bool
    cost_history: list = field(default_factory=list)
    reports: list = field(default_factory=list)
    optimality_residual: float = np.nan  # ||alpha u + p||_M / ||p||_M before u = -p/alpha
    state_reports: list = field(default_factory=list)

    @property
    def inner_iterations(self) -> int:
        return int(sum(r.iterations for r in self.reports))

    @property
    def state_iterations(self) -> list[int]:
        return [r.iterations for r in self.state_reports]


class _Solver:
    """Builds the preconditioner once and solves with K."""

    def __init__(self, K, kind, hierarchy=None, tol=DEFAULT_INNER_TOL, maxit=10_000):
        self.K = K
        self.kind = PrecondKind(kind)
        self.P = make_preconditioner(self.kind, K, hierarchy)
        self.tol = tol
        self.maxit = maxit
        self.reports: list[SolveReport] = []

    def __call__(self, rhs) -> np.ndarray:
        if self.kind is PrecondKind.DIRECT:
            x = self.P(rhs)
            nb = np.linalg.norm(rhs)
            res = np.linalg.norm(rhs - self.K @ x) / nb if nb > 0 else 0.0
            rep = SolveReport(x, 0, float(res), True)
        else:
            rep = cg_solve(self.K, rhs, self.P, self.tol, self.maxit)
        self.reports.append(rep)
        return rep.x


def solve_state(system: AssembledSystem, u, precond="direct", hierarchy=None,
                tol: float = DEFAULT_INNER_TOL) -> tuple[np.ndarray, SolveReport]:
    """``K y = M u + d``."""
    s = _Solver(system.K, precond, hierarchy, tol)
    y = s(system.M @ np.asarray(u, dtype=float) + system.d)
    return y, s.reports[-1]


def solve_adjoint(system: AssembledSystem, y, precond="direct", hierarchy=None,
                  tol: float = DEFAULT_INNER_TOL) -> tuple[np.ndarray, SolveReport]:
    """``K p = M y + b``."""
    s = _Solver(system.K, precond, hierarchy, tol)
    p = s(system.M @ np.asarray(y, dtype=float) + system.b)
    return p, s.reports[-1]


def cost(system: AssembledSystem, y, u, y_d, alpha: float = 0.1) -> float:
    """``1/2 ||y_h - y_d||^2 + alpha/2 u^T M u`` over the discrete domain.

    The misfit uses the quadrature of the target vector so that the discrete
    cost is exactly consistent with the adjoint gradient.
    """
    u = np.asarray(u, dtype=float)
    misfit = l2_misfit(system.space, y, y_d, order=DEFAULT_ORDER)
    return 0.5 * misfit + 0.5 * alpha * float(u @ (system.M @ u))


def reduced_gradient(u, p, alpha: float, M=None) -> np.ndarray:
    """Coefficients ``alpha u + p``; pair with ``M`` for the cost derivative."""
    return alpha * np.asarray(u, dtype=float) + np.asarray(p, dtype=float)


def m_norm(M, v) -> float:
    return float(np.sqrt(max(float(v @ (M @ v)), 0.0)))


def optimize(problem: ControlProblem, precond="direct", eps: float = DEFAULT_EPS,
             step: StepRule | str = StepRule.EXACT, tau: float = 1.0, u0=None,
             max_outer: int = DEFAULT_MAX_OUTER, hierarchy=None,
             inner_tol: float = DEFAULT_INNER_TOL, gtol: float | None = None) -> OptimalTriple:
    """Gradient descent with stopping rule ``|J_k - J_{k-1}| / J_k <= eps``.

    ``gtol`` additionally requires ``||g||_M / ||p||_M <= gtol`` before
    stopping.  The returned control is ``-p / alpha`` for the
    adjoint of the final iterate.
    """
    step = StepRule(step)
    sysm = problem.system
    K, M, alpha = sysm.K, sysm.M, problem.alpha
    solve = _Solver(K, precond, hierarchy, inner_tol)
    u = np.ones(problem.ndofs) if u0 is None else np.array(u0, dtype=float, copy=True)

    history: list[float] = []
    state_reports: list[SolveReport] = []
    J_prev = np.inf
    converged = False
    k = 0
    while True:
        y = solve(M @ u + sysm.d)
        state_reports.append(solve.reports[-1])
        p = solve(M @ y + sysm.b)
        J = cost(sysm, y, u, problem.y_d, alpha)
        history.append(J)
        g = reduced_gradient(u, p, alpha)
        Mg = M @ g
        gMg = float(g @ Mg)
        pn = m_norm(M, p)
        gres = np.sqrt(max(gMg, 0.0)) / pn if pn > 0 else np.sqrt(max(gMg, 0.0))
        converged = (J > 0 and abs(J - J_prev) <= eps * J) or J == J_prev or gMg == 0.0
        if gtol is not None:
            converged = converged and gres <= gtol
        if converged or k >= max_outer:
            break
        if step is StepRule.EXACT:
            Sg = solve(Mg)
            denom = float(Sg @ (M @ Sg)) + alpha * gMg
            t = gMg / denom
        else:
            t = tau
        u = u - t * g
        J_prev = J
        k += 1

    return OptimalTriple(y, p, -p / alpha, J, k + 1, converged, history, solve.reports, gres,
                         state_reports)


def errors(problem: ControlProblem, triple: OptimalTriple,
           norms=(Norm.L2, Norm.H1, Norm.STAR)) -> dict:
    """Error norms against the registered exact triple."""
    ex = problem.exact
    if ex is None:
        raise ValueError("no exact solution registered for this problem")
    space = problem.space
    gD = problem.system.penalties.gamma_D
    out = {}
    for name, coeffs, fn, grad in (("y", triple.y, ex.y, ex.grad_y), ("p", triple.p, ex.p, ex.grad_p),
                                   ("u", triple.u, ex.u, ex.grad_u)):
        for nrm in norms:
            out[f"{name}_{Norm(nrm).value}"] = measure_error(space, coeffs, fn, grad, nrm, gD)
    return out


def multilevel_optimize(disc: Discretization, data: ProblemData, levels: int | None = None,
                        alpha: float = 0.1, eps: float = DEFAULT_EPS,
                        penalties: Penalties = Penalties(), warm_start: bool = True,
                        inner_tol: float = DEFAULT_INNER_TOL, gtol: float | None = None):
    """Level 0 by sparse direct solves, finer levels by multigrid-preconditioned CG.

    Each level starts from the previous level's control carried over by
    ``Discretization.transfer`` (or from one if ``warm_start`` is off).
    Returns a list of ``(ControlProblem, OptimalTriple)`` pairs.
    """
    nlev = len(disc) if levels is None else levels
    out = []
    u_prev = None
    for l in range(nlev):
        system = disc.assemble(l, data, penalties)
        prob = ControlProblem(system, alpha, data.y_d, None, l, data.exact)
        u0 = disc.transfer(l, u_prev) if (warm_start and u_prev is not None) else None
        if l == 0:
            tri = optimize(prob, "direct", eps, u0=u0, inner_tol=inner_tol, gtol=gtol)
        else:
            mgh = disc.multigrid(l, system.K)
            tri = optimize(prob, "multigrid", eps, u0=u0, hierarchy=mgh, inner_tol=inner_tol, gtol=gtol)
        out.append((prob, tri))
        u_prev = tri.u
    return out


def run_record(problem: ControlProblem, triple: OptimalTriple, precond, with_errors: bool = True) -> dict:
    """Per-run summary in the JSON schema used by the CLI."""
    rec = {
        "omega": None if problem.omega is None else [float(w) for w in problem.omega],
        "level": problem.level,
        "dofs": int(problem.ndofs),
        "preconditioner": PrecondKind(precond).value,
        "outer_iterations": int(triple.outer_iterations),
        "inner_iterations": triple.inner_iterations,
        "converged": bool(triple.converged),
        "cost": float(triple.cost),
        "optimality_residual": float(triple.optimality_residual),
    }
    if with_errors and problem.exact is not None:
        rec["errors"] = {k: float(v) for k, v in errors(problem, triple).items()}
    return rec


def dump_record(rec: dict) -> str:
    return json.dumps(rec, indent=2, sort_keys=True)
