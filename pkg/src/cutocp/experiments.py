"""Experiment drivers shared by the command line and the acceptance tests."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import qmc
from .control import ControlProblem, errors, multilevel_optimize, optimize, run_record
from .fem import P1Space, Penalties, assemble_stiffness, assemble_system, l2_misfit
from .geometry import ElementClass, classify_elements, interface_polylines, unit_circle
from .linalg import PrecondKind, cg_solve, estimate_condition, make_preconditioner
from .mesh import build_structured_mesh, write_mesh
from .multilevel import Discretization
from .problems import DISK_BOX, GASKET_BOX, example1, gasket_problem

QOI_NAMES = ["misfit", "state", "control", "cost"]


def eoc(errs) -> list[float]:
    """``log2(e_{l-1} / e_l)`` between consecutive levels (halved mesh size)."""
    errs = np.asarray(errs, dtype=float)
    return [float(np.log(errs[i - 1] / errs[i]) / np.log(2.0)) for i in range(1, len(errs))]


# ---------------------------------------------------------------- convergence

@dataclass
class ConvergenceResult:
    levels: list
    h: list
    dofs: list
    errors: dict  # column -> list over levels
    records: list = field(default_factory=list)

    def eocs(self) -> dict:
        return {k: eoc(v) for k, v in self.errors.items()}

    def mean_eoc(self) -> dict:
        return {k: (float(np.mean(v)) if v else float("nan")) for k, v in self.eocs().items()}


def run_converge(n0: int = 17, n_levels: int = 4, alpha: float = 0.1,
                 penalties: Penalties = Penalties(), eps: float = 1e-6,
                 gtol: float | None = 1e-8, bbox=DISK_BOX) -> ConvergenceResult:
    """Example 1 on a refinement hierarchy solved with the multilevel optimizer."""
    ls, data = example1()
    if data.exact is None:
        raise ValueError("convergence study needs a registered exact solution")
    disc = Discretization.build(ls, bbox, n0, n_levels)
    res = multilevel_optimize(disc, data, alpha=alpha, eps=eps, penalties=penalties, gtol=gtol)
    cols: dict = {}
    recs = []
    for prob, tri in res:
        e = errors(prob, tri)
        for k, v in e.items():
            cols.setdefault(k, []).append(v)
        recs.append(run_record(prob, tri, PrecondKind.DIRECT if prob.level == 0 else PrecondKind.MULTIGRID,
                               with_errors=False) | {"errors": e})
    return ConvergenceResult(list(range(n_levels)), [disc.space(l).h for l in range(n_levels)],
                             [disc.space(l).ndofs for l in range(n_levels)], cols, recs)


def write_converge_csv(res: ConvergenceResult, path) -> None:
    names = list(res.errors)
    eocs = res.eocs()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["level", "h", "dofs"] + names + [f"eoc_{n}" for n in names])
        for i, l in enumerate(res.levels):
            row = [l, repr(res.h[i]), res.dofs[i]] + [repr(res.errors[n][i]) for n in names]
            row += [repr(eocs[n][i - 1]) if i > 0 else "" for n in names]
            w.writerow(row)
        mean = res.mean_eoc()
        w.writerow(["mean", "", ""] + [""] * len(names)
                   + [repr(mean[n]) if not math.isnan(mean[n]) else "" for n in names])


# ---------------------------------------------------------- preconditioning

PRECOND_ORDER = (PrecondKind.IDENTITY, PrecondKind.JACOBI, PrecondKind.SGS, PrecondKind.MULTIGRID)


@dataclass
class PrecondRow:
    level: int
    dofs: int
    preconditioner: str
    kappa: float
    iterations: int
    residual: float
    converged: bool
    kappa_converged: bool


def run_precond(ls=None, data=None, bbox=DISK_BOX, n0: int = 8, levels=(1, 2, 3),
                penalties: Penalties = Penalties(), tol: float = 1e-8, lanczos_steps: int = 300,
                seed: int = 0, kinds=PRECOND_ORDER) -> list[PrecondRow]:
    """Condition numbers and CG iteration counts of the state solve per level."""
    if ls is None:
        ls, data = example1()
    disc = Discretization.build(ls, bbox, n0, max(levels) + 1)
    rows = []
    for l in levels:
        system = disc.assemble(l, data, penalties)
        K = system.K
        rhs = system.M @ np.ones(K.shape[0]) + system.d  # state equation at u = 1
        for kind in kinds:
            try:
                hier = disc.multigrid(l, K) if kind is PrecondKind.MULTIGRID else None
                P = make_preconditioner(kind, K, hier)
                rep = cg_solve(K, rhs, P, tol)
                ce = estimate_condition(K, P, steps=lanczos_steps, seed=seed)
                rows.append(PrecondRow(l, K.shape[0], kind.value, ce.kappa, rep.iterations,
                                       rep.residual, rep.converged, ce.converged))
            except (FloatingPointError, ValueError, np.linalg.LinAlgError):
                rows.append(PrecondRow(l, K.shape[0], kind.value, float("nan"), -1,
                                       float("nan"), False, False))
    return rows


def write_precond_csv(rows, path) -> None:
    cols = ["level", "dofs", "preconditioner", "kappa", "iterations", "residual", "converged",
            "kappa_converged"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for r in rows:
            vals = [getattr(r, c) for c in cols]
            w.writerow(["NA" if isinstance(v, float) and math.isnan(v) else
                        (repr(v) if isinstance(v, float) else v) for v in vals])


def position_sweep(n: int = 34, n_positions: int = 12, gamma_1: float = 0.1,
                   penalties: Penalties = Penalties(), direction=(1.0, 0.37),
                   lanczos_steps: int = 300, bbox=DISK_BOX):
    """kappa of the Jacobi-scaled stiffness as the unit circle moves by sub-cell offsets.

    Centers are ``t * hx * direction`` for ``t`` in ``[0, 1)``; a non-positive
    smallest Ritz value (indefinite matrix) is reported as ``inf``.
    """
    mesh = build_structured_mesh(bbox, n)
    hx = (bbox[1] - bbox[0]) / n
    d = np.asarray(direction, dtype=float)
    out = []
    for t in np.arange(n_positions) / n_positions:
        c = t * hx * d
        topo = classify_elements(mesh, unit_circle(center=c))
        K = assemble_stiffness(P1Space(mesh, topo), penalties.gamma_D, penalties.gamma_N, gamma_1)
        ce = estimate_condition(K, make_preconditioner(PrecondKind.JACOBI, K), steps=lanczos_steps)
        out.append((tuple(c), ce.kappa if ce.lam_min > 0 else float("inf")))
    return out


# ----------------------------------------------------------------------- QMC

@dataclass(frozen=True)
class ControlQoI:
    """Solve the gasket control problem at one parameter point.

    Returns ``[||y - y_d||, ||y||, ||u||, J]`` over the discrete domain.
    Picklable so it can run in worker processes.
    """

    nx: int = 57  # max element diameter about 0.15 on the gasket box
    ny: int = 47
    alpha: float = 0.1
    eps: float = 1e-6
    gamma_D: float = 10.0
    gamma_1: float = 0.1

    def problem(self, omega) -> ControlProblem:
        ls, data = gasket_problem(float(omega[0]), float(omega[1]))
        return ControlProblem.build(ls, data, GASKET_BOX, (self.nx, self.ny), self.alpha,
                                    Penalties(self.gamma_D, 0.0, self.gamma_1))

    def __call__(self, omega) -> np.ndarray:
        prob = self.problem(omega)
        tri = optimize(prob, "direct", self.eps)
        space = prob.space
        y_d = prob.y_d
        return np.array([
            np.sqrt(l2_misfit(space, tri.y, y_d)),
            np.sqrt(l2_misfit(space, tri.y, None)),
            np.sqrt(l2_misfit(space, tri.u, None)),
            tri.cost,
        ])


def run_qmc_analytic(N_list, z=qmc.EMBEDDED_Z, seeds=range(10), q: int = qmc.DEFAULT_Q,
                     shift_seed: int = qmc.DEFAULT_SEED):
    """Lattice, seed-averaged MC and shifted-lattice errors for ``t1 t2`` on the unit square."""
    box = [(0.0, 1.0), (0.0, 1.0)]
    fn = qmc.product_integrand
    lat_ev = qmc.Evaluator(fn)
    lat = [abs(qmc.estimate(fn, "lattice", N, box, z=z, evaluator=lat_ev).mean[0] - 0.25)
           for N in N_list]
    mc = []
    evs = {s: qmc.Evaluator(fn) for s in seeds}
    for N in N_list:
        mc.append(float(np.mean([abs(qmc.estimate(fn, "mc", N, box, seed=s, evaluator=evs[s]).mean[0]
                                     - 0.25) for s in seeds])))
    return {"N": list(N_list), "lattice": lat, "mc": mc}


def run_qmc_control(N_list, box=None, z=qmc.EMBEDDED_Z, seed: int = qmc.DEFAULT_SEED,
                    qoi: ControlQoI = ControlQoI(), jobs: int = 1):
    """Lattice and MC mean estimates of the four QoIs for increasing N.

    Both samplers are measured against the lattice estimate at the largest N.
    """
    box = box or [(9.0, 12.0), (2.0, 3.0)]
    lat_rows, lat_ests = qmc.convergence_study(qoi, "lattice", N_list, box, z=z, names=QOI_NAMES,
                                               jobs=jobs)
    ref = lat_ests[-1]
    mc_rows, mc_ests = qmc.convergence_study(qoi, "mc", N_list, box, seed=seed, names=QOI_NAMES,
                                             reference=ref, jobs=jobs)
    return lat_rows + mc_rows, lat_ests, mc_ests


def run_qmc_randomized(N_list, fn=qmc.product_integrand, box=None, z=qmc.EMBEDDED_Z,
                       q: int = qmc.DEFAULT_Q, seed: int = qmc.DEFAULT_SEED, names=None, jobs: int = 1):
    box = box or [(0.0, 1.0), (0.0, 1.0)]
    ev = qmc.Evaluator(fn, jobs)
    return [qmc.estimate(fn, "shifted_lattice", N, box, z=z, q=q, seed=seed, names=names,
                         evaluator=ev) for N in N_list]


# ------------------------------------------------------------- geometry dump

def run_geometry_dump(ls, bbox, n, out_dir, data=None, alpha: float = 0.1,
                      penalties: Penalties = Penalties()) -> list[Path]:
    """Write mesh, element classes, interface polylines and optional nodal fields."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    mesh = build_structured_mesh(bbox, n)
    topo = classify_elements(mesh, ls)
    files = [out / "mesh.txt", out / "classes.txt", out / "interface.txt"]
    write_mesh(mesh, files[0])
    names = {int(c): c.name for c in ElementClass}
    with open(files[1], "w") as fh:
        for i, c in enumerate(topo.element_class):
            fh.write(f"{i} {names[int(c)]}\n")
    with open(files[2], "w") as fh:
        for k, line in enumerate(interface_polylines(topo)):
            fh.write(f"# curve {k} closed={int(np.allclose(line[0], line[-1]))}\n")
            for x, y in line:
                fh.write(f"{float(x)!r} {float(y)!r}\n")
    if data is not None:
        space = P1Space(mesh, topo)
        system = assemble_system(space, data.f, data.g_D, data.g_N, data.y_d, penalties)
        tri = optimize(ControlProblem(system, alpha, data.y_d), "direct")
        path = out / "fields.txt"
        with open(path, "w") as fh:
            fh.write("vertex x y state adjoint control\n")
            for i, v in enumerate(space.active_dofs):
                vals = (*mesh.vertices[v], tri.y[i], tri.p[i], tri.u[i])
                fh.write(f"{v} " + " ".join(repr(float(a)) for a in vals) + "\n")
        files.append(path)
    return files


def dump_json(obj, path) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
