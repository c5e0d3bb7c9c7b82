"""Preconditioned conjugate gradients."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .precond import Identity


@dataclass
class SolveReport:
    x: np.ndarray
    iterations: int
    residual: float
    converged: bool

    def as_row(self) -> dict:
        return {"iterations": self.iterations, "residual": self.residual,
                "converged": self.converged}


def cg_solve(A, b, P=None, tol: float = 1e-8, maxit: int = 10_000, x0=None) -> SolveReport:
    """Solve ``A x = b`` by preconditioned CG.

    Stops once ``||b - A x|| <= tol ||b||``.  Running out of iterations is
    reported in the result, a NaN or a breakdown raises ``FloatingPointError``.
    """
    b = np.asarray(b, dtype=float)
    P = P or Identity()
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=float, copy=True)
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return SolveReport(np.zeros_like(b), 0, 0.0, True)
    r = b - A @ x
    res = np.linalg.norm(r) / bnorm
    if res <= tol:
        return SolveReport(x, 0, float(res), True)
    z = P(r)
    p = z.copy()
    rz = r @ z
    it = 0
    while it < maxit:
        it += 1
        Ap = A @ p
        pAp = p @ Ap
        if not np.isfinite(pAp) or pAp <= 0:
            raise FloatingPointError(
                f"CG breakdown at iteration {it}: p^T A p = {pAp} (matrix or preconditioner not SPD?)")
        alpha = rz / pAp
        x += alpha * p
        r -= alpha * Ap
        res = np.linalg.norm(r) / bnorm
        if not np.isfinite(res):
            raise FloatingPointError(f"CG produced a non-finite residual at iteration {it}")
        if res <= tol:
            break
        z = P(r)
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    return SolveReport(x, it, float(res), bool(res <= tol))
