"""Extreme eigenvalues of preconditioned SPD operators by Lanczos."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import eigh_tridiagonal

from .precond import Identity


@dataclass
class ConditionEstimate:
    kappa: float
    lam_min: float
    lam_max: float
    steps: int
    converged: bool
    history: list = field(default_factory=list, repr=False)

    def __float__(self):
        return float(self.kappa)


def _extremes(alpha, beta):
    if len(alpha) == 1:
        return alpha[0], alpha[0]
    w = eigh_tridiagonal(np.asarray(alpha), np.asarray(beta), eigvals_only=True)
    return w[0], w[-1]


def estimate_condition(A, P=None, steps: int = 200, seed: int = 0, window: int = 20,
                       rtol: float = 1e-3) -> ConditionEstimate:
    """Lanczos estimate of ``kappa(P^{-1} A)``.

    ``P`` is the preconditioner action ``r -> P^{-1} r``.  The operator
    ``P^{-1} A`` is self-adjoint in the A-inner product, so Lanczos runs in
    that inner product with full reorthogonalization.  An invariant subspace
    triggers a restart from a fresh seeded random vector.  ``converged`` is
    set when the estimate moved by less than ``rtol`` over the last
    ``window`` steps, or when the whole space was spanned.
    """
    P = P or Identity()
    n = A.shape[0]
    steps = min(steps, n)
    rng = np.random.default_rng(seed)

    V = np.zeros((steps, n))
    AV = np.zeros((steps, n))
    alpha, beta, history = [], [], []

    def start_vector():
        for _ in range(10):
            v = rng.standard_normal(n)
            Av = A @ v
            if len(alpha):
                c = AV[: len(alpha)] @ v
                v = v - V[: len(alpha)].T @ c
                c = AV[: len(alpha)] @ v
                v = v - V[: len(alpha)].T @ c
                Av = A @ v
            nrm2 = v @ Av
            if nrm2 > 1e-24 * (v @ v):
                s = 1.0 / np.sqrt(nrm2)
                return v * s, Av * s
        return None, None

    v, Av = start_vector()
    if v is None:
        raise np.linalg.LinAlgError("could not find a start vector with positive A-norm")
    stop_all = False
    for j in range(steps):
        V[j], AV[j] = v, Av
        w = P(Av)
        Aw = A @ w
        a = float(v @ Aw)
        alpha.append(a)
        k = j + 1
        ref = float(w @ Aw)
        # full reorthogonalization (twice is enough)
        for _ in range(2):
            c = AV[:k] @ w
            w = w - V[:k].T @ c
        Aw = A @ w  # recomputed: the updated product drifts once w is small
        lo, hi = _extremes(alpha, beta)
        history.append(hi / lo if lo > 0 else np.inf)
        if k == steps:
            break
        b2 = float(w @ Aw)
        if b2 <= 1e-16 * ref:
            v, Av = start_vector()
            if v is None:
                stop_all = True
                break
            beta.append(0.0)
        else:
            b = np.sqrt(b2)
            beta.append(b)
            v, Av = w / b, Aw / b

    lo, hi = _extremes(alpha, beta)
    k = len(alpha)
    converged = stop_all or k == n
    if not converged and k > window:
        old = history[-1 - window]
        converged = abs(history[-1] - old) <= rtol * abs(history[-1])
    kappa = hi / lo if lo > 0 else np.inf
    return ConditionEstimate(float(kappa), float(lo), float(hi), k, bool(converged), history)
