"""Quadrature rules on the reference triangle and on segments."""

from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi, roots_legendre

# Symmetric rules (barycentric points, weights summing to one).
_DUNAVANT = {
    1: ([(1 / 3, 1 / 3, 1 / 3)], [1.0]),
    2: ([(2 / 3, 1 / 6, 1 / 6), (1 / 6, 2 / 3, 1 / 6), (1 / 6, 1 / 6, 2 / 3)], [1 / 3] * 3),
    4: (
        [
            (0.108103018168070, 0.445948490915965, 0.445948490915965),
            (0.445948490915965, 0.108103018168070, 0.445948490915965),
            (0.445948490915965, 0.445948490915965, 0.108103018168070),
            (0.816847572980459, 0.091576213509771, 0.091576213509771),
            (0.091576213509771, 0.816847572980459, 0.091576213509771),
            (0.091576213509771, 0.091576213509771, 0.816847572980459),
        ],
        [0.223381589678011] * 3 + [0.109951743655322] * 3,
    ),
    5: (
        [
            (1 / 3, 1 / 3, 1 / 3),
            (0.059715871789770, 0.470142064105115, 0.470142064105115),
            (0.470142064105115, 0.059715871789770, 0.470142064105115),
            (0.470142064105115, 0.470142064105115, 0.059715871789770),
            (0.797426985353087, 0.101286507323456, 0.101286507323456),
            (0.101286507323456, 0.797426985353087, 0.101286507323456),
            (0.101286507323456, 0.101286507323456, 0.797426985353087),
        ],
        [0.225] + [0.132394152788506] * 3 + [0.125939180544827] * 3,
    ),
}


@lru_cache(maxsize=None)
def triangle_rule(order: int):
    """Barycentric points (q, 3) and weights (q,) summing to 1.

    The rule integrates polynomials of total degree ``order`` exactly when
    scaled by the triangle area.  Orders without a tabulated symmetric rule
    fall back to a collapsed (conical product) Gauss rule.
    """
    if order < 1:
        order = 1
    if order == 3:
        order = 4
    if order in _DUNAVANT:
        pts, w = _DUNAVANT[order]
        lam = np.array(pts, dtype=float)
        w = np.array(w, dtype=float)
        w /= w.sum()
    else:
        m = (order + 2) // 2
        xj, wj = roots_jacobi(m, 1.0, 0.0)
        xl, wl = roots_legendre(m)
        s = 0.5 * (1 + xj)
        ws = wj / 4.0
        t = 0.5 * (1 + xl)
        wt = wl / 2.0
        S, T = np.meshgrid(s, t, indexing="ij")
        x = S.ravel()
        y = ((1 - S) * T).ravel()
        w = np.outer(ws, wt).ravel() * 2.0  # reference area is 1/2
        lam = np.column_stack([1 - x - y, x, y])
    lam.setflags(write=False)
    w.setflags(write=False)
    return lam, w


@lru_cache(maxsize=None)
def segment_rule(order: int):
    """Gauss-Legendre points on [0, 1] and weights summing to 1."""
    m = max(1, (order + 2) // 2)
    x, w = roots_legendre(m)
    t = 0.5 * (1 + x)
    w = 0.5 * w
    t.setflags(write=False)
    w.setflags(write=False)
    return t, w
