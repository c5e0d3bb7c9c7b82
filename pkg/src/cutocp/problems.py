"""Built-in data sets: the manufactured unit-disk problem and the gasket geometry."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .geometry import LevelSet, gasket, unit_circle

PI = np.pi

DISK_BOX = (-1.5, 1.5, -1.5, 1.5)
GASKET_BOX = (-3.0, 3.0, -2.5, 2.5)
GASKET_OMEGA_WIDE = ((9.0, 12.0), (2.0, 3.0))
GASKET_OMEGA_NARROW = ((9.0, 9.25), (2.0, 2.25))


@dataclass(frozen=True)
class ExactTriple:
    """Exact optimal state, adjoint and control with gradients."""

    y: Callable
    grad_y: Callable
    p: Callable
    grad_p: Callable
    u: Callable
    grad_u: Callable


@dataclass(frozen=True)
class ProblemData:
    f: Callable | None
    g_D: Callable | None
    y_d: Callable | None
    g_N: Callable | None = None
    exact: ExactTriple | None = None


def _s(x):
    return np.sin(0.5 * PI * x[:, 0])


def _c(x):
    return np.cos(0.5 * PI * x[:, 0])


def _rho(x):
    return x[:, 0] ** 2 + x[:, 1] ** 2 - 1.0


def ex1_y(x):
    return np.sin(0.5 * PI * x[:, 0]) * np.sin(0.5 * PI * x[:, 1])


def ex1_grad_y(x):
    a, b = 0.5 * PI * x[:, 0], 0.5 * PI * x[:, 1]
    return 0.5 * PI * np.column_stack([np.cos(a) * np.sin(b), np.sin(a) * np.cos(b)])


def ex1_u(x):
    return _rho(x) * _s(x)


def ex1_grad_u(x):
    s, c, rho = _s(x), _c(x), _rho(x)
    return np.column_stack([2 * x[:, 0] * s + rho * 0.5 * PI * c, 2 * x[:, 1] * s])


def ex1_p(x):
    return -0.1 * ex1_u(x)


def ex1_grad_p(x):
    return -0.1 * ex1_grad_u(x)


def ex1_f(x):
    return 0.5 * PI**2 * ex1_y(x) - _rho(x) * _s(x)


def ex1_y_d(x):
    return 0.025 * ((PI**2 * _rho(x) - 16.0) * _s(x) - 8.0 * PI * x[:, 0] * _c(x)) + ex1_y(x)


EXAMPLE1_EXACT = ExactTriple(ex1_y, ex1_grad_y, ex1_p, ex1_grad_p, ex1_u, ex1_grad_u)
EXAMPLE1_ALPHA = 0.1


def example1() -> tuple[LevelSet, ProblemData]:
    """Unit disk in [-1.5, 1.5]^2 with a known optimal triple (alpha = 0.1)."""
    return unit_circle(), ProblemData(f=ex1_f, g_D=ex1_y, y_d=ex1_y_d, exact=EXAMPLE1_EXACT)


def gasket_problem(omega1: float = 9.0, omega2: float = 2.0) -> tuple[LevelSet, ProblemData]:
    """Gasket geometry with the disk problem's data on the hold-all box."""
    return gasket(omega1, omega2), ProblemData(f=ex1_f, g_D=ex1_y, y_d=ex1_y_d)


def affine(a=(0.7, -0.3), c=0.2):
    """Affine function and its gradient, for patch tests."""
    a = np.asarray(a, dtype=float)

    def fn(x):
        return x @ a + c

    def grad(x):
        return np.broadcast_to(a, x.shape).copy()

    return fn, grad
