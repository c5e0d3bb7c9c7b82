import dataclasses

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cutocp.control import (ControlProblem, StepRule, cost, errors, m_norm, multilevel_optimize,
                            optimize, reduced_gradient, run_record, solve_adjoint, solve_state)
from cutocp.fem import Penalties
from cutocp.multilevel import Discretization
from cutocp.problems import DISK_BOX, ProblemData, example1


@pytest.fixture(scope="module")
def prob():
    ls, data = example1()
    return ControlProblem.build(ls, data, DISK_BOX, 16)


def const_problem(value, n=16):
    ls, _ = example1()
    data = ProblemData(f=None, g_D=None, y_d=lambda x: np.full(len(x), value))
    return ControlProblem.build(ls, data, DISK_BOX, n)


# ---- state / adjoint --------------------------------------------------------

def test_state_solve_residual(prob):
    u = np.ones(prob.ndofs)
    y, rep = solve_state(prob.system, u)
    S = prob.system
    assert np.linalg.norm(S.K @ y - S.M @ u - S.d) <= 1e-10 * np.linalg.norm(S.M @ u + S.d)
    y2, rep2 = solve_state(prob.system, u, "sgs", tol=1e-12)
    assert rep2.iterations > 0 and np.allclose(y, y2, atol=1e-9)


def test_adjoint_of_cancelling_target_vanishes(prob):
    S = prob.system
    y = np.random.default_rng(0).standard_normal(prob.ndofs)
    # b = -M y makes the right-hand side zero
    shifted = dataclasses.replace(S, b=-S.M @ y)
    p, _ = solve_adjoint(shifted, y)
    assert np.abs(p).max() < 1e-12


def test_alpha_must_be_positive(prob):
    with pytest.raises(ValueError):
        ControlProblem(prob.system, alpha=0.0)


# ---- cost and gradient -------------------------------------------------------

def test_cost_of_zero_state_is_half_area():
    pr = const_problem(1.0, n=32)
    z = np.zeros(pr.ndofs)
    assert cost(pr.system, z, z, pr.y_d, 0.1) == pytest.approx(np.pi / 2, rel=5e-3)


def test_control_term_scales_quadratically(prob):
    S = prob.system
    y = np.zeros(prob.ndofs)
    u = np.random.default_rng(1).standard_normal(prob.ndofs)
    base = cost(S, y, 0 * u, None, 0.1)
    c1 = cost(S, y, u, None, 0.1) - base
    c2 = cost(S, y, 2 * u, None, 0.1) - base
    assert c2 == pytest.approx(4 * c1, rel=1e-12)
    assert m_norm(S.M, u) ** 2 * 0.05 == pytest.approx(c1, rel=1e-12)


def reduced_cost(pr, u):
    y, _ = solve_state(pr.system, u)
    return cost(pr.system, y, u, pr.y_d, pr.alpha)


def test_gradient_matches_central_differences(prob):
    S = prob.system
    rng = np.random.default_rng(3)
    u = rng.standard_normal(prob.ndofs)
    y, _ = solve_state(S, u)
    p, _ = solve_adjoint(S, y)
    g = reduced_gradient(u, p, prob.alpha)
    eps = 1e-5
    for _ in range(3):
        d = rng.standard_normal(prob.ndofs)
        fd = (reduced_cost(prob, u + eps * d) - reduced_cost(prob, u - eps * d)) / (2 * eps)
        an = float(d @ (S.M @ g))
        assert abs(fd - an) <= 1e-7 * max(1.0, abs(an))


# ---- optimizer ----------------------------------------------------------------

def test_infinite_tolerance_stops_after_one_pass(prob):
    tri = optimize(prob, eps=np.inf)
    assert tri.outer_iterations == 1 and tri.converged
    assert len(tri.cost_history) == 1


def test_attainable_target_drives_control_to_zero():
    # y_d = 0 with zero data: the optimal control is zero
    pr = const_problem(0.0)
    tri = optimize(pr, eps=1e-12, gtol=1e-10)
    assert m_norm(pr.system.M, tri.u) < 1e-8
    assert tri.cost < 1e-16


def test_cost_decreases_monotonically(prob):
    tri = optimize(prob, eps=1e-10)
    h = np.array(tri.cost_history)
    assert np.all(np.diff(h) <= 1e-14 * h[:-1])
    assert tri.converged


@pytest.mark.parametrize("kind", ["identity", "jacobi", "sgs"])
def test_preconditioner_does_not_change_the_optimum(prob, kind):
    ref = optimize(prob, "direct", eps=1e-10)
    tri = optimize(prob, kind, eps=1e-10, inner_tol=1e-12)
    assert np.allclose(tri.u, ref.u, atol=1e-7 * np.abs(ref.u).max())
    assert tri.inner_iterations > 0 and ref.inner_iterations == 0


def test_fixed_step_converges_slower_but_same_optimum(prob):
    ref = optimize(prob, eps=1e-12)
    tri = optimize(prob, eps=1e-12, step=StepRule.FIXED, tau=5.0, max_outer=2000)
    assert tri.converged
    assert np.allclose(tri.u, ref.u, atol=1e-4 * np.abs(ref.u).max())


@given(alpha=st.floats(0.01, 10.0))
def test_final_control_satisfies_optimality_relation(alpha):
    pr = const_problem(0.5, n=8)
    pr = ControlProblem(pr.system, alpha, pr.y_d)
    tri = optimize(pr, eps=1e-9)
    assert np.allclose(tri.u, -tri.p / alpha)


def test_gtol_tightens_the_optimality_residual(prob):
    loose = optimize(prob, eps=1e-6)
    tight = optimize(prob, eps=1e-6, gtol=1e-8)
    assert tight.optimality_residual <= 1e-8
    assert tight.outer_iterations >= loose.outer_iterations


# ---- multilevel -----------------------------------------------------------------

@pytest.fixture(scope="module")
def ml_run():
    ls, data = example1()
    disc = Discretization.build(ls, DISK_BOX, 8, 3)
    return disc, data, multilevel_optimize(disc, data, gtol=1e-8)


def test_single_level_equals_direct(disk):
    ls, data = disk
    disc = Discretization.build(ls, DISK_BOX, 8, 1)
    (pr, tri), = multilevel_optimize(disc, data)
    ref = optimize(ControlProblem.build(ls, data, DISK_BOX, 8))
    assert np.allclose(tri.u, ref.u) and tri.outer_iterations == ref.outer_iterations


def test_warm_start_saves_outer_iterations(ml_run):
    disc, data, warm = ml_run
    cold = multilevel_optimize(disc, data, warm_start=False, gtol=1e-8)
    assert warm[-1][1].outer_iterations < cold[-1][1].outer_iterations
    assert np.allclose(warm[-1][1].u, cold[-1][1].u, atol=1e-6)


def test_multilevel_control_error_is_adjoint_error_over_alpha(ml_run):
    _, _, res = ml_run
    for pr, tri in res:
        e = errors(pr, tri)
        assert tri.optimality_residual <= 1e-8
        for nrm in ("L2", "H1", "STAR"):
            assert e[f"u_{nrm}"] == pytest.approx(10.0 * e[f"p_{nrm}"], rel=1e-10)


def test_multilevel_errors_decrease(ml_run):
    _, _, res = ml_run
    l2 = [errors(pr, tri)["y_L2"] for pr, tri in res]
    assert l2[0] > l2[1] > l2[2]
    its = [tri.inner_iterations / max(1, len(tri.reports)) for _, tri in res[1:]]
    assert max(its) < 15


def test_run_record_fields(ml_run):
    _, _, res = ml_run
    pr, tri = res[1]
    rec = run_record(pr, tri, "multigrid")
    assert rec["level"] == 1 and rec["preconditioner"] == "multigrid"
    assert set(rec["errors"]) >= {"y_L2", "p_H1", "u_STAR"}
    assert rec["omega"] is None


def test_penalty_choice_is_used():
    ls, data = example1()
    a = ControlProblem.build(ls, data, DISK_BOX, 8, penalties=Penalties(10.0, 0.0, 0.1))
    b = ControlProblem.build(ls, data, DISK_BOX, 8, penalties=Penalties(20.0, 0.0, 0.1))
    assert abs(a.system.K - b.system.K).max() > 0
