from __future__ import division
from __future__ import absolute_import

import itertools as it

import numpy as np
import pytest

import gridprice.core.utils as utils
import gridprice.core.numerics as numerics
import gridprice.core.example_problems as ex


# These use the random instance generators, which depend on the grid
# package, so they live here rather than at the bottom of numerics.py.


# Bisection
# ============================================================


def test_bisect_bracket_failure():
    with pytest.raises(numerics.BracketError) as info:
        numerics.bisect(lambda x: x * x + 1.0, -1.0, 1.0)
    assert info.value.f_lo > 0 and info.value.f_hi > 0


def test_bisect_expands_upward():
    root = numerics.bisect(lambda x: x - 1000.0, 0.0, 1.0, tol=1e-12)
    utils.assert_almost_equal(root, 1000.0, 1e-9)


def test_bisect_returns_exact_root_at_end():
    assert numerics.bisect(lambda x: x - 2.0, 2.0, 5.0) == 2.0


def test_waterfill_matches_grid_scan():
    """Residual of the two-site best response equation against a fine grid
    scan of the multiplier.
    """
    c = np.array([1.0, 0.5])
    w = np.array([0.5, 0.25])
    theta = np.array([1.0, 2.0])
    lo, hi = np.zeros(2), np.array([3.0, 0.9])
    target = 3.9

    nu, x = numerics.waterfill(c, w, theta, target, lo, hi)

    grid = np.arange(-3.0, -1.0, 1e-6)
    values = sum(theta[i] * np.clip(c[i] - w[i] * grid, lo[i], hi[i])
                 for i in range(2))
    best = grid[np.argmin(np.abs(values - target))]
    utils.assert_almost_equal(nu, best, 2e-6)
    utils.assert_almost_equal(nu, -2.2, 1e-9)
    utils.assert_list_almost_equal(x, [2.1, 0.9])
    utils.assert_almost_equal(theta.dot(x), target, 1e-9)


def test_waterfill_all_clamped():
    # Only the upper corner meets the target.
    nu, x = numerics.waterfill([0.0, 0.0], [1.0, 1.0], [1.0, 1.0], 4.0,
                               [0.0, 0.0], [2.0, 2.0])
    utils.assert_list_almost_equal(x, [2.0, 2.0])


# Quadratic programs
# ============================================================


def test_make_qp_rejects_asymmetric():
    with pytest.raises(ValueError):
        numerics.make_qp([[1.0, 1.0], [0.0, 1.0]], [0.0, 0.0])


def test_make_qp_rejects_crossed_bounds():
    with pytest.raises(ValueError):
        numerics.make_qp(np.eye(1), [0.0], G=[[1.0]], l=[1.0], u=[0.0])


def test_with_bounds_keeps_rows():
    problem = numerics.make_qp(np.eye(1), [0.0], G=[[1.0]], l=[1.0], u=[2.0])
    with pytest.raises(ValueError):
        problem.with_bounds([0.0, 0.0], [1.0, 1.0])
    assert problem.with_bounds([0.5], [0.5]).l[0] == 0.5


def test_qp_matches_known_optimum():
    rng = np.random.default_rng(11)
    for _ in range(200):
        problem, x_star, _ = ex.random_qp(rng)
        sol = numerics.qp_solve(problem)
        assert sol.status == numerics.OPTIMAL
        assert sol.primal_residual <= 1e-6
        assert sol.dual_residual <= 1e-6

        best = problem.objective(x_star)
        assert abs(sol.objective - best) <= 1e-5 * max(1.0, abs(best)), \
            (sol.objective, best)


def test_qp_complementary_slackness():
    rng = np.random.default_rng(12)
    for _ in range(50):
        problem, _, _ = ex.random_qp(rng)
        sol = numerics.qp_solve(problem)
        assert numerics.complementarity_violation(problem, sol.x, sol.y) <= 1e-5


def test_qp_matches_dense_kkt_solve():
    rng = np.random.default_rng(13)
    for _ in range(50):
        problem, _, _ = ex.random_qp(rng, with_inequalities=False)
        x_kkt, _ = numerics.kkt_solve(problem)
        sol = numerics.qp_solve(problem)
        assert sol.status == numerics.OPTIMAL
        utils.assert_list_almost_equal(sol.x, x_kkt, 1e-5)


def test_qp_is_deterministic():
    rng = np.random.default_rng(14)
    problem, _, _ = ex.random_qp(rng, n=12)
    a = numerics.qp_solve(problem)
    b = numerics.qp_solve(problem)
    assert np.array_equal(a.x, b.x)
    assert np.array_equal(a.y, b.y)
    assert a.iterations == b.iterations


def test_qp_reports_max_iterations():
    rng = np.random.default_rng(15)
    problem, _, _ = ex.random_qp(rng, n=20)
    sol = numerics.qp_solve(problem, numerics.QpSettings(max_iter=1,
                                                         polish=False))
    assert sol.status == numerics.MAX_ITERATIONS


def test_qp_infeasible_inequalities():
    # x >= 2 and x <= 1 through two rows.
    problem = numerics.make_qp(np.eye(1), [0.0], G=[[1.0], [1.0]],
                               l=[2.0, -np.inf], u=[np.inf, 1.0])
    assert numerics.qp_solve(problem).status == numerics.INFEASIBLE


def test_qp_initial_point_hint():
    rng = np.random.default_rng(16)
    problem, x_star, _ = ex.random_qp(rng, n=8)
    sol = numerics.qp_solve(problem, x0=x_star)
    assert sol.status == numerics.OPTIMAL
    utils.assert_almost_equal(sol.objective, problem.objective(x_star),
                              1e-5 * max(1.0, abs(problem.objective(x_star))))


def test_kkt_solve_rejects_inequalities():
    problem = numerics.make_qp(np.eye(1), [0.0], G=[[1.0]], l=[0.0], u=[1.0])
    with pytest.raises(ValueError):
        numerics.kkt_solve(problem)


def test_settings_defaults():
    settings = numerics.QpSettings()
    assert settings.tol == numerics.DEFAULT_QP_TOL
    assert settings.max_iter == 20000
    assert settings._replace(tol=1e-8).tol == 1e-8


def test_tolerance_from_environment(monkeypatch):
    monkeypatch.setenv(numerics.TOLERANCE_ENV_VAR, "1e-7")
    assert numerics._tolerance_from_environment() == 1e-7
    monkeypatch.setenv(numerics.TOLERANCE_ENV_VAR, "not a number")
    assert numerics._tolerance_from_environment() == numerics.FALLBACK_QP_TOL
    monkeypatch.delenv(numerics.TOLERANCE_ENV_VAR)
    assert numerics._tolerance_from_environment() == numerics.FALLBACK_QP_TOL


# Example problems
# ============================================================


def test_random_slots_are_feasible():
    rng = np.random.default_rng(17)
    for n, wide in it.product([1, 2, 3, 4], [False, True]):
        slot = ex.random_slot(rng, n, wide_band=wide)
        assert slot.N == n
        assert slot.theta.dot(slot.e_lo) <= slot.E_total <= slot.theta.dot(slot.e_hi)


def test_random_qp_optimum_is_feasible():
    rng = np.random.default_rng(18)
    problem, x_star, _ = ex.random_qp(rng, n=10)
    utils.assert_list_almost_equal(problem.A.dot(x_star), problem.b)
    Gx = problem.G.dot(x_star)
    assert np.all(Gx >= problem.l - 1e-12)
    assert np.all(Gx <= problem.u + 1e-12)
