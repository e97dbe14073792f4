"""Numerical kernels: bracketed bisection, box-constrained water-filling and
a dense operator-splitting (ADMM) solver for convex quadratic programs

    minimise    0.5 x'Px + q'x
    subject to  Ax = b,  l <= Gx <= u.

Internally the equality and inequality rows are stacked into a single
two-sided block l_c <= Cx <= u_c with l_c = u_c on equality rows. Dual
values follow the same stacking: negative y means the lower side of a row
is active, positive y the upper side.
"""

from __future__ import division
from __future__ import absolute_import

import collections
import logging
import math
import os

import numpy as np
import scipy.linalg

import gridprice.core.utils as utils


logger = logging.getLogger(__name__)


# PARAMETERS
TOLERANCE_ENV_VAR = "GRIDPRICE_TOL"
FALLBACK_QP_TOL = 1e-6

MAX_BRACKET_EXPANSIONS = 60
BISECTION_TOL = 1e-10
BISECTION_MAX_ITER = 400

RHO_MIN = 1e-6
RHO_MAX = 1e6
EQUALITY_RHO_SCALE = 1e3
ADAPT_RHO_FACTOR = 5.0
MIN_SCALING = 1e-4
MAX_SCALING = 1e4
POLISH_DELTA = 1e-7
POLISH_REFINE_ITER = 10

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
MAX_ITERATIONS = "max_iterations"


def _tolerance_from_environment():
    raw = os.environ.get(TOLERANCE_ENV_VAR)
    if raw is None:
        return FALLBACK_QP_TOL
    try:
        value = float(raw)
    except ValueError:
        value = float("nan")
    if not (math.isfinite(value) and value > 0):
        logger.warning("ignoring %s=%r, expected a positive number",
                       TOLERANCE_ENV_VAR, raw)
        return FALLBACK_QP_TOL
    return value


# Read once, at import.
DEFAULT_QP_TOL = _tolerance_from_environment()


class BracketError(RuntimeError):

    def __init__(self, lo, hi, f_lo, f_hi):
        self.lo = lo
        self.hi = hi
        self.f_lo = f_lo
        self.f_hi = f_hi

    def __str__(self):
        return "no sign change on [%r, %r] after %d expansions "\
            "(f(lo) = %r, f(hi) = %r)" % (self.lo, self.hi,
                                          MAX_BRACKET_EXPANSIONS,
                                          self.f_lo, self.f_hi)


class SolverError(RuntimeError):
    """A quadratic program that a caller relies on did not reach an optimal
    status.
    """

    def __init__(self, what, status):
        self.what = what
        self.status = status

    def __str__(self):
        return "%s: QP solver finished with status %s" % (self.what,
                                                          self.status)


# Scalar root finding
# ============================================================


def _sign(x):
    return int(x > 0) - int(x < 0)


def bisect(f, lo, hi, tol=BISECTION_TOL, max_iter=BISECTION_MAX_ITER):
    """Find a root of the monotone scalar function f.

    If f(lo) and f(hi) have the same sign the bracket is widened (the
    width doubles each time) on the side where monotonicity says the root
    lies, at most MAX_BRACKET_EXPANSIONS times, then BracketError is
    raised. Returns x with f(x) == 0 or a final bracket no wider than tol.
    """
    lo, hi = float(min(lo, hi)), float(max(lo, hi))
    f_lo, f_hi = f(lo), f(hi)

    expansions = 0
    while _sign(f_lo) == _sign(f_hi) and f_lo != 0:
        if expansions >= MAX_BRACKET_EXPANSIONS:
            raise BracketError(lo, hi, f_lo, f_hi)
        width = max(2.0 * (hi - lo), 1.0)
        increasing = f_hi > f_lo
        decreasing = f_hi < f_lo
        if (increasing and f_lo > 0) or (decreasing and f_lo < 0):
            lo, hi, f_hi = lo - width, lo, f_lo
            f_lo = f(lo)
        elif increasing or decreasing:
            lo, hi, f_lo = hi, hi + width, f_hi
            f_hi = f(hi)
        else:
            # Flat: no idea which way, grow both ends.
            lo, hi = lo - width, hi + width
            f_lo, f_hi = f(lo), f(hi)
        expansions += 1

    if f_lo == 0:
        return lo
    if f_hi == 0:
        return hi

    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if hi - lo <= tol or mid == lo or mid == hi:
            break
        f_mid = f(mid)
        if f_mid == 0:
            return mid
        if _sign(f_mid) == _sign(f_lo):
            lo, f_lo = mid, f_mid
        else:
            hi, f_hi = mid, f_mid

    return 0.5 * (lo + hi)


def waterfill(c, w, theta, target, lo, hi, tol=BISECTION_TOL):
    """Solve sum_i theta_i * clip(c_i - w_i nu, lo_i, hi_i) = target for the
    scalar nu (w > 0, theta > 0). Returns (nu, x).

    The weighted sum is continuous and nonincreasing in nu, so nu is found
    by bisection between the values at which every component sits at its
    upper and at its lower bound. The active set found by bisection is then
    used to solve for nu exactly.
    """
    c, w, theta = np.asarray(c, float), np.asarray(w, float), np.asarray(theta, float)
    lo, hi = np.asarray(lo, float), np.asarray(hi, float)

    def residual(nu):
        return theta.dot(np.clip(c - w * nu, lo, hi)) - target

    nu_all_high = float(np.min((c - hi) / w))
    nu_all_low = float(np.max((c - lo) / w))

    # Targets at (or rounded past) the ends of the reachable range.
    if target >= theta.dot(hi):
        return nu_all_high, hi.copy()
    if target <= theta.dot(lo):
        return nu_all_low, lo.copy()

    scale = max(1.0, abs(nu_all_high), abs(nu_all_low))
    nu = bisect(residual, nu_all_high, nu_all_low, tol=tol * scale)

    x = np.clip(c - w * nu, lo, hi)
    free = (c - w * nu > lo) & (c - w * nu < hi)
    if np.any(free):
        clamped_total = theta[~free].dot(x[~free])
        nu_exact = (theta[free].dot(c[free]) - (target - clamped_total)) \
            / theta[free].dot(w[free])
        x_exact = np.clip(c - w * nu_exact, lo, hi)
        if abs(theta.dot(x_exact) - target) <= abs(theta.dot(x) - target):
            nu, x = nu_exact, x_exact

    return float(nu), x


# Quadratic programs
# ============================================================


class QpProblem(collections.namedtuple("QpProblem", "P q A b G l u")):
    """Immutable convex QP data, see the module docstring. Build with
    make_qp.
    """
    __slots__ = ()

    @property
    def n(self):
        return self.q.shape[0]

    def objective(self, x):
        return 0.5 * x.dot(self.P.dot(x)) + self.q.dot(x)

    def with_bounds(self, l, u):
        """Same problem with new inequality bounds."""
        l, u = utils.freeze(l), utils.freeze(u)
        if l.shape != self.l.shape or u.shape != self.u.shape:
            raise ValueError("bound vectors change the number of rows")
        if np.any(l > u):
            raise ValueError("lower bound above upper bound in rows %s"
                             % np.flatnonzero(l > u).tolist())
        return self._replace(l=l, u=u)


QpSolution = collections.namedtuple(
    "QpSolution",
    "x y status primal_residual dual_residual objective iterations polished")


_QpSettingsBase = collections.namedtuple(
    "QpSettings",
    "tol max_iter rho sigma alpha scaling_iter adaptive_rho_interval "
    "check_interval polish polish_interval eps_infeasible")


class QpSettings(_QpSettingsBase):
    """ADMM settings. tol bounds the unscaled primal and dual residuals of
    any solution reported optimal.
    """
    __slots__ = ()

    def __new__(cls, tol=None, max_iter=20000, rho=0.1, sigma=1e-6, alpha=1.6,
                scaling_iter=15, adaptive_rho_interval=25, check_interval=5,
                polish=True, polish_interval=25, eps_infeasible=1e-5):
        if tol is None:
            tol = DEFAULT_QP_TOL
        return super(QpSettings, cls).__new__(
            cls, tol, max_iter, rho, sigma, alpha, scaling_iter,
            adaptive_rho_interval, check_interval, polish, polish_interval,
            eps_infeasible)


def make_qp(P, q, A=None, b=None, G=None, l=None, u=None):
    """Validate and freeze QP data. Missing constraint blocks become empty
    blocks, missing bounds become infinite.
    """
    q = utils.freeze(q)
    n = q.shape[0]
    P = utils.freeze(P)

    if P.shape != (n, n):
        raise ValueError("P has shape %s, expected %s" % (P.shape, (n, n)))
    if np.max(np.abs(P - P.T), initial=0.0) > 1e-12:
        raise ValueError("P is not symmetric")

    A = utils.freeze(np.zeros((0, n)) if A is None else A)
    b = utils.freeze(np.zeros(0) if b is None else b)
    G = utils.freeze(np.zeros((0, n)) if G is None else G)
    m = G.shape[0]
    l = utils.freeze(np.full(m, -np.inf) if l is None else l)
    u = utils.freeze(np.full(m, np.inf) if u is None else u)

    if A.ndim != 2 or A.shape[1] != n or b.shape != (A.shape[0],):
        raise ValueError("equality block has shape %s with rhs %s"
                         % (A.shape, b.shape))
    if G.ndim != 2 or G.shape[1] != n or l.shape != (m,) or u.shape != (m,):
        raise ValueError("inequality block has shape %s with bounds %s, %s"
                         % (G.shape, l.shape, u.shape))
    if np.any(l > u):
        raise ValueError("lower bound above upper bound in rows %s"
                         % np.flatnonzero(l > u).tolist())

    return QpProblem(P, q, A, b, G, l, u)


def _inf_norm(v):
    return float(np.max(np.abs(v), initial=0.0))


def _limit_scaling(v):
    v = np.asarray(v, float)
    return np.where(v < MIN_SCALING, 1.0, np.minimum(v, MAX_SCALING))


class _AdmmWorkspace(object):
    """Scaled copy of one problem plus the factorisation used by the ADMM
    iteration. One workspace per solve, nothing shared.
    """

    def __init__(self, problem, settings):
        self.problem = problem
        self.settings = settings
        self.n = problem.n
        self.n_eq = problem.A.shape[0]

        C = np.vstack([problem.A, problem.G])
        self.m = C.shape[0]
        self.C = C
        self.l = np.concatenate([problem.b, problem.l])
        self.u = np.concatenate([problem.b, problem.u])

        self._scale()
        self.rho = settings.rho
        self._set_rho(self.rho)

    def _scale(self):
        """Ruiz equilibration of the KKT matrix followed by cost scaling."""
        P = np.array(self.problem.P, dtype=float)
        q = np.array(self.problem.q, dtype=float)
        C = np.array(self.C, dtype=float)
        d = np.ones(self.n)
        e = np.ones(self.m)
        c = 1.0

        for _ in range(self.settings.scaling_iter):
            col_norm = np.max(np.abs(P), axis=0, initial=0.0)
            if self.m:
                col_norm = np.maximum(col_norm,
                                      np.max(np.abs(C), axis=0, initial=0.0))
                row_norm = np.max(np.abs(C), axis=1, initial=0.0)
            else:
                row_norm = np.zeros(0)

            d_step = 1.0 / np.sqrt(_limit_scaling(col_norm))
            e_step = 1.0 / np.sqrt(_limit_scaling(row_norm))

            P = d_step[:, None] * P * d_step[None, :]
            C = e_step[:, None] * C * d_step[None, :]
            q = d_step * q
            d *= d_step
            e *= e_step

            cost_norm = max(float(np.mean(np.max(np.abs(P), axis=0, initial=0.0))),
                            _inf_norm(q))
            gamma = 1.0 / float(_limit_scaling(cost_norm))
            P *= gamma
            q *= gamma
            c *= gamma

        self.P_s, self.q_s, self.C_s = P, q, C
        self.D, self.E, self.c = d, e, c
        self.l_s = e * self.l
        self.u_s = e * self.u
        self.equality_rows = self.l_s == self.u_s

    def _set_rho(self, rho):
        self.rho = float(np.clip(rho, RHO_MIN, RHO_MAX))
        rho_vec = np.full(self.m, self.rho)
        free = np.isneginf(self.l_s) & np.isposinf(self.u_s)
        rho_vec[free] = RHO_MIN
        rho_vec[self.equality_rows] = EQUALITY_RHO_SCALE * self.rho
        self.rho_vec = np.clip(rho_vec, RHO_MIN, RHO_MAX)

        n, m = self.n, self.m
        K = np.zeros((n + m, n + m))
        K[:n, :n] = self.P_s + self.settings.sigma * np.eye(n)
        K[:n, n:] = self.C_s.T
        K[n:, :n] = self.C_s
        K[n:, n:] = -np.diag(1.0 / self.rho_vec)
        self.kkt_factor = scipy.linalg.lu_factor(K)

    def _step(self, x, z, y):
        settings = self.settings
        n = self.n
        rhs = np.concatenate([settings.sigma * x - self.q_s,
                              z - y / self.rho_vec])
        sol = scipy.linalg.lu_solve(self.kkt_factor, rhs)
        x_tilde = sol[:n]
        z_tilde = z + (sol[n:] - y) / self.rho_vec

        alpha = settings.alpha
        x_new = alpha * x_tilde + (1.0 - alpha) * x
        z_relaxed = alpha * z_tilde + (1.0 - alpha) * z
        z_new = np.clip(z_relaxed + y / self.rho_vec, self.l_s, self.u_s)
        y_new = y + self.rho_vec * (z_relaxed - z_new)
        return x_new, z_new, y_new

    def _residuals(self, x, z, y):
        """Unscaled primal and dual residuals."""
        prim = _inf_norm((self.C_s.dot(x) - z) / self.E)
        dual = _inf_norm((self.P_s.dot(x) + self.q_s + self.C_s.T.dot(y))
                         / self.D) / self.c
        return prim, dual

    def _primal_infeasible(self, delta_y):
        eps = self.settings.eps_infeasible
        norm = _inf_norm(delta_y)
        if norm <= eps:
            return False
        v = delta_y / norm

        # An infinite bound on the side the certificate points to makes
        # the certificate useless.
        if np.any((v > eps) & np.isposinf(self.u_s)) or \
                np.any((v < -eps) & np.isneginf(self.l_s)):
            return False
        up = (v > 0) & np.isfinite(self.u_s)
        down = (v < 0) & np.isfinite(self.l_s)
        support = self.u_s[up].dot(v[up]) + self.l_s[down].dot(v[down])
        if support >= -eps:
            return False
        return _inf_norm(self.C_s.T.dot(v) / self.D) < eps

    def _adapt_rho(self, x, z, y):
        Cx = self.C_s.dot(x)
        prim = _inf_norm(Cx - z) / (max(_inf_norm(Cx), _inf_norm(z)) + 1e-10)
        dual = _inf_norm(self.P_s.dot(x) + self.q_s + self.C_s.T.dot(y)) \
            / (max(_inf_norm(self.P_s.dot(x)), _inf_norm(self.C_s.T.dot(y)),
                   _inf_norm(self.q_s)) + 1e-10)
        new_rho = self.rho * math.sqrt(prim / (dual + 1e-10))
        new_rho = float(np.clip(new_rho, RHO_MIN, RHO_MAX))
        if new_rho > ADAPT_RHO_FACTOR * self.rho or \
                new_rho < self.rho / ADAPT_RHO_FACTOR:
            logger.debug("rho %.3g -> %.3g", self.rho, new_rho)
            self._set_rho(new_rho)

    def _polish(self, x, z, y):
        """Guess the active set from (z, y), solve the equality-constrained
        QP it defines, keep the result only if it is optimal to tolerance
        with correctly signed multipliers. Returns (x, z, y) or None.
        """
        n = self.n
        lower = ~self.equality_rows & (z - self.l_s < -y)
        upper = ~self.equality_rows & (self.u_s - z < y)
        active = np.flatnonzero(self.equality_rows | lower | upper)
        rhs_active = np.where(upper[active], self.u_s[active], self.l_s[active])

        C_red = self.C_s[active]
        k = active.shape[0]
        K = np.zeros((n + k, n + k))
        K[:n, :n] = self.P_s
        K[:n, n:] = C_red.T
        K[n:, :n] = C_red
        K_reg = K + np.diag(np.concatenate([np.full(n, POLISH_DELTA),
                                            np.full(k, -POLISH_DELTA)]))
        rhs = np.concatenate([-self.q_s, rhs_active])
        try:
            factor = scipy.linalg.lu_factor(K_reg, check_finite=True)
        except (ValueError, scipy.linalg.LinAlgError):
            return None
        sol = scipy.linalg.lu_solve(factor, rhs)
        for _ in range(POLISH_REFINE_ITER):
            sol = sol + scipy.linalg.lu_solve(factor, rhs - K.dot(sol))
        if not np.all(np.isfinite(sol)):
            return None

        x_pol = sol[:n]
        y_pol = np.zeros(self.m)
        y_pol[active] = sol[n:]
        z_pol = self.C_s.dot(x_pol)

        tol = self.settings.tol
        y_unscaled = self.E * y_pol / self.c
        if np.any(y_unscaled[lower] > tol) or np.any(y_unscaled[upper] < -tol):
            return None
        violation = np.maximum(self.l_s - z_pol, z_pol - self.u_s)
        prim = _inf_norm(np.maximum(violation, 0.0) / self.E)
        dual = _inf_norm((self.P_s.dot(x_pol) + self.q_s
                          + self.C_s.T.dot(y_pol)) / self.D) / self.c
        if prim > tol or dual > tol:
            return None
        return x_pol, np.clip(z_pol, self.l_s, self.u_s), y_pol

    def solve(self, x0=None):
        settings = self.settings
        if x0 is None:
            x = np.zeros(self.n)
        else:
            x = np.asarray(x0, float) / self.D
        z = np.clip(self.C_s.dot(x), self.l_s, self.u_s)
        y = np.zeros(self.m)

        status = MAX_ITERATIONS
        polished = False
        iteration = 0
        for iteration in range(1, settings.max_iter + 1):
            y_prev = y
            x, z, y = self._step(x, z, y)

            if iteration % settings.check_interval == 0 \
                    or iteration == settings.max_iter:
                prim, dual = self._residuals(x, z, y)
                if prim <= settings.tol and dual <= settings.tol:
                    status = OPTIMAL
                    break
                if self._primal_infeasible(y - y_prev):
                    status = INFEASIBLE
                    break
                if settings.polish and iteration % settings.polish_interval == 0:
                    result = self._polish(x, z, y)
                    if result is not None:
                        x, z, y = result
                        status = OPTIMAL
                        polished = True
                        break

            if iteration % settings.adaptive_rho_interval == 0:
                self._adapt_rho(x, z, y)

        if status == OPTIMAL and settings.polish and not polished:
            result = self._polish(x, z, y)
            if result is not None:
                x, z, y = result
                polished = True

        prim, dual = self._residuals(x, z, y)
        if polished:
            violation = np.maximum(self.l_s - self.C_s.dot(x),
                                   self.C_s.dot(x) - self.u_s)
            prim = _inf_norm(np.maximum(violation, 0.0) / self.E)

        x_unscaled = self.D * x
        y_unscaled = self.E * y / self.c
        return QpSolution(x=x_unscaled, y=y_unscaled, status=status,
                          primal_residual=prim, dual_residual=dual,
                          objective=float(self.problem.objective(x_unscaled)),
                          iterations=iteration, polished=polished)


def qp_solve(problem, settings=None, x0=None):
    """Solve a QpProblem by ADMM with over-relaxation, Ruiz scaling,
    per-row penalties and active-set polishing. x0 is an optional initial
    point. Deterministic: identical inputs give bitwise identical results.
    """
    if settings is None:
        settings = QpSettings()
    return _AdmmWorkspace(problem, settings).solve(x0)


def kkt_solve(problem):
    """Dense direct solve of an equality-constrained QP through its KKT
    system. Returns (x, y) with y the multipliers of Ax = b in the sign
    convention of qp_solve.
    """
    if problem.G.shape[0]:
        raise ValueError("kkt_solve handles equality constraints only")
    n, k = problem.n, problem.A.shape[0]
    K = np.zeros((n + k, n + k))
    K[:n, :n] = problem.P
    K[:n, n:] = problem.A.T
    K[n:, :n] = problem.A
    sol = scipy.linalg.solve(K, np.concatenate([-problem.q, problem.b]))
    return sol[:n], sol[n:]


def complementarity_violation(problem, x, y):
    """Largest |y_j * slack_j| over the inequality rows, with the slack
    measured on the side that the sign of y_j says is active.
    """
    y_in = y[problem.A.shape[0]:]
    Gx = problem.G.dot(x)
    lower = np.where(np.isfinite(problem.l), Gx - problem.l, 0.0)
    upper = np.where(np.isfinite(problem.u), problem.u - Gx, 0.0)
    slack = np.where(y_in < 0, lower, upper)
    return _inf_norm(y_in * slack)


# Testing
# ============================================================


def test_bisect_linear_root():
    root = bisect(lambda x: x - 3.0, 0.0, 10.0, tol=1e-12)
    utils.assert_almost_equal(root, 3.0, 1e-11)


def test_bisect_expands_bracket_downward():
    # Decreasing function with both ends negative: root lies below.
    root = bisect(lambda x: -x - 50.0, 0.0, 1.0)
    utils.assert_almost_equal(root, -50.0, 1e-8)


def test_bisect_numpy_valued_function():
    # Residuals built from arrays come back as numpy scalars.
    slopes = np.array([1.0, 2.0])
    root = bisect(lambda x: np.sum(slopes * x) - 6.0, 0.0, 10.0, tol=1e-12)
    utils.assert_almost_equal(root, 2.0, 1e-11)

    root = bisect(lambda x: np.float64(-x) - 50.0, 0.0, 1.0)
    utils.assert_almost_equal(root, -50.0, 1e-8)


def test_waterfill_no_clamping():
    nu, x = waterfill([1.0, 1.0], [1.0, 1.0], [1.0, 1.0], 2.0,
                      [-10, -10], [10, 10])
    utils.assert_almost_equal(nu, 0.0)
    utils.assert_list_almost_equal(x, [1.0, 1.0])


def test_min_square_with_active_bound():
    problem = make_qp([[2.0]], [0.0], G=[[1.0]], l=[1.0], u=[np.inf])
    sol = qp_solve(problem)
    assert sol.status == OPTIMAL
    utils.assert_almost_equal(sol.x[0], 1.0, 1e-6)
    assert sol.y[0] < 0


def test_unconstrained_qp():
    problem = make_qp([[2.0, 0.0], [0.0, 4.0]], [-2.0, -4.0])
    sol = qp_solve(problem)
    assert sol.status == OPTIMAL
    utils.assert_list_almost_equal(sol.x, [1.0, 1.0], 1e-6)


def test_infeasible_box_after_equality():
    # x0 + x1 = 3 but both are capped at 1.
    problem = make_qp(np.eye(2), [0.0, 0.0], A=[[1.0, 1.0]], b=[3.0],
                      G=np.eye(2), l=[0.0, 0.0], u=[1.0, 1.0])
    sol = qp_solve(problem)
    assert sol.status == INFEASIBLE
