"""Reference solutions bracketing the exact pricing problem.

* integrated: the utility dispatches the energy itself, a lower bound on
  the best attainable electric load index.
* restricted: the data centers' box constraints are lifted into the
  utility's problem, so the response is the unclamped closed form. Any
  restricted solution is feasible for the exact problem, hence an upper
  bound.
* base price: data centers pay the base price regardless of consumption
  and buy from the cheapest locations first. The comparison baseline.
"""

from __future__ import division
from __future__ import absolute_import

import collections
import logging

import numpy as np

import gridprice.core.utils as utils
import gridprice.core.numerics as numerics
import gridprice.grid.model as model
import gridprice.grid.stage2 as stage2


logger = logging.getLogger(__name__)


IntegratedResult = collections.namedtuple("IntegratedResult", "e eli")

DispatchSpaceResult = collections.namedtuple("DispatchSpaceResult",
                                             "workload servers e eli")

RestrictedResult = collections.namedtuple(
    "RestrictedResult", "s e sigma eli iterations primal_residual")

BasePriceResult = collections.namedtuple("BasePriceResult", "e eli cost")


class RestrictedInfeasibleError(RuntimeError):
    """The restricted problem has no feasible point. The exact problem may
    still be feasible.
    """

    def __init__(self, slot, status):
        self.slot = slot
        self.status = status

    def __str__(self):
        return "restricted problem of slot %s has no feasible point (%s)" \
            % (self.slot, self.status)


def _eli_qp_terms(slot):
    """Quadratic and linear ELI coefficients in e, and the constant."""
    per_slot = slot.slot_capacity
    B = slot.background_load
    return 2.0 / per_slot, 2.0 * B / per_slot, float(np.sum(B**2 / per_slot))


# Integrated (lower bound)
# ============================================================


def solve_integrated(slot):
    """Minimise the load index over the box and the energy equality.

    Stationarity gives e_i = clip(-B_i - nu theta_i C_i h / 2), and nu is
    found by water-filling.
    """
    model.check_slot_feasible(slot)
    _, e = numerics.waterfill(-slot.background_load,
                              slot.theta * slot.slot_capacity / 2.0,
                              slot.theta, slot.E_total, slot.e_lo, slot.e_hi)
    return IntegratedResult(e=utils.freeze(e), eli=model.eli(slot, e))


def integrated_qp(slot):
    P_diag, q, _ = _eli_qp_terms(slot)
    return numerics.make_qp(np.diag(P_diag), q, A=slot.theta[None, :],
                            b=[slot.E_total], G=np.eye(slot.N),
                            l=slot.e_lo, u=slot.e_hi)


def solve_integrated_qp(slot, settings=None):
    """The same problem through the generic QP solver."""
    model.check_slot_feasible(slot)
    sol = numerics.qp_solve(integrated_qp(slot), settings)
    if sol.status != numerics.OPTIMAL:
        raise numerics.SolverError("integrated problem", sol.status)
    return IntegratedResult(e=utils.freeze(sol.x), eli=model.eli(slot, sol.x))


def solve_integrated_dispatch_space(scenario, t, settings=None):
    """Integrated problem over request rates and server counts directly,
    without the energy-space reduction.

    Variables are scaled to fractions of each site's service capacity,
    workload_i = mu_i M_i u_i and servers_i = M_i v_i.
    """
    h = scenario.slot_length
    N = scenario.N
    specs = scenario.data_centers
    mu = np.array([dc.service_rate for dc in specs], float)
    M = np.array([dc.servers for dc in specs], float)
    static = np.array([dc.static_power for dc in specs], float)
    dynamic = np.array([dc.dynamic_power for dc in specs], float)
    overhead = np.array([dc.base_overhead for dc in specs], float)
    k = 1.0 / (scenario.delay_bound - scenario.transmission_delay[t])
    C = scenario.grid.capacity
    B = scenario.grid.background_load[t]
    per_slot = C * h

    # e = J [u; v] + overhead
    J = np.hstack([np.diag(dynamic * mu * M), np.diag(static * M)]) \
        * h * model.WATT_TO_MEGAWATT
    offset = overhead + B
    W = np.diag(1.0 / per_slot)
    P = 2.0 * J.T.dot(W).dot(J)
    q = 2.0 * J.T.dot(W).dot(offset)

    workload = scenario.workload[t]
    A = np.concatenate([mu * M, np.zeros(N)])[None, :] / max(1.0, workload)
    b = [workload / max(1.0, workload)]

    eye, zero = np.eye(N), np.zeros((N, N))
    G = np.vstack([
        np.hstack([eye, zero]),                          # u >= 0
        np.hstack([zero, eye]),                          # 0 <= v <= 1
        np.hstack([-np.diag(mu * M), np.diag(mu * M)]) / k[:, None],  # QoS
        J / per_slot[:, None],                           # supply
    ])
    l = np.concatenate([np.zeros(N), np.zeros(N), np.ones(N),
                        np.full(N, -np.inf)])
    u = np.concatenate([np.full(N, np.inf), np.ones(N), np.full(N, np.inf),
                        (per_slot - B - overhead) / per_slot])
    sol = numerics.qp_solve(numerics.make_qp(P, q, A, b, G, l, u), settings)
    if sol.status != numerics.OPTIMAL:
        raise numerics.SolverError("dispatch-space integrated problem",
                                   sol.status)

    lam = mu * M * sol.x[:N]
    x = M * sol.x[N:]
    e = J.dot(sol.x) + overhead
    eli = float(np.sum((e + B) ** 2 / per_slot))
    return DispatchSpaceResult(workload=utils.freeze(lam),
                               servers=utils.freeze(x), e=utils.freeze(e),
                               eli=eli)


# Restricted (upper bound)
# ============================================================


def restricted_qp(slot):
    """QP in (s, e, sigma_hat) with sigma_hat = theta_max sigma."""
    N = slot.N
    alpha, beta, theta = slot.base_price, slot.sensitivity, slot.theta
    theta_max = float(np.max(theta))
    theta_hat = theta / theta_max
    n = 2 * N + 1
    S, E, SIG = slice(0, N), slice(N, 2 * N), 2 * N

    P_diag, q_e, _ = _eli_qp_terms(slot)
    P = np.zeros((n, n))
    P[E, E] = np.diag(P_diag)
    q = np.zeros(n)
    q[E] = q_e

    # Unclamped response 2 beta e - beta s + theta sigma = -alpha, and the
    # energy equality.
    A = np.zeros((N + 1, n))
    A[:N, S] = -np.diag(beta)
    A[:N, E] = np.diag(2.0 * beta)
    A[:N, SIG] = theta_hat
    A[N, E] = theta_hat
    b = np.concatenate([-alpha, [slot.E_total / theta_max]])

    # Price band, average cap, box.
    G = np.zeros((2 * N + 1, n))
    G[:N, S] = -np.diag(beta)
    G[:N, E] = np.diag(beta)
    G[N, S] = -beta / N
    G[N, E] = beta / N
    G[N + 1:, E] = np.eye(N)
    l = np.concatenate([slot.price_floor - alpha, [-np.inf], slot.e_lo])
    u = np.concatenate([slot.price_ceiling - alpha,
                        [slot.avg_cap - alpha.mean()], slot.e_hi])
    return numerics.make_qp(P, q, A, b, G, l, u)


def solve_restricted(slot, settings=None):
    """Best load index over references whose unclamped response already
    respects the box and whose prices respect the band and the cap.

    The reported energy is the data centers' actual response to the
    returned references.
    """
    model.check_slot_feasible(slot)
    sol = numerics.qp_solve(restricted_qp(slot), settings)
    if sol.status == numerics.INFEASIBLE:
        raise RestrictedInfeasibleError(slot.slot, sol.status)
    if sol.status != numerics.OPTIMAL:
        raise numerics.SolverError("restricted problem", sol.status)

    N = slot.N
    s = sol.x[:N]
    br = stage2.best_response(slot, s)
    return RestrictedResult(s=utils.freeze(s), e=br.e, sigma=br.sigma,
                            eli=model.eli(slot, br.e),
                            iterations=sol.iterations,
                            primal_residual=sol.primal_residual)


# Base price baseline
# ============================================================


def solve_base_price(slot):
    """Cheapest energy at fixed base prices: a continuous knapsack filled
    in order of alpha_i / theta_i, ties by index.
    """
    model.check_slot_feasible(slot)
    order = np.argsort(slot.base_price / slot.theta, kind="stable")
    e = np.array(slot.e_lo, dtype=float)
    remaining = slot.E_total - slot.theta.dot(e)
    for i in order:
        if remaining <= 0:
            break
        add = min(slot.e_hi[i] - slot.e_lo[i], remaining / slot.theta[i])
        e[i] += add
        remaining -= slot.theta[i] * add
    return BasePriceResult(e=utils.freeze(e), eli=model.eli(slot, e),
                           cost=float(slot.base_price.dot(e)))


# Testing
# ============================================================


def _s2(**overrides):
    import gridprice.core.example_problems as ex
    return ex.s2_slot(**overrides)


def test_integrated_symmetric():
    result = solve_integrated(_s2())
    utils.assert_list_almost_equal(result.e, [1.0, 1.0])


def test_integrated_equalises_load():
    result = solve_integrated(_s2(background_load=[0.5, 0.0]))
    utils.assert_list_almost_equal(result.e, [0.75, 1.25])


def test_integrated_clamped():
    result = solve_integrated(_s2(background_load=[0.5, 0.0],
                                  e_hi=[2.0, 1.0]))
    utils.assert_list_almost_equal(result.e, [1.0, 1.0])


def test_base_price_cheapest_first():
    result = solve_base_price(_s2(base_price=[1.0, 2.0]))
    utils.assert_list_almost_equal(result.e, [2.0, 0.0])
    utils.assert_almost_equal(result.cost, 2.0)


def test_base_price_tie_by_index():
    result = solve_base_price(_s2(E_total=3.0))
    utils.assert_list_almost_equal(result.e, [2.0, 1.0])


def test_base_price_saturated():
    result = solve_base_price(_s2(E_total=4.0))
    utils.assert_list_almost_equal(result.e, [2.0, 2.0])
