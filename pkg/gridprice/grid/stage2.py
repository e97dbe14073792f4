"""The cloud provider's best response to announced billing references.

Given references s the provider solves

    minimise    sum_i (alpha_i + beta_i (e_i - s_i)) e_i
    subject to  sum_i theta_i e_i = E,  e_lo <= e <= e_hi

which is strictly convex, so the response is unique:
e_i = clip(s_i/2 - (alpha_i + theta_i sigma)/(2 beta_i), e_lo_i, e_hi_i)
with sigma the multiplier of the equality.
"""

from __future__ import division
from __future__ import absolute_import

import collections
import logging

import numpy as np

import gridprice.core.utils as utils
import gridprice.core.numerics as numerics
import gridprice.grid.model as model


logger = logging.getLogger(__name__)


BestResponse = collections.namedtuple("BestResponse",
                                      "e sigma omega_lo omega_hi")


def _unclamped_terms(slot, s):
    """e_i = c_i - w_i sigma before clamping."""
    beta = slot.sensitivity
    c = np.asarray(s, float) / 2.0 - slot.base_price / (2.0 * beta)
    w = slot.theta / (2.0 * beta)
    return c, w


def _stationarity(slot, s, e, sigma):
    return (slot.base_price + 2.0 * slot.sensitivity * e
            - slot.sensitivity * np.asarray(s, float) + slot.theta * sigma)


def _backfill_sigma(slot, c, w, e, nu):
    """Equality multiplier consistent with the clamping pattern of e. With
    at least one interior component it is pinned, otherwise any value in an
    interval works and the midpoint is used.
    """
    degenerate = slot.e_lo == slot.e_hi
    at_lo = (e <= slot.e_lo) & ~degenerate
    at_hi = (e >= slot.e_hi) & ~degenerate
    free = ~(at_lo | at_hi | degenerate)
    if np.any(free):
        return float(np.mean((c[free] - e[free]) / w[free]))

    lower_end = np.max((c[at_lo] - slot.e_lo[at_lo]) / w[at_lo], initial=-np.inf)
    upper_end = np.min((c[at_hi] - slot.e_hi[at_hi]) / w[at_hi], initial=np.inf)
    if np.isfinite(lower_end) and np.isfinite(upper_end):
        return 0.5 * (lower_end + upper_end)
    if np.isfinite(lower_end):
        return float(lower_end)
    if np.isfinite(upper_end):
        return float(upper_end)
    return nu


def best_response(slot, s):
    """Unique minimiser of the provider's cost for references s, with its
    multipliers.
    """
    model.check_slot_feasible(slot)
    c, w = _unclamped_terms(slot, s)
    nu, e = numerics.waterfill(c, w, slot.theta, slot.E_total,
                               slot.e_lo, slot.e_hi)
    sigma = _backfill_sigma(slot, c, w, e, nu)

    r = _stationarity(slot, s, e, sigma)
    omega_lo = np.where(e <= slot.e_lo, np.maximum(r, 0.0), 0.0)
    omega_hi = np.where(e >= slot.e_hi, np.maximum(-r, 0.0), 0.0)
    return BestResponse(e=utils.freeze(e), sigma=float(sigma),
                        omega_lo=utils.freeze(omega_lo),
                        omega_hi=utils.freeze(omega_hi))


def rs2_closed_form(slot, s):
    """Response with the box dropped: the equality alone fixes sigma."""
    c, w = _unclamped_terms(slot, s)
    sigma = (slot.theta.dot(c) - slot.E_total) / slot.theta.dot(w)
    e = c - w * sigma
    zeros = utils.freeze(np.zeros(slot.N))
    return BestResponse(e=utils.freeze(e), sigma=float(sigma),
                        omega_lo=zeros, omega_hi=zeros)


def kkt_residual(slot, s, br):
    """Largest violation of stationarity, primal and dual feasibility and
    complementary slackness of br as a response to s.
    """
    e = np.asarray(br.e)
    r = _stationarity(slot, s, e, br.sigma) - br.omega_lo + br.omega_hi
    parts = [
        np.abs(r),
        [abs(slot.theta.dot(e) - slot.E_total)],
        np.maximum(slot.e_lo - e, 0.0),
        np.maximum(e - slot.e_hi, 0.0),
        np.maximum(-br.omega_lo, 0.0),
        np.maximum(-br.omega_hi, 0.0),
        np.abs(br.omega_lo * (e - slot.e_lo)),
        np.abs(br.omega_hi * (slot.e_hi - e)),
    ]
    return float(max(np.max(p, initial=0.0) for p in parts))


def provider_qp(slot, s):
    """The provider's problem as a generic QP; its objective is the total
    cost itself.
    """
    beta = slot.sensitivity
    return numerics.make_qp(P=np.diag(2.0 * beta),
                            q=slot.base_price - beta * np.asarray(s, float),
                            A=slot.theta[None, :], b=[slot.E_total],
                            G=np.eye(slot.N), l=slot.e_lo, u=slot.e_hi)


def best_response_by_qp(slot, s, settings=None):
    """Same response through the generic QP solver (independent check)."""
    sol = numerics.qp_solve(provider_qp(slot, s), settings)
    if sol.status != numerics.OPTIMAL:
        raise numerics.SolverError("provider response", sol.status)
    box = sol.y[1:]
    return BestResponse(e=utils.freeze(sol.x), sigma=float(sol.y[0]),
                        omega_lo=utils.freeze(np.maximum(-box, 0.0)),
                        omega_hi=utils.freeze(np.maximum(box, 0.0)))


def lowest_price_references(slot, s):
    """References with the same response as s but the lowest prices the
    floors allow.

    Moving every s_i by t theta_i / beta_i moves sigma by t and leaves the
    response unchanged while each price drops by theta_i t.
    """
    s = np.asarray(s, float)
    e = best_response(slot, s).e
    price = model.implied_price(slot, s, e)
    t = float(np.min((price - slot.price_floor) / slot.theta))
    if not t > 0:
        return utils.freeze(s)
    return utils.freeze(s + slot.theta * t / slot.sensitivity)


# Testing
# ============================================================


def _s2(**overrides):
    # Local import, example_problems depends on this package.
    import gridprice.core.example_problems as ex
    return ex.s2_slot(**overrides)


def test_symmetric_response():
    br = best_response(_s2(), [1.0, 1.0])
    utils.assert_list_almost_equal(br.e, [1.0, 1.0])
    utils.assert_almost_equal(br.sigma, -2.0)
    utils.assert_list_almost_zero(br.omega_lo)
    utils.assert_list_almost_zero(br.omega_hi)


def test_asymmetric_references():
    slot = _s2()
    s = [2.0, 0.0]
    br = best_response(slot, s)
    utils.assert_list_almost_equal(br.e, [1.5, 0.5])
    utils.assert_almost_equal(br.sigma, -2.0)
    utils.assert_list_almost_equal(model.implied_price(slot, s, br.e),
                                   [0.5, 1.5])


def test_closed_form_matches_unclamped_response():
    slot = _s2()
    br = rs2_closed_form(slot, [1.0, 1.0])
    utils.assert_almost_equal(br.sigma, -2.0)
    utils.assert_list_almost_equal(br.e, [1.0, 1.0])


def test_closed_form_single_site():
    import gridprice.core.example_problems as ex
    slot = ex.single_site_slot()
    for s in [-3.0, 0.0, 7.5]:
        br = rs2_closed_form(slot, [s])
        utils.assert_almost_equal(br.e[0], slot.E_total / slot.theta[0], 1e-10)


def test_best_response_residual():
    slot = _s2()
    br = best_response(slot, [2.0, 0.0])
    assert kkt_residual(slot, [2.0, 0.0], br) <= 1e-7


def test_clamped_site_shifts_energy():
    slot = _s2(e_hi=[0.8, 2.0])
    br = best_response(slot, [1.0, 1.0])
    utils.assert_list_almost_equal(br.e, [0.8, 1.2], 1e-8)
    assert br.omega_hi[0] > 0
    assert kkt_residual(slot, [1.0, 1.0], br) <= 1e-7
