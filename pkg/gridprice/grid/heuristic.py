"""Descent heuristic for the utility's pricing problem.

Starting from the restricted solution, the utility nudges each billing
reference against its site's load ratio: sites above the average ratio get
a lower reference (less consumption), the others a higher one. Only the
data centers' observed responses are needed. A step is kept when the
response is price feasible and the load index drops, otherwise it is undone
and the step size halved.
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
import gridprice.grid.benchmarks as benchmarks


logger = logging.getLogger(__name__)


# PARAMETERS
FEASIBILITY_TOL = 1e-8
# Directions are +-theta/beta divided by max(theta/beta), so a step of
# eta moves no reference by more than eta; STEP_FRACTION sets the first
# step as a share of the widest box.
STEP_FRACTION = 0.1
EPS_FRACTION = 1e-8
RESTRICTED_SLACK = 1e-9


_DescentSettingsBase = collections.namedtuple(
    "DescentSettings", "eps eta0 max_iter max_halvings")


class DescentSettings(_DescentSettingsBase):
    """eps and eta0 default to scale-free values derived from the slot."""
    __slots__ = ()

    def __new__(cls, eps=None, eta0=None, max_iter=10000, max_halvings=40):
        return super(DescentSettings, cls).__new__(cls, eps, eta0, max_iter,
                                                   max_halvings)


DescentState = collections.namedtuple(
    "DescentState", "iteration s e r_avg eta eli accepted")

DescentResult = collections.namedtuple("DescentResult",
                                       "s e eli trace diagnostics")


def descent_direction(slot, e):
    """+-theta/beta per site, normalised to unit max norm, negative where
    the load ratio exceeds the average.
    """
    ratio = model.load_ratio(slot, e)
    weight = slot.theta / slot.sensitivity
    g = np.where(ratio > ratio.mean(), -weight, weight)
    return g / np.max(weight), float(ratio.mean())


def _price_feasible(slot, s, e):
    scale = max(1.0, float(np.max(np.abs(slot.base_price))))
    price = model.implied_price(slot, s, e)
    return model.price_violation(slot, price) <= FEASIBILITY_TOL * scale


def descent_solve(slot, settings=None, restricted=None):
    """Returns DescentResult. The restricted solution is computed when not
    given; when it is infeasible the start is s = e_hi, flagged in the
    diagnostics. From a price-infeasible start, steps whose load index
    exceeds the restricted one are rejected.
    """
    if settings is None:
        settings = DescentSettings()
    model.check_slot_feasible(slot)

    fallback = False
    if restricted is None:
        try:
            restricted = benchmarks.solve_restricted(slot)
        except (benchmarks.RestrictedInfeasibleError,
                numerics.SolverError) as error:
            logger.warning("slot %s: descent starts from s = e_hi (%s)",
                           slot.slot, error)
            fallback = True
    if fallback:
        s = np.array(slot.e_hi, dtype=float)
    else:
        s = np.array(restricted.s, dtype=float)

    e = stage2.best_response(slot, s).e
    eli = model.eli(slot, e)
    feasible = _price_feasible(slot, s, e)
    ceiling = np.inf if fallback else restricted.eli + RESTRICTED_SLACK

    eps = settings.eps
    if eps is None:
        eps = EPS_FRACTION * (1.0 + eli)
    eta = settings.eta0
    if eta is None:
        eta = STEP_FRACTION * float(np.max(slot.e_hi - slot.e_lo))

    _, r_avg = descent_direction(slot, e)
    trace = [DescentState(0, utils.freeze(s), e, r_avg, eta, eli, True)]
    halvings = 0
    converged = False

    for k in range(1, settings.max_iter + 1):
        g, r_avg = descent_direction(slot, e)
        s_new = s + eta * g
        e_new = stage2.best_response(slot, s_new).e
        eli_new = model.eli(slot, e_new)
        feasible_new = _price_feasible(slot, s_new, e_new)

        # From an infeasible start a feasible point is progress if it keeps
        # within the restricted bound.
        accepted = feasible_new and (eli_new < eli if feasible
                                     else eli_new <= ceiling)
        trace.append(DescentState(k, utils.freeze(s_new), e_new, r_avg, eta,
                                  eli_new, accepted))
        if accepted:
            logger.debug("slot %s step %d accepted, eli %.12g", slot.slot, k,
                         eli_new)
            change = abs(eli - eli_new)
            s, e, eli, feasible = s_new, e_new, eli_new, True
            halvings = 0
            if change <= eps:
                converged = True
                break
        else:
            eta /= 2.0
            halvings += 1
            if halvings >= settings.max_halvings:
                converged = True
                break

    if not converged:
        logger.warning("slot %s: descent stopped at the iteration cap %d",
                       slot.slot, settings.max_iter)

    diagnostics = dict(iterations=len(trace) - 1, fallback_start=fallback,
                       iteration_cap=not converged, price_feasible=feasible,
                       accepted=sum(1 for state in trace[1:] if state.accepted))
    return DescentResult(s=utils.freeze(s), e=e, eli=eli, trace=trace,
                         diagnostics=diagnostics)


def accepted_elis(trace):
    return [state.eli for state in trace if state.accepted]


# Testing
# ============================================================


def test_direction_signs():
    import gridprice.core.example_problems as ex
    slot = ex.s2_slot(background_load=[0.5, 0.0])
    g, r_avg = descent_direction(slot, [1.0, 1.0])
    utils.assert_almost_equal(r_avg, 1.25)
    assert g[0] < 0 < g[1]
    utils.assert_almost_equal(np.max(np.abs(g)), 1.0)


def test_equalised_start_is_a_fixed_point():
    import gridprice.core.example_problems as ex
    slot = ex.s2_slot()
    result = descent_solve(slot)
    utils.assert_list_almost_equal(result.e, [1.0, 1.0], 1e-5)
    assert result.eli <= result.trace[0].eli
    assert not result.diagnostics["iteration_cap"]


def test_direction_keeps_theta_over_beta_proportions():
    import gridprice.core.example_problems as ex
    slot = ex.s2_slot(theta=[2.0, 1.0], E_total=3.0, sensitivity=[1.0, 4.0],
                      background_load=[0.5, 0.0])
    g, _ = descent_direction(slot, [1.0, 1.0])
    # theta/beta = (2, 0.25), scaled by its maximum.
    utils.assert_list_almost_equal(g, [-1.0, 0.125])
