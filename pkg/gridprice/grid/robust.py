"""Pricing against the worst case of a bounded background-load forecast
error.

For fixed references the load index is convex and increasing in the
background load (every e + B + delta is nonnegative), so over a box of
errors the worst case is the upper corner. The min-max problem therefore
reduces to the nominal problem with the background load shifted to its
upper bound.
"""

from __future__ import division
from __future__ import absolute_import

import collections
import logging

import numpy as np

import gridprice.core.utils as utils
import gridprice.grid.model as model
import gridprice.grid.stage2 as stage2
import gridprice.grid.bilevel as bilevel
import gridprice.grid.heuristic as heuristic


logger = logging.getLogger(__name__)


EXACT = "exact"
HEURISTIC = "heuristic"


class InfeasibleAfterShiftError(model.InfeasibleSlotError):
    pass


UncertaintySet = collections.namedtuple("UncertaintySet",
                                        "delta_min delta_max")


def make_uncertainty_set(slot, delta_min, delta_max):
    """Validated error box for one slot."""
    delta_min = utils.freeze(np.broadcast_to(delta_min, (slot.N,)))
    delta_max = utils.freeze(np.broadcast_to(delta_max, (slot.N,)))
    problems = []
    for i in np.flatnonzero(~(delta_min <= delta_max)):
        problems.append("delta_min[%d] = %r above delta_max = %r"
                        % (i, delta_min[i], delta_max[i]))
    over = slot.background_load + delta_max > slot.slot_capacity
    for i in np.flatnonzero(over):
        problems.append("background_load[%d] + delta_max = %r exceeds the "
                        "capacity per slot %r"
                        % (i, slot.background_load[i] + delta_max[i],
                           slot.slot_capacity[i]))
    under = slot.background_load + delta_min < 0
    for i in np.flatnonzero(under):
        problems.append("background_load[%d] + delta_min = %r is negative"
                        % (i, slot.background_load[i] + delta_min[i]))
    if problems:
        raise model.ScenarioValidationError(
            ["slot %s: %s" % (slot.slot, p) for p in problems])
    return UncertaintySet(delta_min=delta_min, delta_max=delta_max)


def relative_uncertainty_set(slot, fraction):
    """Errors of at most fraction times the forecast background load."""
    spread = fraction * slot.background_load
    return make_uncertainty_set(slot, -spread, spread)


def worst_case_error(uncertainty):
    return utils.freeze(uncertainty.delta_max)


def shifted_slot(slot, delta, freeze_box=False):
    """Slot with background load B + delta. The supply cap of the box moves
    with it unless freeze_box is set.
    """
    delta = np.asarray(delta, float)
    if not np.any(delta):
        return slot
    B = slot.background_load + delta
    e_hi = slot.e_hi
    if not freeze_box:
        e_hi = np.minimum(slot.server_cap, slot.slot_capacity - B)
    shifted = slot._replace(background_load=utils.freeze(B),
                            e_hi=utils.freeze(e_hi))
    try:
        model.check_slot_feasible(shifted)
    except model.InfeasibleSlotError as error:
        raise InfeasibleAfterShiftError(slot.slot, error.reason)
    return shifted


def solve_wcp(slot, uncertainty, method=EXACT, freeze_box=False,
              bnb_settings=None, descent_settings=None):
    """SolveReport (method robust) of the references minimising the worst
    case load index. Its eli is the worst-case value. bnb_settings go to
    the exact inner solver, descent_settings to the heuristic one.
    """
    worst = shifted_slot(slot, worst_case_error(uncertainty), freeze_box)
    if method == EXACT:
        result = bilevel.solve_exact(worst, bnb_settings)
    elif method == HEURISTIC:
        result = heuristic.descent_solve(worst, descent_settings)
    else:
        raise ValueError("unknown inner method %r" % method)

    diagnostics = dict(result.diagnostics)
    diagnostics.update(inner_method=method, freeze_box=freeze_box,
                       delta_max=[float(d) for d in uncertainty.delta_max])
    return model.solve_report(
        slot=slot.slot, method=model.ROBUST, eli=result.eli,
        total_cost=model.total_cost(worst, result.s, result.e),
        s=result.s, e=result.e,
        price=model.implied_price(worst, result.s, result.e),
        diagnostics=diagnostics)


# Replay under realised errors
# ============================================================


def sample_errors(rng, uncertainty, count):
    """count uniform draws from the error box, shape (count, N)."""
    lo, hi = uncertainty.delta_min, uncertainty.delta_max
    return lo + (hi - lo) * rng.uniform(size=(count, lo.shape[0]))


def realized_eli(slot, s, delta):
    """Load index when the data centers respond to s under the nominal box
    and the background load turns out to be B + delta. delta may be a
    matrix of draws, one per row.
    """
    e = stage2.best_response(slot, s).e
    load = e + slot.background_load + np.asarray(delta)
    return np.sum(load**2 / slot.slot_capacity, axis=-1)


def replay(slot, uncertainty, robust_s, worst_case_eli, rng, count=1000,
           nominal_s=None):
    """Realised load index of the robust references (and optionally of the
    nominal optimal ones) over sampled errors.
    """
    draws = sample_errors(rng, uncertainty, count)
    robust = realized_eli(slot, robust_s, draws)
    out = dict(worst_case=float(worst_case_eli),
               robust_max=float(np.max(robust)),
               robust_mean=float(np.mean(robust)),
               robust_exceed=int(np.sum(robust > worst_case_eli + 1e-9)))
    if nominal_s is not None:
        nominal = realized_eli(slot, nominal_s, draws)
        out.update(nominal_max=float(np.max(nominal)),
                   nominal_mean=float(np.mean(nominal)),
                   nominal_exceed=int(np.sum(nominal > worst_case_eli + 1e-9)))
    return out


# Testing
# ============================================================


def test_worst_case_is_upper_corner():
    import gridprice.core.example_problems as ex
    slot = ex.s2_slot(background_load=[1.0, 0.5], capacity=[4.0, 4.0])
    uncertainty = make_uncertainty_set(slot, -0.1, 0.1)
    utils.assert_list_almost_equal(worst_case_error(uncertainty), [0.1, 0.1])


def test_degenerate_set():
    import gridprice.core.example_problems as ex
    slot = ex.s2_slot()
    uncertainty = make_uncertainty_set(slot, 0.0, 0.0)
    assert not np.any(worst_case_error(uncertainty))
    assert shifted_slot(slot, worst_case_error(uncertainty)) is slot
