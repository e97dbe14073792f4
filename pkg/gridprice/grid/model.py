"""Domain types, the server energy model and the reduction of the cloud
provider's dispatch problem to energy space.

Units throughout: energies in MWh per slot, substation capacities in MW,
server powers in W, prices in currency per MWh, workloads in requests per
second, delays in seconds.
"""

from __future__ import division
from __future__ import absolute_import

import collections
import logging

import numpy as np

import gridprice.core.utils as utils


logger = logging.getLogger(__name__)


# PARAMETERS
WATT_TO_MEGAWATT = 1e-6
WORKLOAD_REL_TOL = 1e-8
BOX_ABS_TOL = 1e-9
PRICE_TOL = 1e-6

INTEGRATED = "integrated"
RESTRICTED = "restricted"
EXACT = "exact"
HEURISTIC = "heuristic"
ROBUST = "robust"
BASE_PRICE = "base-price"
METHODS = (INTEGRATED, RESTRICTED, EXACT, HEURISTIC, ROBUST, BASE_PRICE)


class ScenarioValidationError(ValueError):
    """Every violated scenario invariant, each with its coordinates."""

    def __init__(self, violations):
        self.violations = list(violations)

    def __str__(self):
        return "%d scenario violation(s):\n  %s" % (
            len(self.violations), "\n  ".join(self.violations))


class InfeasibleSlotError(ValueError):

    def __init__(self, slot, reason):
        self.slot = slot
        self.reason = reason

    def __str__(self):
        return "slot %s is infeasible: %s" % (self.slot, self.reason)


class PreconditionError(ValueError):

    def __init__(self, index, reason):
        self.index = index
        self.reason = reason

    def __str__(self):
        if self.index is None:
            return self.reason
        return "component %d: %s" % (self.index, self.reason)


# Domain types
# ============================================================


class DataCenterSpec(collections.namedtuple(
        "DataCenterSpec",
        "id servers service_rate p_idle p_peak pue base_overhead")):
    """Static parameters of one data center. base_overhead is in MWh per
    slot, powers are per server in W.
    """
    __slots__ = ()

    @property
    def static_power(self):
        """Facility power per active server at zero load, W."""
        return self.p_idle + (self.pue - 1.0) * self.p_peak

    @property
    def dynamic_power(self):
        """Extra power per unit of request rate, W s."""
        return (self.p_peak - self.p_idle) / self.service_rate

    def violations(self):
        where = "data_centers[%s]" % self.id
        out = []
        if not self.servers > 0:
            out.append("%s: servers = %r must be positive" % (where, self.servers))
        if not self.service_rate > 0:
            out.append("%s: service_rate = %r must be positive"
                       % (where, self.service_rate))
        if not self.p_idle > 0:
            out.append("%s: p_idle = %r must be positive" % (where, self.p_idle))
        if not self.p_peak > self.p_idle:
            out.append("%s: p_peak = %r must exceed p_idle = %r"
                       % (where, self.p_peak, self.p_idle))
        if not self.pue > 1:
            out.append("%s: pue = %r must exceed 1" % (where, self.pue))
        if not self.base_overhead >= 0:
            out.append("%s: base_overhead = %r must be nonnegative"
                       % (where, self.base_overhead))
        return out


GridSpec = collections.namedtuple("GridSpec", "capacity background_load")

PricingPolicy = collections.namedtuple(
    "PricingPolicy",
    "base_price sensitivity price_floor price_ceiling avg_cap")


class Scenario(collections.namedtuple(
        "Scenario",
        "name slot_length data_centers grid pricing workload delay_bound "
        "transmission_delay")):
    """A complete multi-slot instance. Per-slot, per-location arrays are
    indexed [t, i].
    """
    __slots__ = ()

    @property
    def T(self):
        return len(self.workload)

    @property
    def N(self):
        return len(self.data_centers)


class SlotProblem(collections.namedtuple(
        "SlotProblem",
        "slot theta E_total e_lo e_hi base_price sensitivity price_floor "
        "price_ceiling avg_cap background_load capacity slot_length "
        "a b k server_cap")):
    """One slot reduced to energy space: the provider picks e in the box
    [e_lo, e_hi] with theta . e = E_total. a, b, k are the reduction
    coefficients (e = a * workload + b, k the QoS slack) and server_cap the
    box upper end implied by the server count alone.
    """
    __slots__ = ()

    @property
    def N(self):
        return self.theta.shape[0]

    @property
    def slot_capacity(self):
        """Substation capacity as energy per slot."""
        return self.capacity * self.slot_length


PricingDecision = collections.namedtuple("PricingDecision", "s price")

DispatchDecision = collections.namedtuple("DispatchDecision",
                                          "e workload servers")

SolveReport = collections.namedtuple(
    "SolveReport",
    "slot method eli total_cost lower_bound upper_bound s e price "
    "diagnostics error error_kind")


def solve_report(slot, method, eli, total_cost, s=None, e=None, price=None,
                 lower_bound=float("nan"), upper_bound=float("nan"),
                 diagnostics=None):
    return SolveReport(slot=slot, method=method, eli=float(eli),
                       total_cost=float(total_cost),
                       lower_bound=float(lower_bound),
                       upper_bound=float(upper_bound),
                       s=None if s is None else utils.freeze(s),
                       e=None if e is None else utils.freeze(e),
                       price=None if price is None else utils.freeze(price),
                       diagnostics=dict(diagnostics or {}),
                       error=None, error_kind=None)


def failed_report(slot, method, error, kind):
    """A report for a (slot, method) cell whose solver raised."""
    nan = float("nan")
    return SolveReport(slot=slot, method=method, eli=nan, total_cost=nan,
                       lower_bound=nan, upper_bound=nan, s=None, e=None,
                       price=None, diagnostics={},
                       error="%s: %s" % (type(error).__name__, error),
                       error_kind=kind)


# Construction and validation
# ============================================================


def pricing_from_factors(base_price, sensitivity, floor_factor,
                         ceiling_factor, avg_cap_factor):
    """Price band and average cap expressed relative to the base price."""
    base_price = np.asarray(base_price, float)
    return PricingPolicy(
        base_price=utils.freeze(base_price),
        sensitivity=utils.freeze(sensitivity),
        price_floor=utils.freeze(floor_factor * base_price),
        price_ceiling=utils.freeze(ceiling_factor * base_price),
        avg_cap=utils.freeze(avg_cap_factor * base_price.mean(axis=1)))


def _freeze_scenario(scenario):
    grid, pricing = scenario.grid, scenario.pricing
    return scenario._replace(
        data_centers=tuple(scenario.data_centers),
        grid=GridSpec(*[utils.freeze(v) for v in grid]),
        pricing=PricingPolicy(*[utils.freeze(v) for v in pricing]),
        workload=utils.freeze(scenario.workload),
        transmission_delay=utils.freeze(scenario.transmission_delay),
        slot_length=float(scenario.slot_length),
        delay_bound=float(scenario.delay_bound))


def make_scenario(name, slot_length, data_centers, grid, pricing, workload,
                  delay_bound, transmission_delay):
    """Build a frozen Scenario, raising ScenarioValidationError listing
    every violated invariant.
    """
    scenario = _freeze_scenario(Scenario(
        name=name, slot_length=slot_length, data_centers=data_centers,
        grid=grid, pricing=pricing, workload=workload,
        delay_bound=delay_bound, transmission_delay=transmission_delay))
    violations = scenario_violations(scenario)
    if violations:
        raise ScenarioValidationError(violations)
    return scenario


def _shape_violations(scenario):
    T, N = scenario.T, scenario.N
    expected = [
        ("grid.capacity", scenario.grid.capacity, (N,)),
        ("grid.background_load", scenario.grid.background_load, (T, N)),
        ("pricing.base_price", scenario.pricing.base_price, (T, N)),
        ("pricing.sensitivity", scenario.pricing.sensitivity, (N,)),
        ("pricing.price_floor", scenario.pricing.price_floor, (T, N)),
        ("pricing.price_ceiling", scenario.pricing.price_ceiling, (T, N)),
        ("pricing.avg_cap", scenario.pricing.avg_cap, (T,)),
        ("transmission_delay", scenario.transmission_delay, (T, N)),
    ]
    return ["%s has shape %s, expected %s" % (name, value.shape, shape)
            for name, value, shape in expected if value.shape != shape]


def _cell_violations(name, values, bad, message):
    """One message per offending (t, i) or (i,) cell."""
    out = []
    for index in zip(*np.nonzero(bad)):
        if len(index) == 2:
            where = "%s[i=%d, t=%d]" % (name, index[1], index[0])
        else:
            where = "%s[%d]" % (name, index[0])
        out.append("%s = %r %s" % (where, float(values[index]), message))
    return out


def scenario_violations(scenario):
    """List of human readable invariant violations, empty when valid."""
    out = []
    if scenario.N < 1:
        out.append("scenario has no data centers")
    if scenario.T < 1:
        out.append("scenario has no slots")
    if not scenario.slot_length > 0:
        out.append("slot_length = %r must be positive" % scenario.slot_length)
    if not scenario.delay_bound > 0:
        out.append("delay_bound = %r must be positive" % scenario.delay_bound)
    for spec in scenario.data_centers:
        out.extend(spec.violations())

    shape_problems = _shape_violations(scenario)
    if shape_problems or out:
        return out + shape_problems

    C = scenario.grid.capacity
    B = scenario.grid.background_load
    per_slot = C * scenario.slot_length
    p = scenario.pricing
    d = scenario.transmission_delay
    D = scenario.delay_bound

    out += _cell_violations("grid.capacity", C, ~(C > 0), "must be positive")
    out += _cell_violations("grid.background_load", B, ~(B >= 0),
                            "must be nonnegative")
    out += _cell_violations("grid.background_load", B,
                            B > per_slot[None, :],
                            "exceeds the substation capacity per slot")
    out += _cell_violations("pricing.base_price", p.base_price,
                            ~(p.base_price > 0), "must be positive")
    out += _cell_violations("pricing.sensitivity", p.sensitivity,
                            ~(p.sensitivity > 0), "must be positive")
    out += _cell_violations("pricing.price_floor", p.price_floor,
                            ~(p.price_floor <= p.price_ceiling),
                            "is above the price ceiling")
    mean_floor = p.price_floor.mean(axis=1)
    for t in np.flatnonzero(~(p.avg_cap >= mean_floor)):
        out.append("pricing.avg_cap[t=%d] = %r is below the mean price floor "
                   "%r, no price vector can meet it"
                   % (t, float(p.avg_cap[t]), float(mean_floor[t])))
    out += _cell_violations("transmission_delay", d, ~(d >= 0),
                            "must be nonnegative")
    out += _cell_violations("transmission_delay", d, ~(d < D),
                            "is not below the delay bound %r, the QoS "
                            "constraint cannot hold" % D)
    out += _cell_violations("workload", scenario.workload,
                            ~(scenario.workload >= 0), "must be nonnegative")
    return out


def scale_workload(scenario, factor):
    return scenario._replace(
        workload=utils.freeze(np.asarray(scenario.workload) * factor))


def scale_price_band(scenario, factor):
    """Stretch the distances from the base price to the floor and to the
    ceiling by factor. The average cap is unchanged.
    """
    p = scenario.pricing
    alpha = np.asarray(p.base_price)
    return scenario._replace(pricing=p._replace(
        price_floor=utils.freeze(alpha - factor * (alpha - p.price_floor)),
        price_ceiling=utils.freeze(alpha + factor * (p.price_ceiling - alpha))))


def check_slot_feasible(slot):
    """Raise InfeasibleSlotError unless the box and the weighted energy
    equality have a common point.
    """
    bad = np.flatnonzero(slot.e_hi < slot.e_lo)
    if bad.size:
        raise InfeasibleSlotError(
            slot.slot, "power cap below the idle QoS floor at locations %s"
            % bad.tolist())
    tol = WORKLOAD_REL_TOL * max(1.0, abs(slot.E_total))
    lowest = slot.theta.dot(slot.e_lo)
    highest = slot.theta.dot(slot.e_hi)
    if lowest > slot.E_total + tol:
        raise InfeasibleSlotError(
            slot.slot, "idle QoS floor %r already exceeds the target %r"
            % (lowest, slot.E_total))
    if highest < slot.E_total - tol:
        raise InfeasibleSlotError(
            slot.slot, "capacity %r cannot host the target %r"
            % (highest, slot.E_total))


def make_slot(theta, E_total, e_lo, e_hi, base_price, sensitivity,
              price_floor, price_ceiling, avg_cap, background_load, capacity,
              slot_length=1.0, slot=0, a=None, b=None, k=None,
              server_cap=None):
    """SlotProblem straight from energy-space data (hand-made instances).
    Missing reduction coefficients default to a = 1/theta, b = e_lo, k = 0.
    """
    theta = utils.freeze(theta)
    n = theta.shape[0]
    e_lo = utils.freeze(e_lo)
    e_hi = utils.freeze(e_hi)

    def vector(v):
        return utils.freeze(np.broadcast_to(np.asarray(v, float), (n,)))

    problem = SlotProblem(
        slot=slot, theta=theta, E_total=float(E_total), e_lo=e_lo, e_hi=e_hi,
        base_price=vector(base_price), sensitivity=vector(sensitivity),
        price_floor=vector(price_floor), price_ceiling=vector(price_ceiling),
        avg_cap=float(avg_cap), background_load=vector(background_load),
        capacity=vector(capacity), slot_length=float(slot_length),
        a=utils.freeze(1.0 / theta if a is None else a),
        b=utils.freeze(e_lo if b is None else b),
        k=utils.freeze(np.zeros(n) if k is None else k),
        server_cap=utils.freeze(e_hi if server_cap is None else server_cap))
    if np.any(e_lo < 0):
        raise InfeasibleSlotError(slot, "negative lower energy bound")
    check_slot_feasible(problem)
    return problem


# Energy model
# ============================================================


def energy_of(spec, x, lam, slot_length=1.0):
    """Energy in MWh drawn in one slot by data center spec running x
    servers at total request rate lam.
    """
    watts = spec.static_power * x + spec.dynamic_power * lam
    return watts * slot_length * WATT_TO_MEGAWATT + spec.base_overhead


def reduce_to_energy_space(scenario, t):
    """SlotProblem for slot t.

    At any cost-minimising dispatch the QoS constraint is tight, so
    x = (lam + k)/mu with k = 1/(D - d) and the energy is affine in the
    request rate, e = a lam + b. The workload equality sum(lam) = L
    becomes sum(theta e) = E with theta = 1/a and E = L + sum(b/a).
    """
    h = scenario.slot_length
    specs = scenario.data_centers
    mu = np.array([dc.service_rate for dc in specs], float)
    servers = np.array([dc.servers for dc in specs], float)
    static = np.array([dc.static_power for dc in specs], float)
    peak = np.array([dc.pue * dc.p_peak for dc in specs], float)
    overhead = np.array([dc.base_overhead for dc in specs], float)

    k = 1.0 / (scenario.delay_bound - scenario.transmission_delay[t])
    a = peak / mu * h * WATT_TO_MEGAWATT
    b = static * k / mu * h * WATT_TO_MEGAWATT + overhead
    theta = 1.0 / a

    C = scenario.grid.capacity
    B = scenario.grid.background_load[t]
    supply = C * h - B
    server_cap = a * (mu * servers - k) + b
    p = scenario.pricing

    slot = SlotProblem(
        slot=t, theta=utils.freeze(theta),
        E_total=float(scenario.workload[t] + np.sum(b / a)),
        e_lo=utils.freeze(b), e_hi=utils.freeze(np.minimum(server_cap, supply)),
        base_price=utils.freeze(p.base_price[t]),
        sensitivity=utils.freeze(p.sensitivity),
        price_floor=utils.freeze(p.price_floor[t]),
        price_ceiling=utils.freeze(p.price_ceiling[t]),
        avg_cap=float(p.avg_cap[t]),
        background_load=utils.freeze(B), capacity=utils.freeze(C),
        slot_length=h, a=utils.freeze(a), b=utils.freeze(b),
        k=utils.freeze(k), server_cap=utils.freeze(server_cap))
    check_slot_feasible(slot)
    return slot


def recover_dispatch(slot, scenario, e, tol=BOX_ABS_TOL):
    """Workload split and (QoS-tight) server counts producing energy e."""
    e = np.asarray(e, float)
    for i in range(slot.N):
        if e[i] < slot.e_lo[i] - tol:
            raise PreconditionError(i, "energy %r below the box %r"
                                    % (e[i], slot.e_lo[i]))
        if e[i] > slot.e_hi[i] + tol:
            raise PreconditionError(i, "energy %r above the box %r"
                                    % (e[i], slot.e_hi[i]))
    mismatch = slot.theta.dot(e) - slot.E_total
    if abs(mismatch) > WORKLOAD_REL_TOL * max(1.0, abs(slot.E_total)):
        raise PreconditionError(None, "weighted energy misses the target by %r"
                                % mismatch)

    mu = np.array([dc.service_rate for dc in scenario.data_centers], float)
    lam = np.maximum(slot.theta * (e - slot.b), 0.0)
    x = (lam + slot.k) / mu
    return DispatchDecision(e=utils.freeze(e), workload=utils.freeze(lam),
                            servers=utils.freeze(x))


def dispatch_violations(scenario, t, decision):
    """Constraint violations of a dispatch against the physical model."""
    out = []
    h = scenario.slot_length
    L = scenario.workload[t]
    lam, x, e = decision.workload, decision.servers, decision.e
    if abs(lam.sum() - L) > WORKLOAD_REL_TOL * max(1.0, L):
        out.append("workload sum %r differs from %r" % (lam.sum(), L))
    supply = scenario.grid.capacity * h - scenario.grid.background_load[t]
    for i, dc in enumerate(scenario.data_centers):
        k = 1.0 / (scenario.delay_bound - scenario.transmission_delay[t, i])
        if lam[i] < 0:
            out.append("location %d: negative workload %r" % (i, lam[i]))
        if x[i] < 0 or x[i] > dc.servers:
            out.append("location %d: %r servers outside [0, %r]"
                       % (i, x[i], dc.servers))
        if dc.service_rate * x[i] - lam[i] < k - 1e-9:
            out.append("location %d: QoS slack %r below %r"
                       % (i, dc.service_rate * x[i] - lam[i], k))
        if e[i] < -BOX_ABS_TOL or e[i] > supply[i] + BOX_ABS_TOL:
            out.append("location %d: energy %r outside [0, %r]"
                       % (i, e[i], supply[i]))
    return out


# Evaluation
# ============================================================


def load_ratio(slot, e):
    return (np.asarray(e) + slot.background_load) / slot.slot_capacity


def eli(slot, e):
    """Electric load index: sum of squared load ratios weighted by the
    per-slot capacity.
    """
    per_slot = slot.slot_capacity
    return float(np.sum((np.asarray(e) + slot.background_load) ** 2 / per_slot))


def implied_price(slot, s, e):
    return slot.base_price + slot.sensitivity * (np.asarray(e) - np.asarray(s))


def total_cost(slot, s, e):
    e = np.asarray(e)
    return float(implied_price(slot, s, e).dot(e))


def pricing_decision(slot, s, e):
    return PricingDecision(s=utils.freeze(s),
                           price=utils.freeze(implied_price(slot, s, e)))


def price_violation(slot, price):
    """Largest violation of the price band and of the average price cap."""
    price = np.asarray(price)
    band = np.maximum(slot.price_floor - price, price - slot.price_ceiling)
    cap = price.mean() - slot.avg_cap
    return float(max(0.0, np.max(band), cap))


# Testing
# ============================================================


def _reference_server(base_overhead=0.0):
    return DataCenterSpec(id=0, servers=80000, service_rate=4.0, p_idle=100.0,
                          p_peak=200.0, pue=1.5, base_overhead=base_overhead)


def test_energy_of_single_idle_server():
    utils.assert_almost_equal(energy_of(_reference_server(), 1, 0), 2.0e-4, 1e-15)


def test_energy_of_zero():
    assert energy_of(_reference_server(), 0, 0) == 0.0


def test_energy_of_loaded_servers():
    utils.assert_almost_equal(energy_of(_reference_server(), 2, 4), 500e-6, 1e-15)


def test_reduction_coefficient_for_reference_server():
    spec = _reference_server()
    a = spec.pue * spec.p_peak / spec.service_rate * WATT_TO_MEGAWATT
    utils.assert_almost_equal(a, 75e-6, 1e-18)


def test_eli_examples():
    slot = make_slot(theta=[1, 1], E_total=2, e_lo=[0, 0], e_hi=[2, 2],
                     base_price=1, sensitivity=1, price_floor=-10,
                     price_ceiling=10, avg_cap=10, background_load=0,
                     capacity=4)
    utils.assert_almost_equal(eli(slot, [1, 1]), 0.5)
    assert eli(slot, [0, 0]) == 0.0

    # Equal ratios give r^2 * sum(C)
    r = 0.25
    utils.assert_almost_equal(eli(slot, [r * 4, r * 4]), r**2 * 8)


def test_total_cost_examples():
    slot = make_slot(theta=[1, 1], E_total=2, e_lo=[0, 0], e_hi=[2, 2],
                     base_price=1, sensitivity=1, price_floor=-10,
                     price_ceiling=10, avg_cap=10, background_load=0,
                     capacity=1)
    utils.assert_almost_equal(total_cost(slot, [1, 1], [1, 1]), 2.0)
    assert total_cost(slot, [1, 1], [0, 0]) == 0.0
    utils.assert_almost_equal(total_cost(slot, [2, 0], [1.5, 0.5]), 1.5)


def test_implied_price_matches_tiered_formula():
    slot = make_slot(theta=[1, 1], E_total=2, e_lo=[0, 0], e_hi=[2, 2],
                     base_price=[1, 3], sensitivity=[2, 0.5], price_floor=-10,
                     price_ceiling=10, avg_cap=10, background_load=0,
                     capacity=1)
    s, e = np.array([2.0, 0.0]), np.array([1.5, 0.5])
    price = pricing_decision(slot, s, e).price
    assert price[0] == 1 + 2 * (1.5 - 2.0)
    assert price[1] == 3 + 0.5 * (0.5 - 0.0)
