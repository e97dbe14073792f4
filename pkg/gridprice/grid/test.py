from __future__ import division
from __future__ import absolute_import

import itertools as it

import numpy as np
import pytest
import sympy

import gridprice.core.utils as utils
import gridprice.core.numerics as numerics
import gridprice.core.example_problems as ex
import gridprice.grid.model as model
import gridprice.grid.stage2 as stage2
import gridprice.grid.benchmarks as benchmarks
import gridprice.grid.bilevel as bilevel
import gridprice.grid.heuristic as heuristic
import gridprice.grid.robust as robust


# Checks spanning several modules, on hand instances and seeded random
# slots from the example problems.


def _random_slots(seed, count, sizes=(2, 3, 4), wide_band=False):
    rng = np.random.default_rng(seed)
    return [ex.random_slot(rng, sizes[k % len(sizes)], wide_band)
            for k in range(count)]


# Scenario model
# ============================================================


def test_reduction_matches_energy_model_symbolically():
    lam, k, mu, p_idle, p_peak, pue, xi, h = sympy.symbols(
        "lam k mu p_idle p_peak pue xi h", positive=True)
    spec = model.DataCenterSpec(id=0, servers=1, service_rate=mu,
                                p_idle=p_idle, p_peak=p_peak, pue=pue,
                                base_overhead=xi)
    tight = model.energy_of(spec, (lam + k) / mu, lam, h)

    w = model.WATT_TO_MEGAWATT
    a = pue * p_peak / mu * h * w
    b = (p_idle + (pue - 1) * p_peak) * k / mu * h * w + xi
    utils.assert_sym_eq(tight, a * lam + b)


def test_reduce_recover_round_trip():
    rng = np.random.default_rng(1)
    scenarios = [ex.two_site_scenario()] + \
        [ex.random_scenario(rng, n) for n in (1, 2, 3, 4)]
    for scenario in scenarios:
        for t in range(scenario.T):
            slot = model.reduce_to_energy_space(scenario, t)
            e = benchmarks.solve_integrated(slot).e
            dispatch = model.recover_dispatch(slot, scenario, e)
            assert model.dispatch_violations(scenario, t, dispatch) == []
            for i, spec in enumerate(scenario.data_centers):
                back = model.energy_of(spec, dispatch.servers[i],
                                       dispatch.workload[i],
                                       scenario.slot_length)
                assert abs(back - e[i]) <= 1e-9 * max(1.0, abs(e[i]))


def test_recover_at_lower_box_runs_idle_servers():
    scenario = ex.two_site_scenario(workload=0.0)
    slot = model.reduce_to_energy_space(scenario, 0)
    dispatch = model.recover_dispatch(slot, scenario, slot.e_lo)
    utils.assert_list_almost_zero(dispatch.workload)
    mu = np.array([dc.service_rate for dc in scenario.data_centers])
    utils.assert_list_almost_equal(dispatch.servers, slot.k / mu)


def test_recover_inverts_affine_energy():
    # Pick e first, then the workload that makes it feasible.
    reduced = model.reduce_to_energy_space(ex.two_site_scenario(), 0)
    e = np.array([1.5, 0.5]) + reduced.b
    workload = reduced.theta.dot(e - reduced.b)
    scenario = ex.two_site_scenario(workload=workload)
    slot = model.reduce_to_energy_space(scenario, 0)
    dispatch = model.recover_dispatch(slot, scenario, e)

    utils.assert_list_almost_equal(dispatch.workload,
                                   (e - slot.b) / slot.a, 1e-6)
    for i, spec in enumerate(scenario.data_centers):
        utils.assert_almost_equal(
            model.energy_of(spec, dispatch.servers[i], dispatch.workload[i]),
            e[i], 1e-9)


def test_recover_rejects_point_outside_box():
    scenario = ex.two_site_scenario()
    slot = model.reduce_to_energy_space(scenario, 0)
    e = np.array(slot.e_hi) + 1.0
    with pytest.raises(model.PreconditionError) as info:
        model.recover_dispatch(slot, scenario, e)
    assert info.value.index == 0


def test_reduction_without_delay_floor():
    scenario = ex.two_site_scenario()
    scenario = scenario._replace(delay_bound=1e12,
                                 transmission_delay=np.zeros((2, 2)))
    slot = model.reduce_to_energy_space(scenario, 0)
    utils.assert_list_almost_zero(slot.e_lo - 0.5, 1e-12)


def test_too_much_workload_is_infeasible():
    scenario = ex.two_site_scenario(workload=1e9)
    with pytest.raises(model.InfeasibleSlotError):
        model.reduce_to_energy_space(scenario, 0)


def test_validation_lists_every_violation():
    good = ex.two_site_scenario()
    B = np.array(good.grid.background_load)
    B[1, 0] = 1e6
    d = np.array(good.transmission_delay)
    d[0, 1] = 1.0
    with pytest.raises(model.ScenarioValidationError) as info:
        model.make_scenario(good.name, good.slot_length, good.data_centers,
                            good.grid._replace(background_load=B),
                            good.pricing, good.workload, good.delay_bound, d)
    messages = info.value.violations
    assert len(messages) == 2
    assert any("background_load[i=0, t=1]" in m for m in messages)
    assert any("transmission_delay[i=1, t=0]" in m and "QoS" in m
               for m in messages)


def test_invalid_data_center():
    spec = ex.reference_data_center(p_idle=300.0, pue=0.9)
    assert len(spec.violations()) == 2


def test_equal_ratios_minimise_load_index():
    rng = np.random.default_rng(2)
    slot = ex.s2_slot(theta=[1.0, 1.0, 1.0], E_total=3.0, e_lo=[0, 0, 0],
                      e_hi=[3, 3, 3], base_price=1.0, sensitivity=1.0,
                      price_floor=-10, price_ceiling=10,
                      background_load=[0.5, 1.0, 0.2],
                      capacity=[2.0, 3.0, 1.5])
    total = 3.0 + np.sum(slot.background_load)
    loads = total * slot.capacity / np.sum(slot.capacity)
    best = model.eli(slot, loads - slot.background_load)
    utils.assert_almost_equal(best, (total / 6.5) ** 2 * 6.5)
    for _ in range(1000):
        d = rng.normal(size=3)
        d -= d.mean()
        assert model.eli(slot, loads - slot.background_load + 0.1 * d) >= best


def test_load_index_increasing():
    slot = ex.random_slot(np.random.default_rng(3), 3)
    e = np.array(slot.e_lo) + 0.1
    base = model.eli(slot, e)
    for i in range(3):
        bumped = e.copy()
        bumped[i] += 1e-6
        assert model.eli(slot, bumped) > base


# Best response
# ============================================================


def test_response_with_clamped_site():
    slot = ex.s2_slot(e_hi=[0.8, 2.0])
    br = stage2.best_response(slot, [1.0, 1.0])
    utils.assert_list_almost_equal(br.e, [0.8, 1.2])
    utils.assert_almost_equal(br.sigma, -2.4)
    utils.assert_almost_equal(br.omega_hi[0], 0.8)
    assert stage2.kkt_residual(slot, [1.0, 1.0], br) <= 1e-7


def test_response_matches_qp_solver():
    rng = np.random.default_rng(4)
    for k in range(500):
        slot = ex.random_slot(rng, 1 + k % 4)
        s = rng.uniform(-5.0, 5.0, slot.N)
        br = stage2.best_response(slot, s)
        assert stage2.kkt_residual(slot, s, br) <= 1e-7
        via_qp = stage2.best_response_by_qp(slot, s)
        a, b = model.total_cost(slot, s, br.e), model.total_cost(slot, s, via_qp.e)
        assert abs(a - b) <= 1e-5 * max(1.0, abs(b)), (a, b)
        assert stage2.kkt_residual(slot, s, via_qp) <= 1e-4


def test_response_matches_grid_search():
    rng = np.random.default_rng(5)
    step = 1e-3
    for _ in range(20):
        slot = ex.random_slot(rng, 2)
        s = rng.uniform(-3.0, 3.0, 2)
        br = stage2.best_response(slot, s)

        e0 = np.arange(slot.e_lo[0], slot.e_hi[0] + step, step)
        e1 = (slot.E_total - slot.theta[0] * e0) / slot.theta[1]
        ok = (e1 >= slot.e_lo[1]) & (e1 <= slot.e_hi[1]) & (e0 <= slot.e_hi[0])
        e0, e1 = e0[ok], e1[ok]
        cost = (slot.base_price[0] + slot.sensitivity[0] * (e0 - s[0])) * e0 \
            + (slot.base_price[1] + slot.sensitivity[1] * (e1 - s[1])) * e1
        best = np.argmin(cost)
        assert model.total_cost(slot, s, br.e) <= cost[best] + 1e-9
        assert abs(br.e[0] - e0[best]) <= 1.001 * step


def test_response_comparative_statics():
    rng = np.random.default_rng(6)
    for _ in range(50):
        slot = ex.random_slot(rng, 3)
        s = rng.uniform(-3.0, 3.0, 3)
        e = stage2.best_response(slot, s).e
        for i in range(3):
            bumped = s.copy()
            bumped[i] += 1e-3
            e2 = stage2.best_response(slot, bumped).e
            assert e2[i] >= e[i] - 1e-9
            for j in range(3):
                if j != i:
                    assert e2[j] <= e[j] + 1e-9


def test_response_multiplier_unique():
    slot = ex.random_slot(np.random.default_rng(7), 3)
    s = np.array([0.5, 1.0, -0.5])
    c, w = stage2._unclamped_terms(slot, s)

    def g(sigma):
        return slot.theta.dot(np.clip(c - w * sigma, slot.e_lo, slot.e_hi)) \
            - slot.E_total

    a = numerics.bisect(g, -100.0, 100.0)
    b = numerics.bisect(g, 0.0, 1e-3)
    e_a = np.clip(c - w * a, slot.e_lo, slot.e_hi)
    e_b = np.clip(c - w * b, slot.e_lo, slot.e_hi)
    utils.assert_list_almost_equal(e_a, e_b, 1e-8)


def test_kkt_residual_detects_perturbation():
    slot = ex.s2_slot()
    s = [1.0, 1.0]
    br = stage2.best_response(slot, s)
    moved = br._replace(e=br.e + np.array([0.01, 0.0]))
    assert stage2.kkt_residual(slot, s, moved) >= 0.01 * slot.sensitivity[0]


def test_closed_form_keeps_equality_under_shift():
    slot = ex.s2_slot()
    for shift in [0.0, 1.0, 2.0, -3.0]:
        br = stage2.rs2_closed_form(slot, np.array([1.0, 1.0]) + shift)
        utils.assert_almost_equal(slot.theta.dot(br.e), slot.E_total, 1e-10)


def test_lowest_price_references_keep_response():
    for slot in _random_slots(8, 30):
        s = benchmarks.solve_integrated(slot).e
        shifted = stage2.lowest_price_references(slot, s)
        e = stage2.best_response(slot, s).e
        e2 = stage2.best_response(slot, shifted).e
        utils.assert_list_almost_equal(e, e2, 1e-8)
        p = model.implied_price(slot, s, e)
        p2 = model.implied_price(slot, shifted, e2)
        assert np.all(p2 <= p + 1e-9)
        assert np.all(p2 >= slot.price_floor - 1e-9) or \
            np.any(p < slot.price_floor)


# Benchmarks
# ============================================================


def test_integrated_waterfill_matches_qp():
    for slot in _random_slots(9, 50):
        fast = benchmarks.solve_integrated(slot)
        slow = benchmarks.solve_integrated_qp(slot)
        utils.assert_almost_equal(fast.eli, slow.eli, 1e-6)


def test_integrated_reduction_matches_dispatch_space():
    rng = np.random.default_rng(10)
    for k in range(25):
        scenario = ex.random_scenario(rng, 1 + k % 4, T=4)
        for t in range(scenario.T):
            slot = model.reduce_to_energy_space(scenario, t)
            reduced = benchmarks.solve_integrated(slot).eli
            direct = benchmarks.solve_integrated_dispatch_space(scenario, t).eli
            assert utils.relative_error(reduced, direct) <= 1e-5, \
                (reduced, direct)


def test_restricted_wide_band_meets_lower_bound():
    slot = ex.s2_slot()
    result = benchmarks.solve_restricted(slot)
    utils.assert_list_almost_equal(result.e, [1.0, 1.0], 1e-5)
    utils.assert_almost_equal(result.eli, benchmarks.solve_integrated(slot).eli,
                              1e-6)


def test_restricted_with_collapsed_band():
    slot = ex.s2_slot(background_load=[0.5, 0.0], price_floor=[1.0, 1.0],
                      price_ceiling=[1.0, 1.0])
    result = benchmarks.solve_restricted(slot)
    utils.assert_list_almost_equal(result.s, result.e, 1e-5)
    assert result.eli >= benchmarks.solve_integrated(slot).eli - 1e-9


def test_restricted_single_site():
    slot = ex.single_site_slot()
    result = benchmarks.solve_restricted(slot)
    e = slot.E_total / slot.theta[0]
    utils.assert_almost_equal(result.e[0], e, 1e-8)
    C = slot.capacity[0]
    utils.assert_almost_equal(result.eli,
                              ((e + slot.background_load[0]) / C) ** 2 * C, 1e-8)


def test_restricted_infeasible_is_distinct():
    slot = ex.s2_slot(base_price=[1.0, 3.0], e_hi=[1.5, 2.0],
                      price_floor=[1.0, 3.0], price_ceiling=[1.0, 3.0])
    with pytest.raises(benchmarks.RestrictedInfeasibleError):
        benchmarks.solve_restricted(slot)
    # The exact problem still has an answer.
    result = bilevel.solve_exact(slot)
    utils.assert_list_almost_equal(result.e, [1.5, 0.5], 1e-6)


def test_base_price_beats_perturbations():
    rng = np.random.default_rng(11)
    for slot in _random_slots(12, 10):
        base = benchmarks.solve_base_price(slot)
        width = slot.e_hi - slot.e_lo
        need = slot.E_total - slot.theta.dot(slot.e_lo)
        checked = 0
        while checked < 100:
            # Random feasible dispatch: fill every box by a random share.
            w = rng.uniform(size=slot.N)
            scale = need / slot.theta.dot(w * width)
            if scale * np.max(w) > 1.0:
                continue
            e = slot.e_lo + scale * w * width
            assert slot.base_price.dot(e) >= base.cost - 1e-9
            checked += 1


def test_base_price_meets_target():
    for slot in _random_slots(13, 20):
        base = benchmarks.solve_base_price(slot)
        utils.assert_almost_equal(slot.theta.dot(base.e), slot.E_total, 1e-9)


# Exact solver
# ============================================================


def test_embedded_response_satisfies_reformulation():
    rng = np.random.default_rng(14)
    for slot in _random_slots(15, 30, sizes=(1, 2, 3)):
        pe1 = bilevel.build_pe1(slot)
        s = benchmarks.solve_integrated(slot).e + rng.normal(scale=0.1,
                                                             size=slot.N)
        br = stage2.best_response(slot, s)
        x = bilevel.embed_response(pe1, s, br)
        # Price rows are excluded: s is arbitrary here.
        qp = pe1.qp
        eq = np.abs(qp.A.dot(x) - qp.b)
        Gx = qp.G.dot(x)[slot.N + 1:]
        assert np.max(eq) <= 1e-8
        assert np.all(Gx >= qp.l[slot.N + 1:] - 1e-8)
        assert np.all(Gx <= qp.u[slot.N + 1:] + 1e-8)


def test_big_m_rows_equivalent_to_complementarity():
    rng = np.random.default_rng(16)
    slot = ex.s2_slot()
    pe1 = bilevel.build_pe1(slot)
    K = pe1.K
    for _ in range(200):
        e = np.where(rng.uniform(size=2) < 0.3, slot.e_lo,
                     np.where(rng.uniform(size=2) < 0.4, slot.e_hi,
                              rng.uniform(slot.e_lo, slot.e_hi)))
        omega_lo = np.where(rng.uniform(size=2) < 0.5, 0.0,
                            rng.uniform(0.0, 0.5 * K, 2))
        omega_hi = np.where(rng.uniform(size=2) < 0.5, 0.0,
                            rng.uniform(0.0, 0.5 * K, 2))
        complementary = np.all(omega_lo * (e - slot.e_lo) == 0) and \
            np.all(omega_hi * (slot.e_hi - e) == 0)

        def rows_hold(z_lo, z_hi):
            return np.all(e - K * z_lo <= slot.e_lo) and \
                np.all(omega_lo + K * z_lo <= K) and \
                np.all(e + K * z_hi >= slot.e_hi) and \
                np.all(omega_hi + K * z_hi <= K)

        patterns = [np.array(p, float) for p in it.product([0, 1], repeat=2)]
        linearised = any(rows_hold(a, b) for a in patterns for b in patterns)
        assert complementary == linearised


def test_root_relaxation_bounds():
    for slot in _random_slots(17, 10, sizes=(2, 3)):
        pe1 = bilevel.build_pe1(slot)
        root = bilevel.solve_relaxation(pe1, bilevel.BnbNode((), -np.inf, 0))
        if root.status == numerics.INFEASIBLE:
            continue
        try:
            exact = bilevel.solve_exact(slot)
        except bilevel.ExactInfeasibleError:
            continue
        assert bilevel.relaxation_value(pe1, root) <= exact.eli + 1e-7


def test_root_relaxation_equals_integrated_when_prices_slack():
    slot = ex.s2_slot(background_load=[0.5, 0.0])
    pe1 = bilevel.build_pe1(slot)
    root = bilevel.solve_relaxation(pe1, bilevel.BnbNode((), -np.inf, 0))
    utils.assert_almost_equal(bilevel.relaxation_value(pe1, root),
                              benchmarks.solve_integrated(slot).eli, 1e-6)


def test_child_bounds_do_not_decrease():
    for slot in _random_slots(18, 10, sizes=(2, 3)):
        pe1 = bilevel.build_pe1(slot)
        parent = bilevel.solve_relaxation(pe1, bilevel.BnbNode((), -np.inf, 0))
        if parent.status != numerics.OPTIMAL:
            continue
        for value in (0, 1):
            child = bilevel.solve_relaxation(
                pe1, bilevel.BnbNode(((0, value),), -np.inf, 1))
            if child.status != numerics.OPTIMAL:
                continue
            assert bilevel.relaxation_value(pe1, child) >= \
                bilevel.relaxation_value(pe1, parent) - 1e-7


def test_single_site_exact():
    slot = ex.single_site_slot()
    result = bilevel.solve_exact(slot)
    utils.assert_almost_equal(result.e[0], slot.E_total / slot.theta[0], 1e-8)
    assert result.diagnostics["nodes"] <= 5


def test_exact_meets_lower_bound_with_wide_band():
    slot = ex.s2_slot(background_load=[0.5, 0.0])
    result = bilevel.solve_exact(slot)
    utils.assert_almost_equal(result.eli,
                              benchmarks.solve_integrated(slot).eli, 1e-6)
    assert bilevel.verify_solution(slot, result.s, result.e) <= 1e-6


def test_exact_matches_exhaustive_leaves():
    settings = bilevel.BnbSettings()
    oracle = settings._replace(exhaustive=True)
    checked = 0
    for slot in _random_slots(19, 20, sizes=(2, 3)):
        try:
            result = bilevel.solve_exact(slot, settings)
        except bilevel.ExactInfeasibleError:
            continue
        pe1 = bilevel.build_pe1(slot, result.diagnostics["K"])
        leaves = bilevel.branch_and_bound(pe1, oracle)
        assert abs(result.eli - leaves.eli) <= 1e-5, (result.eli, leaves.eli)
        checked += 1
    assert checked > 0


def test_bound_sandwich():
    checked = 0
    for slot in _random_slots(20, 20):
        lower = benchmarks.solve_integrated(slot)
        try:
            upper = benchmarks.solve_restricted(slot)
        except benchmarks.RestrictedInfeasibleError:
            continue
        result = bilevel.solve_exact(slot, integrated=lower, restricted=upper)
        assert lower.eli <= result.eli + 1e-6
        assert result.eli <= upper.eli + 1e-6
        checked += 1
    assert checked > 0


@pytest.mark.slow
def test_bound_sandwich_many():
    for slot in _random_slots(21, 100):
        lower = benchmarks.solve_integrated(slot)
        try:
            upper = benchmarks.solve_restricted(slot)
        except benchmarks.RestrictedInfeasibleError:
            continue
        result = bilevel.solve_exact(slot, integrated=lower, restricted=upper)
        assert lower.eli - 1e-6 <= result.eli <= upper.eli + 1e-6


@pytest.mark.slow
def test_exact_matches_exhaustive_leaves_many():
    oracle = bilevel.BnbSettings(exhaustive=True)
    for slot in _random_slots(22, 50, sizes=(1, 2, 3)):
        try:
            result = bilevel.solve_exact(slot)
        except bilevel.ExactInfeasibleError:
            continue
        pe1 = bilevel.build_pe1(slot, result.diagnostics["K"])
        assert abs(result.eli - bilevel.branch_and_bound(pe1, oracle).eli) <= 1e-5


def test_undersized_big_m_is_caught():
    # Narrow box and point price bands: with K = 1e-3 the relaxation admits
    # a point whose energy is not the response to its references.
    slot = ex.s2_slot(e_lo=[0.9995, 0.9995], e_hi=[1.0005, 1.0005],
                      price_floor=[5.0, 5.0004], price_ceiling=[5.0, 5.0004])
    K = 1e-3
    pe1 = bilevel.build_pe1(slot, K)

    s = np.array([-3.0, -3.0004])
    e = np.array([1.0, 1.0])
    sigma = -6.0002
    x = np.zeros(pe1.qp.n)
    x[0:2], x[2:4], x[4] = s, e, pe1.theta_max * sigma
    x[5:7] = [0.0, 0.0002]           # omega_lo
    x[7:9] = [0.0002, 0.0]           # omega_hi
    x[9:11] = [0.6, 0.6]             # z_lo
    x[11:13] = [0.6, 0.6]            # z_hi
    assert bilevel.pe1_violation(pe1, x) <= 1e-9

    with pytest.raises(bilevel.VerificationError) as info:
        bilevel.verify_solution(slot, s, e)
    assert info.value.report["response_mismatch"] > 1e-5


def test_verification_detects_moved_references():
    slot = ex.s2_slot(background_load=[0.5, 0.0])
    result = bilevel.solve_exact(slot)
    violation, _ = bilevel.solution_violation(slot, result.s + [0.1, 0.0],
                                              result.e)
    assert violation > 0


def test_degenerate_site_is_fixed():
    slot = ex.s2_slot(e_lo=[0.5, 0.0], e_hi=[0.5, 2.0])
    result = bilevel.solve_exact(slot)
    utils.assert_list_almost_equal(result.e, [0.5, 1.5], 1e-8)


def test_leaf_relaxation_drops_switches():
    slot = ex.s2_slot()
    pe1 = bilevel.build_pe1(slot)
    # Site 0 pinned to its lower bound, site 1 interior.
    fixed = ((0, 0), (1, 1), (2, 1), (3, 1))
    node_qp = bilevel._node_qp(pe1, fixed)
    assert node_qp.qp.n == 4 * slot.N + 1
    assert node_qp.qp.G.shape[0] == pe1.qp.G.shape[0] - 2 * slot.N

    sol = bilevel.solve_relaxation(pe1, bilevel.BnbNode(fixed, -np.inf, 4))
    assert sol.status == numerics.OPTIMAL
    parts = bilevel.split(pe1, sol.x)
    utils.assert_list_almost_equal(parts["e"], [0.0, 2.0], 1e-6)
    utils.assert_list_almost_equal(parts["z_lo"], [0.0, 1.0])
    utils.assert_list_almost_equal(parts["z_hi"], [1.0, 1.0])
    assert bilevel.pe1_violation(pe1, sol.x) <= 1e-6


def test_relaxed_switches_mapped_back_to_unit_range():
    for slot in _random_slots(23, 5, sizes=(2, 3)):
        pe1 = bilevel.build_pe1(slot)
        root = bilevel.solve_relaxation(pe1, bilevel.BnbNode((), -np.inf, 0))
        if root.status != numerics.OPTIMAL:
            continue
        parts = bilevel.split(pe1, root.x)
        for z in (parts["z_lo"], parts["z_hi"]):
            assert np.all(z >= -1e-6) and np.all(z <= 1.0 + 1e-6)
        assert bilevel.pe1_violation(pe1, root.x) <= 1e-6


def test_restricted_infeasible_exact_answer_is_verified():
    slot = ex.s2_slot(base_price=[1.0, 3.0], e_hi=[1.5, 2.0],
                      price_floor=[1.0, 3.0], price_ceiling=[1.0, 3.0])
    result = bilevel.solve_exact(slot)
    assert result.diagnostics["unsolved_nodes"] == 0
    assert result.diagnostics["violation"] <= 1e-6


def _stalled_qp_solve(calls):
    def solve(problem, settings=None, x0=None):
        calls.append((settings.max_iter, x0 is not None))
        return numerics.QpSolution(
            x=np.zeros(problem.n), y=np.zeros(problem.A.shape[0]
                                              + problem.G.shape[0]),
            status=numerics.MAX_ITERATIONS, primal_residual=1.0,
            dual_residual=1.0, objective=0.0, iterations=settings.max_iter,
            polished=False)
    return solve


def test_unsolved_leaf_stops_search(monkeypatch):
    slot = ex.s2_slot()
    pe1 = bilevel.build_pe1(slot)
    calls = []
    monkeypatch.setattr(numerics, "qp_solve", _stalled_qp_solve(calls))

    settings = bilevel.BnbSettings(qp_max_iter=100)
    with pytest.raises(numerics.SolverError) as info:
        bilevel.branch_and_bound(pe1, settings)
    assert info.value.status == numerics.MAX_ITERATIONS
    # Every node gets a second, longer attempt from the stalled point.
    assert calls[0] == (100, False)
    assert calls[1] == (100 * bilevel.RELAXATION_RETRY_FACTOR, True)

    with pytest.raises(numerics.SolverError):
        bilevel.enumerate_leaves(pe1, settings)


# Heuristic
# ============================================================


def test_descent_close_to_exact():
    slot = ex.s2_slot(background_load=[0.5, 0.0])
    exact = bilevel.solve_exact(slot)
    result = heuristic.descent_solve(slot)
    assert result.eli <= 1.05 * exact.eli


def test_descent_with_frozen_prices_keeps_start():
    slot = ex.s2_slot(background_load=[0.5, 0.0], price_floor=[1.0, 1.0],
                      price_ceiling=[1.0, 1.0])
    restricted = benchmarks.solve_restricted(slot)
    result = heuristic.descent_solve(slot, restricted=restricted)
    utils.assert_list_almost_equal(result.s, restricted.s, 1e-6)
    utils.assert_almost_equal(result.eli, restricted.eli, 1e-6)


def test_descent_properties():
    for slot in _random_slots(23, 20):
        try:
            restricted = benchmarks.solve_restricted(slot)
        except benchmarks.RestrictedInfeasibleError:
            continue
        result = heuristic.descent_solve(slot, restricted=restricted)
        utils.assert_nonincreasing(heuristic.accepted_elis(result.trace), 1e-12)
        assert result.eli <= restricted.eli + 1e-9
        assert result.eli >= benchmarks.solve_integrated(slot).eli - 1e-9
        price = model.implied_price(slot, result.s, result.e)
        scale = max(1.0, np.max(np.abs(slot.base_price)))
        assert model.price_violation(slot, price) <= 1e-8 * scale


def test_descent_fallback_start():
    slot = ex.s2_slot(base_price=[1.0, 3.0], e_hi=[1.5, 2.0],
                      price_floor=[1.0, 3.0], price_ceiling=[1.0, 3.0])
    result = heuristic.descent_solve(slot)
    assert result.diagnostics["fallback_start"]


def test_infeasible_start_respects_restricted_bound():
    # From s = (2, 0) the prices are (0.5, 1.5); the unit step lands on
    # s = (1, 1), price feasible with load index 2.
    slot = ex.s2_slot(price_floor=[0.9, 0.9], price_ceiling=[1.1, 1.1])
    start = benchmarks.RestrictedResult(s=[2.0, 0.0], e=[1.5, 0.5],
                                        sigma=-2.0, eli=1.0, iterations=0,
                                        primal_residual=0.0)
    settings = heuristic.DescentSettings(eta0=1.0)

    result = heuristic.descent_solve(slot, settings, restricted=start)
    assert result.diagnostics["accepted"] == 0
    assert not result.diagnostics["price_feasible"]

    result = heuristic.descent_solve(slot, settings,
                                     restricted=start._replace(eli=2.5))
    assert result.trace[1].accepted
    utils.assert_list_almost_equal(result.trace[1].e, [1.0, 1.0], 1e-8)
    assert result.eli <= 2.5 + 1e-9
    assert result.diagnostics["price_feasible"]


# Robust
# ============================================================


def test_robust_zero_set_is_nominal():
    slot = ex.s2_slot(background_load=[0.5, 0.0])
    uncertainty = robust.make_uncertainty_set(slot, 0.0, 0.0)
    report = robust.solve_wcp(slot, uncertainty)
    nominal = bilevel.solve_exact(slot)
    assert np.array_equal(report.s, nominal.s)
    assert report.eli == nominal.eli
    assert report.method == model.ROBUST


def test_worst_case_dominates_samples():
    rng = np.random.default_rng(24)
    for slot in _random_slots(25, 10):
        uncertainty = robust.relative_uncertainty_set(slot, 0.1)
        s = benchmarks.solve_integrated(slot).e
        draws = robust.sample_errors(rng, uncertainty, 1000)
        worst = robust.realized_eli(slot, s, robust.worst_case_error(uncertainty))
        assert np.all(robust.realized_eli(slot, s, draws) <= worst + 1e-12)


def test_robust_guarantee():
    rng = np.random.default_rng(26)
    for slot in _random_slots(27, 5, sizes=(2, 3)):
        uncertainty = robust.relative_uncertainty_set(slot, 0.1)
        try:
            report = robust.solve_wcp(slot, uncertainty, freeze_box=True)
        except bilevel.ExactInfeasibleError:
            continue
        stats = robust.replay(slot, uncertainty, report.s, report.eli, rng)
        assert stats["robust_exceed"] == 0
        assert stats["robust_max"] <= report.eli + 1e-9


def test_robust_heuristic_inner_method():
    slot = ex.s2_slot(background_load=[0.5, 0.2], capacity=[3.0, 3.0])
    uncertainty = robust.relative_uncertainty_set(slot, 0.1)
    report = robust.solve_wcp(slot, uncertainty, method=robust.HEURISTIC)
    assert report.diagnostics["inner_method"] == robust.HEURISTIC
    nominal = heuristic.descent_solve(slot)
    assert report.eli >= nominal.eli


def test_robust_inner_settings_are_separate():
    slot = ex.s2_slot(background_load=[0.5, 0.2], capacity=[3.0, 3.0])
    uncertainty = robust.relative_uncertainty_set(slot, 0.1)
    report = robust.solve_wcp(
        slot, uncertainty, method=robust.HEURISTIC,
        bnb_settings=bilevel.BnbSettings(max_nodes=0),
        descent_settings=heuristic.DescentSettings(max_iter=1))
    assert report.diagnostics["iterations"] == 1

    report = robust.solve_wcp(
        slot, uncertainty, bnb_settings=bilevel.BnbSettings(max_nodes=3),
        descent_settings=heuristic.DescentSettings(max_iter=1))
    assert report.diagnostics["nodes"] <= 3


def test_infeasible_after_shift():
    slot = ex.s2_slot(capacity=[2.0, 2.0])
    uncertainty = robust.make_uncertainty_set(slot, 0.0, 1.5)
    with pytest.raises(robust.InfeasibleAfterShiftError):
        robust.solve_wcp(slot, uncertainty)


def test_invalid_uncertainty_set():
    slot = ex.s2_slot(background_load=[0.5, 0.0])
    with pytest.raises(model.ScenarioValidationError):
        robust.make_uncertainty_set(slot, 0.1, -0.1)
