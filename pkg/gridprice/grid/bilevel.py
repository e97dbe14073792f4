"""Exact solution of the utility's pricing problem.

The data centers' response is replaced by its KKT conditions, giving a
single-level problem over

    x = [s (N), e (N), sigma_hat, omega_lo (N), omega_hi (N),
         z_lo (N), z_hi (N)]

with sigma_hat = theta_max * sigma. Each complementarity pair
omega_lo_i (e_i - e_lo_i) = 0 is switched by a binary z_lo_i through two
big-M rows (similarly for the upper side):

    z_lo_i = 0  =>  e_i = e_lo_i
    z_lo_i = 1  =>  omega_lo_i = 0

Relaxing z to [0, 1] gives a convex QP lower bound for every subtree, which
a best-first branch-and-bound tightens until the gap closes.

Node problems are solved in reduced form: fixed switches are substituted
and free ones are carried as K z. A leaf whose relaxation cannot be solved
stops the search with numerics.SolverError; an unsolved inner node is
branched on without a bound of its own and counted in the diagnostics.
"""

from __future__ import division
from __future__ import absolute_import

import collections
import heapq
import itertools as it
import logging

import numpy as np

import gridprice.core.utils as utils
import gridprice.core.numerics as numerics
import gridprice.grid.model as model
import gridprice.grid.stage2 as stage2
import gridprice.grid.benchmarks as benchmarks


logger = logging.getLogger(__name__)


# PARAMETERS
K_SAFETY_FACTOR = 10.0
K_ESCALATION_FACTOR = 10.0
K_SATURATION = 0.99
COMPLEMENTARITY_TOL = 1e-6
REACH_TOL = 1e-9
RELAXATION_RETRY_FACTOR = 5


class ExactInfeasibleError(RuntimeError):
    """No reference vector satisfies the price constraints."""

    def __init__(self, slot, nodes):
        self.slot = slot
        self.nodes = nodes

    def __str__(self):
        return "slot %s: no price-feasible references found (%d nodes)" \
            % (self.slot, self.nodes)


class VerificationError(RuntimeError):

    def __init__(self, report):
        self.report = report

    @property
    def violation(self):
        return self.report["violation"]

    def __str__(self):
        return "solution failed verification: " + ", ".join(
            "%s = %.3g" % (k, v) for k, v in sorted(self.report.items()))


_BnbSettingsBase = collections.namedtuple(
    "BnbSettings",
    "gap node_tol verify_tol max_escalations max_nodes qp_max_iter exhaustive")


class BnbSettings(_BnbSettingsBase):
    """gap is relative to max(1, |upper bound|)."""
    __slots__ = ()

    def __new__(cls, gap=1e-6, node_tol=1e-8, verify_tol=1e-6,
                max_escalations=3, max_nodes=20000, qp_max_iter=20000,
                exhaustive=False):
        return super(BnbSettings, cls).__new__(
            cls, gap, node_tol, verify_tol, max_escalations, max_nodes,
            qp_max_iter, exhaustive)

    def qp_settings(self):
        return numerics.QpSettings(tol=self.node_tol,
                                   max_iter=self.qp_max_iter)


Pe1Instance = collections.namedtuple(
    "Pe1Instance", "slot K theta_max qp eli_constant degenerate")

BnbNode = collections.namedtuple("BnbNode", "fixed bound depth")

BnbResult = collections.namedtuple("BnbResult", "s e eli diagnostics")

Leaf = collections.namedtuple("Leaf", "fixed status value s")


# Variable layout
# ============================================================


def _blocks(N):
    """Slices of s, e, omega_lo, omega_hi, z_lo, z_hi and the index of
    sigma_hat.
    """
    return dict(s=slice(0, N), e=slice(N, 2 * N), sigma=2 * N,
                omega_lo=slice(2 * N + 1, 3 * N + 1),
                omega_hi=slice(3 * N + 1, 4 * N + 1),
                z_lo=slice(4 * N + 1, 5 * N + 1),
                z_hi=slice(5 * N + 1, 6 * N + 1))


def split(pe1, x):
    """Named views of a point of the single-level problem."""
    b = _blocks(pe1.slot.N)
    out = dict((k, x[v]) for k, v in b.items() if k != "sigma")
    out["sigma"] = x[b["sigma"]] / pe1.theta_max
    return out


# Building
# ============================================================


def big_m(slot):
    """Big-M constant dominating both the box widths and a bound on the
    box multipliers at any exact response to price-feasible references.
    """
    alpha, beta, theta = slot.base_price, slot.sensitivity, slot.theta
    k_primal = float(np.max(slot.e_hi - slot.e_lo))

    # Price band bounds beta (e - s), which bounds s given the box.
    spread = np.maximum(np.abs(slot.price_floor), np.abs(slot.price_ceiling)) \
        + np.abs(alpha)
    s_lo = slot.e_lo - (slot.price_ceiling - alpha) / beta
    s_hi = slot.e_hi - (slot.price_floor - alpha) / beta
    s_bound = float(np.max(slot.e_hi + spread / beta))

    # sigma lies between the all-upper and all-lower water levels.
    w = theta / (2.0 * beta)
    sigma_lo = np.min((s_lo / 2.0 - alpha / (2.0 * beta) - slot.e_hi) / w)
    sigma_hi = np.max((s_hi / 2.0 - alpha / (2.0 * beta) - slot.e_lo) / w)
    sigma_bound = float(max(abs(sigma_lo), abs(sigma_hi)))

    k_dual = float(np.max(np.abs(alpha) + 2.0 * beta * np.abs(slot.e_hi)
                          + beta * s_bound + theta * sigma_bound))
    return K_SAFETY_FACTOR * max(k_primal, k_dual)


def build_pe1(slot, K=None):
    """Single-level reformulation with all z relaxed to [0, 1]. Sites with a
    degenerate box have both switches fixed to 0 up front.
    """
    model.check_slot_feasible(slot)
    if K is None:
        K = big_m(slot)
    N = slot.N
    alpha, beta = slot.base_price, slot.sensitivity
    theta_max = float(np.max(slot.theta))
    theta_hat = slot.theta / theta_max
    b = _blocks(N)
    n = 6 * N + 1
    eye = np.eye(N)

    per_slot = slot.slot_capacity
    B = slot.background_load
    P = np.zeros((n, n))
    P[b["e"], b["e"]] = np.diag(2.0 / per_slot)
    q = np.zeros(n)
    q[b["e"]] = 2.0 * B / per_slot

    # Stationarity and energy equality.
    A = np.zeros((N + 1, n))
    A[:N, b["s"]] = -np.diag(beta)
    A[:N, b["e"]] = np.diag(2.0 * beta)
    A[:N, b["sigma"]] = theta_hat
    A[:N, b["omega_lo"]] = -eye
    A[:N, b["omega_hi"]] = eye
    A[N, b["e"]] = theta_hat
    rhs = np.concatenate([-alpha, [slot.E_total / theta_max]])

    rows, lows, ups = [], [], []

    def add(blocks, lo, up):
        row = np.zeros((N, n))
        for name, coefficient in blocks:
            row[:, b[name]] = coefficient
        rows.append(row)
        lows.append(np.broadcast_to(lo, (N,)))
        ups.append(np.broadcast_to(up, (N,)))

    inf = np.inf
    add([("e", np.diag(beta)), ("s", -np.diag(beta))],
        slot.price_floor - alpha, slot.price_ceiling - alpha)
    cap = np.zeros((1, n))
    cap[0, b["e"]] = beta / N
    cap[0, b["s"]] = -beta / N
    add([("e", eye)], slot.e_lo, slot.e_hi)
    add([("omega_lo", eye)], 0.0, inf)
    add([("omega_hi", eye)], 0.0, inf)
    add([("e", eye), ("z_lo", -K * eye)], -inf, slot.e_lo)
    add([("omega_lo", eye), ("z_lo", K * eye)], -inf, K)
    add([("e", eye), ("z_hi", K * eye)], slot.e_hi, inf)
    add([("omega_hi", eye), ("z_hi", K * eye)], -inf, K)

    degenerate = slot.e_lo == slot.e_hi
    z_up = np.where(degenerate, 0.0, 1.0)
    add([("z_lo", eye)], 0.0, z_up)
    add([("z_hi", eye)], 0.0, z_up)

    G = np.vstack(rows[:1] + [cap] + rows[1:])
    l = np.concatenate(lows[:1] + [[-inf]] + lows[1:])
    u = np.concatenate(ups[:1] + [[slot.avg_cap - alpha.mean()]] + ups[1:])

    qp = numerics.make_qp(P, q, A, rhs, G, l, u)
    return Pe1Instance(slot=slot, K=float(K), theta_max=theta_max, qp=qp,
                       eli_constant=float(np.sum(B**2 / per_slot)),
                       degenerate=utils.freeze(degenerate, dtype=bool))


def _initial_fixed(pe1):
    N = pe1.slot.N
    return tuple(sorted((int(pos), 0) for i in np.flatnonzero(pe1.degenerate)
                        for pos in (i, N + i)))


NodeQp = collections.namedtuple("NodeQp", "qp columns scale fixed_x")


def _node_qp(pe1, fixed):
    """Relaxation of the subtree below the fixings.

    Fixed switches are substituted into their rows and dropped, so a leaf
    is a plain convex QP over (s, e, sigma_hat, omega). Free switches are
    carried as K z, which keeps every big-M coefficient at one.
    """
    qp = pe1.qp
    N = pe1.slot.N
    first_z = 4 * N + 1
    first_z_row = qp.l.shape[0] - 2 * N

    fixed_x = np.zeros(qp.n)
    keep = np.ones(qp.n, dtype=bool)
    keep_rows = np.ones(qp.l.shape[0], dtype=bool)
    for pos, value in fixed:
        fixed_x[first_z + pos] = value
        keep[first_z + pos] = False
        keep_rows[first_z_row + pos] = False

    columns = np.flatnonzero(keep)
    scale = np.where(columns >= first_z, pe1.K, 1.0)
    shift = qp.G.dot(fixed_x)
    G = qp.G[:, columns] / scale
    l, u = qp.l - shift, qp.u - shift
    z_rows = np.arange(qp.l.shape[0]) >= first_z_row
    G[z_rows] *= pe1.K
    l = np.where(z_rows, pe1.K * l, l)
    u = np.where(z_rows, pe1.K * u, u)

    reduced = numerics.make_qp(
        qp.P[np.ix_(columns, columns)] / np.outer(scale, scale),
        qp.q[columns] / scale, qp.A[:, columns] / scale,
        qp.b - qp.A.dot(fixed_x), G[keep_rows], l[keep_rows], u[keep_rows])
    return NodeQp(qp=reduced, columns=columns, scale=scale,
                  fixed_x=utils.freeze(fixed_x))


def _expand(node_qp, x_reduced):
    x = np.array(node_qp.fixed_x)
    x[node_qp.columns] = np.asarray(x_reduced) / node_qp.scale
    return x


def _reachable(pe1, fixed):
    """Whether the energy target is reachable under the fixings."""
    slot = pe1.slot
    N = slot.N
    lo, hi = np.array(slot.e_lo), np.array(slot.e_hi)
    for pos, value in fixed:
        if value == 0:
            i = pos % N
            if pos < N:
                hi[i] = slot.e_lo[i]
            else:
                lo[i] = slot.e_hi[i]
    if np.any(lo > hi):
        return False
    tol = REACH_TOL * max(1.0, abs(slot.E_total))
    return slot.theta.dot(lo) - tol <= slot.E_total <= slot.theta.dot(hi) + tol


def pe1_violation(pe1, x):
    """Largest violation of the reformulation's linear constraints at x,
    for the relaxed z ranges.
    """
    qp = pe1.qp
    eq = np.abs(qp.A.dot(x) - qp.b)
    Gx = qp.G.dot(x)
    ineq = np.maximum(qp.l - Gx, Gx - qp.u)
    return float(max(np.max(eq, initial=0.0), np.max(ineq, initial=0.0), 0.0))


def embed_response(pe1, s, br):
    """Single-level point of references s with the exact response br,
    switches set to the clamping pattern of the response.
    """
    slot = pe1.slot
    b = _blocks(slot.N)
    x = np.zeros(pe1.qp.n)
    x[b["s"]] = s
    x[b["e"]] = br.e
    x[b["sigma"]] = pe1.theta_max * br.sigma
    x[b["omega_lo"]] = br.omega_lo
    x[b["omega_hi"]] = br.omega_hi
    x[b["z_lo"]] = np.where(br.e <= slot.e_lo, 0.0, 1.0)
    x[b["z_hi"]] = np.where(br.e >= slot.e_hi, 0.0, 1.0)
    return x


def complementarity_gaps(pe1, x):
    """Per-site scaled products of the lower and upper complementarity
    pairs.
    """
    slot = pe1.slot
    parts = split(pe1, x)
    e_scale = np.maximum(1.0, np.abs(slot.e_hi))
    w_scale = max(1.0, float(np.max(np.abs(slot.base_price))))
    lower = np.minimum(np.maximum(parts["e"] - slot.e_lo, 0.0) / e_scale,
                       np.maximum(parts["omega_lo"], 0.0) / w_scale)
    upper = np.minimum(np.maximum(slot.e_hi - parts["e"], 0.0) / e_scale,
                       np.maximum(parts["omega_hi"], 0.0) / w_scale)
    return lower, upper


# Relaxations and search
# ============================================================


def solve_relaxation(pe1, node, settings=None):
    """Convex relaxation of the subtree below node. The returned objective
    excludes the constant term of the load index, see relaxation_value.

    x is returned in the full layout, y refers to the rows of the node's
    reduced problem. A solve that runs out of iterations is restarted once
    from where it stopped with RELAXATION_RETRY_FACTOR times the budget.
    """
    if settings is None:
        settings = BnbSettings()
    node_qp = _node_qp(pe1, node.fixed)
    qp_settings = settings.qp_settings()
    sol = numerics.qp_solve(node_qp.qp, qp_settings)
    if sol.status == numerics.MAX_ITERATIONS:
        logger.debug("slot %s fixed %s: relaxation not converged after %d "
                     "iterations, retrying", pe1.slot.slot, node.fixed,
                     sol.iterations)
        retry = numerics.qp_solve(
            node_qp.qp,
            qp_settings._replace(
                max_iter=RELAXATION_RETRY_FACTOR * qp_settings.max_iter),
            x0=sol.x)
        sol = retry._replace(iterations=sol.iterations + retry.iterations)
    return sol._replace(x=_expand(node_qp, sol.x))


def relaxation_value(pe1, sol):
    return sol.objective + pe1.eli_constant


def solution_violation(slot, s, e):
    """(violation, report) of an exact-solver answer: mismatch between e
    and the true response to s, and the price violation of that response
    relative to the base price scale.
    """
    br = stage2.best_response(slot, s)
    mismatch = float(np.max(np.abs(br.e - np.asarray(e))))
    scale = max(1.0, float(np.max(np.abs(slot.base_price))))
    price = model.price_violation(slot, model.implied_price(slot, s, br.e)) \
        / scale
    report = dict(response_mismatch=mismatch, price_violation=price,
                  violation=max(mismatch, price))
    return report["violation"], report


def verify_solution(slot, s, e, tol=1e-6):
    """Return the violation of (s, e) or raise VerificationError above tol."""
    violation, report = solution_violation(slot, s, e)
    if violation > tol:
        raise VerificationError(report)
    return violation


def _candidate(pe1, s, settings):
    """(eli, s, e) of references s if their true response is price
    feasible, else None.
    """
    slot = pe1.slot
    br = stage2.best_response(slot, s)
    violation, _ = solution_violation(slot, s, br.e)
    if violation > settings.verify_tol:
        return None
    return model.eli(slot, br.e), utils.freeze(s), br.e


def _branching_position(pe1, x, fixed):
    """Most fractional free switch among violated pairs, ties by site index
    then lower before upper. None when every pair is complementary.
    """
    N = pe1.slot.N
    parts = split(pe1, x)
    lower, upper = complementarity_gaps(pe1, x)
    fixed_positions = set(pos for pos, _ in fixed)
    best, best_score = None, -1.0
    for i in range(N):
        for pos, gap, z in [(i, lower[i], parts["z_lo"][i]),
                            (N + i, upper[i], parts["z_hi"][i])]:
            if gap <= COMPLEMENTARITY_TOL or pos in fixed_positions:
                continue
            score = min(z, 1.0 - z)
            if score > best_score:
                best, best_score = pos, score
    return best


def _first_free_position(pe1, fixed):
    fixed_positions = set(pos for pos, _ in fixed)
    for pos in range(2 * pe1.slot.N):
        if pos not in fixed_positions:
            return pos
    return None


def _children(pe1, node, pos, bound):
    N = pe1.slot.N
    values = dict(node.fixed)
    partner = pos + N if pos < N else pos - N
    for value in (0, 1):
        if value == 0 and values.get(partner) == 0:
            continue
        fixed = tuple(sorted(node.fixed + ((pos, value),)))
        if _reachable(pe1, fixed):
            yield BnbNode(fixed=fixed, bound=bound, depth=node.depth + 1)


def _unsolved_leaf(pe1, fixed, sol):
    logger.error("slot %s: leaf %s not solved (%s, primal %.3g, dual %.3g "
                 "after %d iterations)", pe1.slot.slot, fixed, sol.status,
                 sol.primal_residual, sol.dual_residual, sol.iterations)
    return numerics.SolverError("slot %s leaf %s relaxation"
                                % (pe1.slot.slot, fixed), sol.status)


def branch_and_bound(pe1, settings=None, lower_bound=-np.inf, incumbent=None):
    """Best-first search over the switches.

    lower_bound is a known bound on the optimum (the integrated problem)
    and incumbent an optional (eli, s, e) starting point (the restricted
    problem). A node whose relaxed solution is already complementary is
    closed: its references, evaluated through the exact response, are an
    incumbent candidate and its relaxation value a bound on the subtree.
    """
    if settings is None:
        settings = BnbSettings()
    if settings.exhaustive:
        return _exhaustive_result(pe1, settings)

    slot = pe1.slot
    best = incumbent

    def upper():
        return np.inf if best is None else best[0]

    def gap():
        return settings.gap * max(1.0, abs(upper())) if best else 0.0

    counter = it.count()
    root = BnbNode(fixed=_initial_fixed(pe1), bound=lower_bound, depth=0)
    heap = [(root.bound, next(counter), root)]
    nodes = qp_iterations = unsolved = 0
    node_limit = False

    while heap:
        bound, _, node = heapq.heappop(heap)
        if bound >= upper() - gap():
            break
        if nodes >= settings.max_nodes:
            logger.warning("slot %s: node limit %d reached", slot.slot,
                           settings.max_nodes)
            heapq.heappush(heap, (bound, next(counter), node))
            node_limit = True
            break

        nodes += 1
        sol = solve_relaxation(pe1, node, settings)
        qp_iterations += sol.iterations
        logger.debug("slot %s node %d depth %d fixed %s: %s", slot.slot,
                     nodes, node.depth, node.fixed, sol.status)

        if sol.status == numerics.INFEASIBLE:
            continue
        if sol.status != numerics.OPTIMAL:
            pos = _first_free_position(pe1, node.fixed)
            if pos is None:
                raise _unsolved_leaf(pe1, node.fixed, sol)
            unsolved += 1
            logger.warning("slot %s: relaxation %s, branching blind",
                           slot.slot, sol.status)
            for child in _children(pe1, node, pos, node.bound):
                heapq.heappush(heap, (child.bound, next(counter), child))
            continue

        value = max(relaxation_value(pe1, sol), node.bound)
        if value >= upper() - gap():
            continue

        pos = _branching_position(pe1, sol.x, node.fixed)
        if pos is None:
            candidate = _candidate(pe1, split(pe1, sol.x)["s"], settings)
            if candidate is not None:
                if candidate[0] < upper():
                    best = candidate
                continue
            pos = _first_free_position(pe1, node.fixed)
            if pos is None:
                continue

        for child in _children(pe1, node, pos, value):
            heapq.heappush(heap, (child.bound, next(counter), child))

    if best is None:
        raise ExactInfeasibleError(slot.slot, nodes)

    eli, s, e = best
    # Open nodes bound the optimum only when the search was cut short.
    proven = min(heap[0][0], eli) if node_limit else eli
    diagnostics = dict(nodes=nodes, qp_iterations=qp_iterations, K=pe1.K,
                       proven_bound=proven, node_limit=node_limit,
                       unsolved_nodes=unsolved)
    return BnbResult(s=s, e=e, eli=eli, diagnostics=diagnostics)


def enumerate_leaves(pe1, settings=None):
    """Solve every admissible switch pattern. Pairs (0, 0) appear only for
    sites with a degenerate box. A leaf that cannot be solved raises
    numerics.SolverError.
    """
    if settings is None:
        settings = BnbSettings()
    N = pe1.slot.N
    per_site = []
    for i in range(N):
        if pe1.degenerate[i]:
            per_site.append([(0, 0)])
        else:
            per_site.append([(0, 1), (1, 0), (1, 1)])

    leaves = []
    for pattern in it.product(*per_site):
        fixed = tuple(sorted([(i, lo) for i, (lo, _) in enumerate(pattern)]
                             + [(N + i, hi) for i, (_, hi) in enumerate(pattern)]))
        if not _reachable(pe1, fixed):
            leaves.append(Leaf(fixed, numerics.INFEASIBLE, np.inf, None))
            continue
        sol = solve_relaxation(pe1, BnbNode(fixed, -np.inf, 2 * N), settings)
        if sol.status == numerics.INFEASIBLE:
            leaves.append(Leaf(fixed, sol.status, np.inf, None))
            continue
        if sol.status != numerics.OPTIMAL:
            raise _unsolved_leaf(pe1, fixed, sol)
        leaves.append(Leaf(fixed, sol.status, relaxation_value(pe1, sol),
                           utils.freeze(split(pe1, sol.x)["s"])))
    return leaves


def _exhaustive_result(pe1, settings):
    leaves = enumerate_leaves(pe1, settings)
    solved = [leaf for leaf in leaves if leaf.s is not None]
    if not solved:
        raise ExactInfeasibleError(pe1.slot.slot, len(leaves))
    leaf = min(solved, key=lambda lf: lf.value)
    e = stage2.best_response(pe1.slot, leaf.s).e
    eli = model.eli(pe1.slot, e)
    diagnostics = dict(nodes=len(leaves), qp_iterations=0, K=pe1.K,
                       proven_bound=min(leaf.value, eli), node_limit=False,
                       unsolved_nodes=0)
    return BnbResult(s=leaf.s, e=e, eli=eli, diagnostics=diagnostics)


# Driver
# ============================================================


def _initial_incumbent(restricted):
    if restricted is None:
        return None
    return restricted.eli, restricted.s, restricted.e


def solve_exact(slot, settings=None, integrated=None, restricted=None):
    """Globally optimal references for one slot.

    The integrated and restricted solutions seed the bounds and are
    computed when not given (restricted may be infeasible, then the search
    starts without an incumbent). If the answer fails verification, or a
    box multiplier of its response comes within 1% of the big-M constant,
    the constant is raised tenfold and the search repeated.
    """
    if settings is None:
        settings = BnbSettings()
    if integrated is None:
        integrated = benchmarks.solve_integrated(slot)
    if restricted is None:
        try:
            restricted = benchmarks.solve_restricted(slot)
        except (benchmarks.RestrictedInfeasibleError,
                numerics.SolverError) as error:
            logger.info("slot %s: no restricted incumbent (%s)", slot.slot,
                        error)

    K = None
    escalations = 0
    while True:
        pe1 = build_pe1(slot, K)
        result = branch_and_bound(pe1, settings, integrated.eli,
                                  _initial_incumbent(restricted))
        violation, report = solution_violation(slot, result.s, result.e)
        br = stage2.best_response(slot, result.s)
        omega_max = float(max(np.max(br.omega_lo), np.max(br.omega_hi)))
        saturated = omega_max >= K_SATURATION * pe1.K
        failed = violation > settings.verify_tol

        if not (failed or saturated) or escalations >= settings.max_escalations:
            break
        escalations += 1
        logger.warning("slot %s: %s, raising big-M constant from %.3g to %.3g",
                       slot.slot,
                       "verification failed" if failed
                       else "box multiplier %.3g near the big-M constant"
                       % omega_max,
                       pe1.K, K_ESCALATION_FACTOR * pe1.K)
        K = K_ESCALATION_FACTOR * pe1.K

    if failed:
        raise VerificationError(report)
    if saturated:
        logger.warning("slot %s: box multiplier still near the big-M "
                       "constant after %d escalations", slot.slot, escalations)

    diagnostics = dict(result.diagnostics)
    diagnostics.update(escalations=escalations, k_saturated=saturated,
                       violation=violation,
                       max_kkt_residual=stage2.kkt_residual(slot, result.s, br),
                       upper_bound=np.inf if restricted is None
                       else restricted.eli)
    return result._replace(diagnostics=diagnostics)


# Testing
# ============================================================


def test_zero_lower_switch_forces_lower_energy():
    import gridprice.core.example_problems as ex
    slot = ex.s2_slot()
    pe1 = build_pe1(slot)
    sol = solve_relaxation(pe1, BnbNode(((0, 0),), -np.inf, 1))
    assert sol.status == numerics.OPTIMAL
    utils.assert_almost_equal(split(pe1, sol.x)["e"][0], slot.e_lo[0], 1e-6)


def test_one_lower_switch_forces_zero_multiplier():
    import gridprice.core.example_problems as ex
    pe1 = build_pe1(ex.s2_slot())
    sol = solve_relaxation(pe1, BnbNode(((0, 1),), -np.inf, 1))
    assert sol.status == numerics.OPTIMAL
    utils.assert_almost_zero(split(pe1, sol.x)["omega_lo"][0], 1e-6)


def test_big_m_dominates_box_width():
    import gridprice.core.example_problems as ex
    slot = ex.s2_slot()
    assert big_m(slot) >= np.max(slot.e_hi - slot.e_lo)
