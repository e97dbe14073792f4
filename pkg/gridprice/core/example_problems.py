# Some instances with known answers for testing with: hand-sized slots,
# seeded random slots and scenarios, random convex QPs whose optimum is
# built in.

from __future__ import division
from __future__ import absolute_import

import numpy as np

import gridprice.core.numerics as numerics
import gridprice.grid.model as model


# Hand instances
# ============================================================


def s2_slot(**overrides):
    """Symmetric two-site slot: theta = (1, 1), E = 2, box [0, 2]^2,
    alpha = beta = (1, 1), no background load, unit capacities and a price
    band too wide to bind.
    """
    kwargs = dict(theta=[1.0, 1.0], E_total=2.0, e_lo=[0.0, 0.0],
                  e_hi=[2.0, 2.0], base_price=[1.0, 1.0],
                  sensitivity=[1.0, 1.0], price_floor=[-10.0, -10.0],
                  price_ceiling=[10.0, 10.0], avg_cap=10.0,
                  background_load=[0.0, 0.0], capacity=[1.0, 1.0])
    kwargs.update(overrides)
    return model.make_slot(**kwargs)


def single_site_slot(**overrides):
    kwargs = dict(theta=[2.0], E_total=3.0, e_lo=[0.5], e_hi=[4.0],
                  base_price=[2.0], sensitivity=[1.0], price_floor=[1.0],
                  price_ceiling=[3.0], avg_cap=3.0, background_load=[0.5],
                  capacity=[5.0])
    kwargs.update(overrides)
    return model.make_slot(**kwargs)


def reference_data_center(i=0, **overrides):
    """Server parameters of the four-site experiment, cycled by index."""
    servers = (80000, 60000, 60000, 80000)
    rates = (4.0, 3.0, 4.0, 3.0)
    pues = (1.5, 1.2, 1.2, 1.5)
    kwargs = dict(id=i, servers=servers[i % 4], service_rate=rates[i % 4],
                  p_idle=100.0, p_peak=200.0, pue=pues[i % 4],
                  base_overhead=0.0)
    kwargs.update(overrides)
    return model.DataCenterSpec(**kwargs)


def two_site_scenario(T=2, workload=2e5, background=20.0, capacity=100.0,
                      base_overhead=0.5):
    """Small physical scenario with the experiment's server parameters."""
    specs = [reference_data_center(i, base_overhead=base_overhead)
             for i in range(2)]
    alpha = np.tile([40.0, 45.0], (T, 1))
    pricing = model.pricing_from_factors(alpha, [1.5, 2.0], 0.5, 1.6, 0.8)
    grid = model.GridSpec(capacity=np.full(2, capacity),
                          background_load=np.full((T, 2), background))
    return model.make_scenario(
        name="two-site", slot_length=1.0, data_centers=specs, grid=grid,
        pricing=pricing, workload=np.full(T, workload), delay_bound=0.05,
        transmission_delay=np.tile([0.01, 0.02], (T, 1)))


# Random instances
# ============================================================


def random_slot(rng, n, wide_band=False):
    """Feasible random energy-space slot with n sites."""
    theta = rng.uniform(0.5, 2.0, n)
    e_lo = rng.uniform(0.0, 0.5, n)
    e_hi = e_lo + rng.uniform(0.5, 2.0, n)
    fill = rng.uniform(0.2, 0.8)
    E = theta.dot(e_lo + fill * (e_hi - e_lo))
    alpha = rng.uniform(1.0, 5.0, n)
    beta = rng.uniform(0.5, 2.0, n)
    B = rng.uniform(0.0, 1.0, n)
    C = (B + e_hi) * rng.uniform(1.1, 2.0, n)
    if wide_band:
        floor, ceiling, cap = np.full(n, -100.0), np.full(n, 100.0), 100.0
    else:
        floor = alpha * rng.uniform(0.3, 0.9, n)
        ceiling = alpha * rng.uniform(1.1, 2.5, n)
        cap = alpha.mean() * rng.uniform(1.0, 1.5)
    return model.make_slot(theta=theta, E_total=E, e_lo=e_lo, e_hi=e_hi,
                           base_price=alpha, sensitivity=beta,
                           price_floor=floor, price_ceiling=ceiling,
                           avg_cap=cap, background_load=B, capacity=C)


def random_scenario(rng, n, T=4):
    """Random physical scenario whose every slot is feasible."""
    specs = [model.DataCenterSpec(
        id=i, servers=float(rng.integers(20000, 80001)),
        service_rate=rng.uniform(2.0, 5.0), p_idle=100.0,
        p_peak=rng.uniform(150.0, 250.0), pue=rng.uniform(1.1, 1.6),
        base_overhead=rng.uniform(0.0, 0.5)) for i in range(n)]

    D = 0.05
    d = rng.uniform(0.0, 0.03, (T, n))
    mu = np.array([s.service_rate for s in specs])
    M = np.array([s.servers for s in specs])
    a = np.array([s.pue * s.p_peak for s in specs]) / mu * model.WATT_TO_MEGAWATT
    top_energy = a * mu * M

    overhead = np.array([s.base_overhead for s in specs])
    C = (top_energy + overhead) * rng.uniform(1.2, 2.0, n)
    B = C[None, :] * rng.uniform(0.0, 0.3, (T, n))
    workload = mu.dot(M) * rng.uniform(0.2, 0.5, T)

    alpha = rng.uniform(30.0, 60.0, (T, n))
    pricing = model.pricing_from_factors(alpha, rng.uniform(1.0, 3.0, n),
                                         0.5, 1.6, 0.8)
    return model.make_scenario(
        name="random", slot_length=1.0, data_centers=specs,
        grid=model.GridSpec(capacity=C, background_load=B), pricing=pricing,
        workload=workload, delay_bound=D, transmission_delay=d)


def random_qp(rng, n=None, with_equalities=True, with_inequalities=True):
    """Random convex QP with a known primal-dual optimum.

    Pick x*, an active set and multipliers of the right signs, then choose
    q so that stationarity holds at x*. Returns (problem, x*, y*).
    """
    if n is None:
        n = int(rng.integers(1, 31))
    F = rng.normal(size=(n, n))
    P = F.dot(F.T) / n + 0.1 * np.eye(n)
    x_star = rng.normal(size=n)

    k = int(rng.integers(0, n // 3 + 1)) if with_equalities else 0
    A = rng.normal(size=(k, n))
    b = A.dot(x_star)
    y_eq = rng.normal(size=k)

    m = int(rng.integers(1, n + 3)) if with_inequalities else 0
    G = rng.normal(size=(m, n))
    Gx = G.dot(x_star)
    kind = rng.integers(0, 3, m)
    l = Gx - rng.uniform(0.5, 2.0, m)
    u = Gx + rng.uniform(0.5, 2.0, m)
    y_in = np.zeros(m)

    lower = kind == 1
    l[lower] = Gx[lower]
    y_in[lower] = -rng.uniform(0.5, 2.0, lower.sum())
    upper = kind == 2
    u[upper] = Gx[upper]
    y_in[upper] = rng.uniform(0.5, 2.0, upper.sum())
    # Some inactive rows are one-sided.
    one_sided = (kind == 0) & (rng.uniform(size=m) < 0.3)
    u[one_sided] = np.inf

    q = -P.dot(x_star) - A.T.dot(y_eq) - G.T.dot(y_in)
    problem = numerics.make_qp(P, q, A, b, G, l, u)
    return problem, x_star, np.concatenate([y_eq, y_in])
