"""Synthetic scenarios: smooth diurnal curves plus seeded noise.

With noise switched off and the default four sites this reproduces the
shipped default scenario.
"""

from __future__ import division
from __future__ import absolute_import

import collections

import numpy as np

import gridprice.grid.model as model


# PARAMETERS
# Per-site defaults, cycled when there are more than four sites.
SERVERS = (80000, 60000, 60000, 80000)
SERVICE_RATES = (4.0, 3.0, 4.0, 3.0)
PUES = (1.5, 1.2, 1.2, 1.5)
BASE_OVERHEADS = (1.0, 0.8, 0.8, 1.0)
CAPACITIES = (120.0, 100.0, 100.0, 120.0)
SENSITIVITIES = (1.5, 2.0, 2.0, 1.5)
PRICE_OFFSETS = (3.0, -4.0, -1.0, 2.0)
BASE_DELAYS = (0.010, 0.015, 0.012, 0.020)
P_IDLE = 100.0
P_PEAK = 200.0

DELAY_BOUND = 0.05
FLOOR_FACTOR = 0.5
CEILING_FACTOR = 1.6
AVG_CAP_FACTOR = 0.8

# Background load never exceeds this share of the substation capacity.
MAX_BACKGROUND_SHARE = 0.85


_SynthConfigBase = collections.namedtuple(
    "SynthConfig",
    "n T seed noise workload_level workload_swing background_level "
    "background_swing price_level name")


class SynthConfig(_SynthConfigBase):
    """noise scales every additive perturbation; 0 gives the smooth
    curves. Workload levels are fractions of the total service capacity,
    background levels fractions of each substation capacity.
    """
    __slots__ = ()

    def __new__(cls, n=4, T=24, seed=0, noise=1.0, workload_level=0.58,
                workload_swing=0.12, background_level=0.525,
                background_swing=0.125, price_level=40.0, name=None):
        return super(SynthConfig, cls).__new__(
            cls, n, T, seed, noise, workload_level, workload_swing,
            background_level, background_swing, price_level, name)


def _cycle(values, n):
    return np.array([values[i % len(values)] for i in range(n)], float)


def _diurnal(t, peak_hour, period=24.0):
    return np.sin(2.0 * np.pi * (t - peak_hour) / period)


def synth_scenario(config=None):
    """Deterministic Scenario for a given config (seed included)."""
    if config is None:
        config = SynthConfig()
    if config.n < 1 or config.T < 1:
        raise ValueError("need at least one site and one slot, got n=%r T=%r"
                         % (config.n, config.T))
    rng = np.random.default_rng(config.seed)
    n, T = config.n, config.T
    t = np.arange(T, dtype=float)[:, None]
    i = np.arange(n, dtype=float)[None, :]

    specs = [model.DataCenterSpec(
        id=k, servers=float(SERVERS[k % 4]),
        service_rate=float(SERVICE_RATES[k % 4]), p_idle=P_IDLE,
        p_peak=P_PEAK, pue=float(PUES[k % 4]),
        base_overhead=float(BASE_OVERHEADS[k % 4])) for k in range(n)]
    C = _cycle(CAPACITIES, n)

    # Draw every noise table up front so each is independent of the others'
    # shapes.
    noise_b = rng.normal(size=(T, n))
    noise_p = rng.normal(size=(T, n))
    noise_w = rng.normal(size=T)

    B = C * (config.background_level
             + config.background_swing * _diurnal(t, 8.0 + 2.0 * i))
    B = B + config.noise * 0.02 * C * noise_b
    B = np.clip(B, 0.0, MAX_BACKGROUND_SHARE * C)

    alpha = (config.price_level + _cycle(PRICE_OFFSETS, n)
             + 6.0 * _diurnal(t, 13.0)
             + 1.5 * np.sin(2.0 * np.pi * (t + 3.0 * i) / 12.0))
    alpha = np.maximum(alpha + config.noise * 0.5 * noise_p,
                       0.1 * config.price_level)

    d = _cycle(BASE_DELAYS, n) + 0.003 * _diurnal(t, -6.0 * i)

    capacity = sum(dc.service_rate * dc.servers for dc in specs)
    level = config.workload_level + config.workload_swing * _diurnal(t[:, 0], 9.0)
    workload = capacity * np.maximum(level + config.noise * 0.01 * noise_w, 0.0)

    pricing = model.pricing_from_factors(alpha, _cycle(SENSITIVITIES, n),
                                         FLOOR_FACTOR, CEILING_FACTOR,
                                         AVG_CAP_FACTOR)
    name = config.name or "synthetic-n%d-seed%d" % (n, config.seed)
    return model.make_scenario(
        name=name, slot_length=1.0, data_centers=specs,
        grid=model.GridSpec(capacity=C, background_load=B), pricing=pricing,
        workload=workload, delay_bound=DELAY_BOUND, transmission_delay=d)


def provenance(config):
    return ("Synthetic scenario: diurnal background load, workload and base "
            "prices with seeded Gaussian noise (seed %d, noise scale %r)."
            % (config.seed, config.noise))


# Testing
# ============================================================


def test_same_seed_same_scenario():
    a = synth_scenario(SynthConfig(seed=42))
    b = synth_scenario(SynthConfig(seed=42))
    assert np.array_equal(a.grid.background_load, b.grid.background_load)
    assert np.array_equal(a.pricing.base_price, b.pricing.base_price)
    assert np.array_equal(a.workload, b.workload)


def test_noise_free_matches_shipped_curves():
    scenario = synth_scenario(SynthConfig(noise=0.0))
    # Slot 0 of the shipped tables.
    assert abs(scenario.grid.background_load[0, 0] - 50.009619) < 1e-6
    assert abs(scenario.pricing.base_price[0, 1] - 39.052914) < 1e-6
    assert abs(scenario.transmission_delay[0, 3] - 0.017) < 1e-12
    assert abs(scenario.workload[0] - 485244.243) < 1e-3
