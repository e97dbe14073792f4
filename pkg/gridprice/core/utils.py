from __future__ import division
from __future__ import absolute_import

import itertools as it
import logging
import multiprocessing

import numpy as np
import sympy

from functools import partial as par


logger = logging.getLogger(__name__)


# Seventeen significant digits are enough for any double to survive a
# write/read cycle unchanged.
FLOAT_FORMAT = "%.17g"


# General
# ============================================================


def _call_with(function, args):
    # Pool workers need a picklable, module level callable.
    logger.debug("sweep point for %s", getattr(function, "__name__", function))
    return function(*args)


def parallel_parameter_sweep(function, parameter_lists, serial_mode=False,
                             processes=None):
    """Evaluate function at every point of the grid spanned by
    parameter_lists, on a process pool unless serial_mode is set.

    Results are listed in itertools.product(*parameter_lists) order in
    either mode, so the two can be compared element by element. Serial mode
    keeps exceptions and tracebacks in the calling process.
    """
    points = list(it.product(*parameter_lists))
    call = par(_call_with, function)

    if serial_mode or len(points) <= 1:
        return [call(p) for p in points]

    pool = multiprocessing.Pool(processes)
    try:
        results = list(pool.imap(call, points))
    finally:
        pool.close()
        pool.join()
    return results


def freeze(values, dtype=float):
    """Copy into a read-only numpy array."""
    array = np.array(values, dtype=dtype)
    array.setflags(write=False)
    return array


def percent_reduction(reference, value):
    """Percentage by which value undercuts reference (negative if it is
    larger).
    """
    return 100.0 * (reference - value) / reference


def relative_error(exact, estimate):
    return abs(exact - estimate) / max(1.0, abs(exact))


# Assertions for tests
# ============================================================

# Each helper asserts directly so that pytest shows the offending values.


def assert_almost_equal(a, b, tol=1e-9):
    assert abs(a - b) < tol, (a, b, tol)


def assert_almost_zero(a, tol=1e-9):
    assert abs(a) < tol, (a, tol)


def assert_list_almost_equal(list_a, list_b, tol=1e-9):
    list_a, list_b = list(list_a), list(list_b)
    assert len(list_a) == len(list_b)
    for a, b in zip(list_a, list_b):
        assert abs(a - b) < tol, (a, b, tol)


def assert_list_almost_zero(values, tol=1e-9):
    for v in values:
        assert abs(v) < tol, (v, tol)


def assert_nonincreasing(values, tol=0.0):
    for a, b in zip(values, values[1:]):
        assert b <= a + tol, (a, b)


def _simplified(expr):
    # Plain numbers have no expand().
    try:
        return expr.expand().simplify()
    except AttributeError:
        return expr


def assert_sym_eq(a, b):
    """Symbolic equality. sympy may fail to reduce a true identity to zero,
    so a failure here is not proof of inequality.
    """
    print()
    print(sympy.pretty(_simplified(a)))
    print("equals")
    print(sympy.pretty(_simplified(b)))
    print()
    assert _simplified(a - b) == 0


# Testing
# ============================================================


def _load_ratio_sum(background, energy):
    return (background + energy) / 100.0


def test_parallel_sweep_matches_serial():
    backgrounds = np.linspace(10.0, 90.0, 9)
    energies = np.linspace(0.0, 20.0, 5)

    parallel = parallel_parameter_sweep(_load_ratio_sum,
                                        [backgrounds, energies])
    serial = parallel_parameter_sweep(_load_ratio_sum,
                                      [backgrounds, energies], True)
    direct = list(it.starmap(_load_ratio_sum,
                             it.product(backgrounds, energies)))

    assert_list_almost_equal(parallel, direct)
    assert serial == parallel


def test_freeze():
    a = freeze([1, 2, 3])
    assert a.dtype == float
    assert not a.flags.writeable

    source = np.arange(3.0)
    b = freeze(source)
    source[0] = 10.0
    assert b[0] == 0.0


def test_float_format_round_trips():
    for x in [0.1, 1.0/3.0, 2.0**-40, 123456789.123456789, -7.5e-300]:
        assert float(FLOAT_FORMAT % x) == x


def test_percent_reduction():
    assert_almost_equal(percent_reduction(200.0, 150.0), 25.0)
    assert percent_reduction(1.0, 2.0) < 0


def test_sym_eq_on_affine_identity():
    x, a, b = sympy.symbols('x a b')
    assert_sym_eq(a*(x + b) - a*b, a*x)
