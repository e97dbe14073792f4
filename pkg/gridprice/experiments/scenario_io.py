"""Reading and writing scenario files.

A scenario is one JSON document (metadata, data centers, pricing factors,
trace file names) next to comma-separated trace tables with the header
slot,location,value. Quantities are converted to MWh and USD on load.
"""

from __future__ import division
from __future__ import absolute_import

import json
import logging
import os

import numpy as np
import pandas as pd

import gridprice.core.utils as utils
import gridprice.grid.model as model


logger = logging.getLogger(__name__)


CONFIG_NAME = "scenario.json"
TRACE_COLUMNS = ["slot", "location", "value"]
SLOT_WIDE = "all"

# Size of one unit in MWh or USD.
ENERGY_UNITS = {"kWh": 1e-3, "MWh": 1.0, "GWh": 1e3}
CURRENCY_UNITS = {"cents": 1e-2, "USD": 1.0}

TRACES = ("base_price", "background_load", "transmission_delay", "workload")

# Relative spread tolerated when pricing factors are read back from a
# scenario.
FACTOR_RTOL = 1e-12


class ScenarioParseError(ValueError):

    def __init__(self, path, reason):
        self.path = path
        self.reason = reason

    def __str__(self):
        return "cannot parse %s: %s" % (self.path, self.reason)


def _config_path(path):
    if os.path.isdir(path):
        return os.path.join(path, CONFIG_NAME)
    return path


# Reading
# ============================================================


def _read_json(path):
    try:
        with open(path) as f:
            return json.load(f)
    except (IOError, OSError) as error:
        raise ScenarioParseError(path, error.strerror or str(error))
    except ValueError as error:
        raise ScenarioParseError(path, "invalid JSON (%s)" % error)


def read_trace(path, T, N=None):
    """Read one trace table into a (T, N) array, or a (T,) array for a
    slot-wide table (N is None).

    Returns (values, violations); violations name the file line or the
    missing (i, t) cell.
    """
    name = os.path.basename(path)
    try:
        frame = pd.read_csv(path, dtype={"location": str},
                            float_precision="round_trip")
    except (IOError, OSError) as error:
        raise ScenarioParseError(path, error.strerror or str(error))
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as error:
        raise ScenarioParseError(path, str(error))
    if list(frame.columns) != TRACE_COLUMNS:
        raise ScenarioParseError(path, "header is %s, expected %s"
                                 % (",".join(map(str, frame.columns)),
                                    ",".join(TRACE_COLUMNS)))

    shape = (T,) if N is None else (T, N)
    values = np.full(shape, np.nan)
    seen = np.zeros(shape, dtype=bool)
    violations = []

    slots = pd.to_numeric(frame["slot"], errors="coerce")
    numbers = pd.to_numeric(frame["value"], errors="coerce")
    for row, (slot, location, value) in enumerate(
            zip(slots, frame["location"], numbers)):
        where = "%s line %d" % (name, row + 2)
        if not (slot == slot and float(slot).is_integer() and 0 <= slot < T):
            violations.append("%s: slot %r outside 0..%d"
                              % (where, frame["slot"][row], T - 1))
            continue
        t = int(slot)
        if N is None:
            if location != SLOT_WIDE:
                violations.append("%s: location %r, expected %r"
                                  % (where, location, SLOT_WIDE))
                continue
            index = (t,)
        else:
            if not (str(location).isdigit() and int(location) < N):
                violations.append("%s: location %r outside 0..%d"
                                  % (where, location, N - 1))
                continue
            index = (t, int(location))
        if value != value:
            violations.append("%s: value %r is not a number"
                              % (where, frame["value"][row]))
            continue
        if seen[index]:
            violations.append("%s: duplicate entry for %s"
                              % (where, _cell_name(index)))
            continue
        seen[index] = True
        values[index] = value

    for index in zip(*np.nonzero(~seen)):
        violations.append("%s: no entry for %s" % (name, _cell_name(index)))
    return values, violations


def _cell_name(index):
    if len(index) == 1:
        return "t=%d" % index[0]
    return "i=%d, t=%d" % (index[1], index[0])


def load_scenario(path):
    """Validated Scenario from a scenario.json file (or a directory holding
    one). Raises ScenarioParseError for unreadable files and
    ScenarioValidationError listing every violated invariant.
    """
    path = _config_path(path)
    config = _read_json(path)
    directory = os.path.dirname(os.path.abspath(path))

    try:
        units = config.get("units", {})
        energy = ENERGY_UNITS[units.get("energy", "MWh")]
        currency = CURRENCY_UNITS[units.get("currency", "USD")]
    except KeyError as error:
        raise ScenarioParseError(path, "unknown unit %s" % error)

    try:
        T = int(config["slots"])
        data_centers = config["data_centers"]
        pricing = config["pricing"]
        traces = config["traces"]
        specs = [model.DataCenterSpec(
            id=dc.get("id", i), servers=float(dc["servers"]),
            service_rate=float(dc["service_rate"]),
            p_idle=float(dc["p_idle_w"]), p_peak=float(dc["p_peak_w"]),
            pue=float(dc["pue"]),
            base_overhead=float(dc["base_overhead"]) * energy)
            for i, dc in enumerate(data_centers)]
        capacity = [float(dc["capacity"]) * energy for dc in data_centers]
        sensitivity = [float(dc["sensitivity"]) * currency / energy**2
                       for dc in data_centers]
        factors = [float(pricing[k]) for k in
                   ("floor_factor", "ceiling_factor", "avg_cap_factor")]
        trace_paths = dict((k, os.path.join(directory, traces[k]))
                           for k in TRACES)
        slot_length = float(config.get("slot_length_hours", 1.0))
        delay_bound = float(config["delay_bound_s"])
    except KeyError as error:
        raise ScenarioParseError(path, "missing key %s" % error)
    except (TypeError, ValueError) as error:
        raise ScenarioParseError(path, str(error))

    N = len(specs)
    violations = []
    tables = {}
    for key in TRACES:
        values, problems = read_trace(trace_paths[key], T,
                                      None if key == "workload" else N)
        tables[key] = values
        violations += problems
    if violations:
        raise model.ScenarioValidationError(violations)

    base_price = tables["base_price"] * currency / energy
    scenario = model.make_scenario(
        name=config.get("name", os.path.basename(directory)),
        slot_length=slot_length, data_centers=specs,
        grid=model.GridSpec(capacity=np.array(capacity),
                            background_load=tables["background_load"] * energy),
        pricing=model.pricing_from_factors(base_price, sensitivity, *factors),
        workload=tables["workload"], delay_bound=delay_bound,
        transmission_delay=tables["transmission_delay"])
    logger.info("loaded scenario %r: %d data centers, %d slots",
                scenario.name, scenario.N, scenario.T)
    return scenario


# Writing
# ============================================================


def pricing_factors(scenario):
    """(floor, ceiling, average cap) factors relative to the base price.
    Raises ValueError when the scenario's band is not a uniform multiple.
    """
    p = scenario.pricing
    alpha = np.asarray(p.base_price)
    out = []
    for name, ratio in [("price_floor", p.price_floor / alpha),
                        ("price_ceiling", p.price_ceiling / alpha),
                        ("avg_cap", p.avg_cap / alpha.mean(axis=1))]:
        factor = float(ratio.flat[0])
        if not np.allclose(ratio, factor, rtol=FACTOR_RTOL, atol=0.0):
            raise ValueError("%s is not a uniform multiple of the base price"
                             % name)
        out.append(factor)
    return tuple(out)


def write_trace(path, values):
    values = np.asarray(values)
    T = values.shape[0]
    if values.ndim == 1:
        frame = pd.DataFrame({"slot": np.arange(T), "location": SLOT_WIDE,
                              "value": values})
    else:
        slots, locations = np.meshgrid(np.arange(T), np.arange(values.shape[1]),
                                       indexing="ij")
        frame = pd.DataFrame({"slot": slots.ravel(),
                              "location": locations.ravel(),
                              "value": values.ravel()})
    frame.to_csv(path, index=False, columns=TRACE_COLUMNS,
                 float_format=utils.FLOAT_FORMAT)


def scenario_document(scenario, provenance=""):
    """The JSON document of a scenario, in MWh and USD."""
    floor, ceiling, avg_cap = pricing_factors(scenario)
    data_centers = []
    for i, dc in enumerate(scenario.data_centers):
        data_centers.append(dict(
            id=dc.id, servers=float(dc.servers),
            service_rate=float(dc.service_rate), p_idle_w=float(dc.p_idle),
            p_peak_w=float(dc.p_peak), pue=float(dc.pue),
            base_overhead=float(dc.base_overhead),
            capacity=float(scenario.grid.capacity[i]),
            sensitivity=float(scenario.pricing.sensitivity[i])))
    return dict(
        name=scenario.name, provenance=provenance,
        units=dict(energy="MWh", currency="USD"), slots=scenario.T,
        slot_length_hours=scenario.slot_length,
        delay_bound_s=scenario.delay_bound, data_centers=data_centers,
        pricing=dict(floor_factor=floor, ceiling_factor=ceiling,
                     avg_cap_factor=avg_cap),
        traces=dict((k, k + ".csv") for k in TRACES))


def write_scenario(scenario, directory, provenance=""):
    """Write scenario.json and the trace tables into directory. Returns the
    path of the JSON document.
    """
    if not os.path.isdir(directory):
        os.makedirs(directory)
    document = scenario_document(scenario, provenance)
    path = os.path.join(directory, CONFIG_NAME)
    with open(path, "w") as f:
        json.dump(document, f, indent=2)
        f.write("\n")

    tables = dict(base_price=scenario.pricing.base_price,
                  background_load=scenario.grid.background_load,
                  transmission_delay=scenario.transmission_delay,
                  workload=scenario.workload)
    for key in TRACES:
        write_trace(os.path.join(directory, document["traces"][key]),
                    tables[key])
    return path


def default_scenario_path():
    here = os.path.dirname(os.path.abspath(__file__))
    return os.path.join(os.path.dirname(here), "data", "default", CONFIG_NAME)


# Testing
# ============================================================


def test_default_scenario_loads():
    scenario = load_scenario(default_scenario_path())
    assert (scenario.N, scenario.T) == (4, 24)
    assert [dc.servers for dc in scenario.data_centers] == \
        [80000, 60000, 60000, 80000]


def test_trace_cells_are_named():
    assert _cell_name((3, 1)) == "i=1, t=3"
    assert _cell_name((5,)) == "t=5"
