"""Experiment orchestration: every (slot, method) cell of a scenario is
solved independently, failures are recorded in the cell and the run goes
on. Reports are a per-slot table, two-column series for plotting and a
JSON summary.
"""

from __future__ import division
from __future__ import absolute_import

import collections
import json
import logging
import os

import numpy as np
import pandas as pd

import gridprice.core.utils as utils
import gridprice.core.numerics as numerics
import gridprice.grid.model as model
import gridprice.grid.stage2 as stage2
import gridprice.grid.benchmarks as benchmarks
import gridprice.grid.bilevel as bilevel
import gridprice.grid.heuristic as heuristic
import gridprice.grid.robust as robust
import gridprice.experiments.scenario_io as scenario_io


logger = logging.getLogger(__name__)


# Failure kinds of a cell, and the matching exit codes.
INFEASIBLE = "infeasible"
SOLVER = "solver"
EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_INFEASIBLE = 3
EXIT_SOLVER = 4

INFEASIBLE_ERRORS = (model.InfeasibleSlotError,
                     benchmarks.RestrictedInfeasibleError,
                     bilevel.ExactInfeasibleError)
SOLVER_ERRORS = (numerics.SolverError, numerics.BracketError,
                 bilevel.VerificationError, model.PreconditionError)

DEFAULT_METHODS = (model.INTEGRATED, model.RESTRICTED, model.EXACT,
                   model.HEURISTIC, model.BASE_PRICE)
# Methods announcing references, hence prices of their own.
PRICED_METHODS = (model.RESTRICTED, model.EXACT, model.HEURISTIC,
                  model.ROBUST)

WORKLOAD_SCALES = tuple(np.round(np.arange(0.6, 1.45, 0.1), 10))
REDUCTION_TOL = 1e-5
NA_REP = "nan"


_RunManifestBase = collections.namedtuple(
    "RunManifest",
    "scenario methods workload_scale uncertainty seed out price_shift "
    "deterministic freeze_box replay_count focus_slot processes")


class RunManifest(_RunManifestBase):
    """What to run: scenario path, methods, workload scaling, the relative
    background-load error of the robust method and where to write.
    """
    __slots__ = ()

    def __new__(cls, scenario, methods=DEFAULT_METHODS, workload_scale=1.0,
                uncertainty=None, seed=0, out=None, price_shift=True,
                deterministic=False, freeze_box=False, replay_count=1000,
                focus_slot=None, processes=None):
        return super(RunManifest, cls).__new__(
            cls, scenario, tuple(methods), workload_scale, uncertainty, seed,
            out, price_shift, deterministic, freeze_box, replay_count,
            focus_slot, processes)


CellOptions = collections.namedtuple(
    "CellOptions", "price_shift uncertainty freeze_box seed replay_count")

RunResult = collections.namedtuple("RunResult", "scenario reports summary")


def manifest_violations(manifest):
    out = []
    if not manifest.methods:
        out.append("methods: at least one method is needed")
    for method in manifest.methods:
        if method not in model.METHODS:
            out.append("methods: unknown method %r, expected one of %s"
                       % (method, ", ".join(model.METHODS)))
    if not manifest.workload_scale > 0:
        out.append("workload_scale = %r must be positive"
                   % manifest.workload_scale)
    if model.ROBUST in manifest.methods:
        if manifest.uncertainty is None:
            out.append("methods: robust needs an uncertainty fraction")
        elif not 0 <= manifest.uncertainty < 1:
            out.append("uncertainty = %r must lie in [0, 1)"
                       % manifest.uncertainty)
    if not manifest.replay_count >= 1:
        out.append("replay_count = %r must be at least 1"
                   % manifest.replay_count)
    return out


def check_manifest(manifest):
    violations = manifest_violations(manifest)
    if violations:
        raise model.ScenarioValidationError(violations)


def cell_options(manifest):
    return CellOptions(price_shift=manifest.price_shift,
                       uncertainty=manifest.uncertainty,
                       freeze_box=manifest.freeze_box, seed=manifest.seed,
                       replay_count=manifest.replay_count)


# Single cells
# ============================================================


def _announce(slot, s, options):
    if options.price_shift:
        return stage2.lowest_price_references(slot, s)
    return utils.freeze(s)


def _priced_report(slot, method, s, e, eli, lower_bound, upper_bound,
                   diagnostics):
    return model.solve_report(
        slot=slot.slot, method=method, eli=eli,
        total_cost=model.total_cost(slot, s, e), s=s, e=e,
        price=model.implied_price(slot, s, e), lower_bound=lower_bound,
        upper_bound=upper_bound, diagnostics=diagnostics)


def _bounds(slot):
    integrated = benchmarks.solve_integrated(slot)
    try:
        restricted = benchmarks.solve_restricted(slot)
    except benchmarks.RestrictedInfeasibleError as error:
        logger.info("slot %s: %s", slot.slot, error)
        restricted = None
    return integrated, restricted


def _upper(restricted):
    return np.inf if restricted is None else restricted.eli


def _solve_integrated(slot, options):
    result = benchmarks.solve_integrated(slot)
    return model.solve_report(
        slot=slot.slot, method=model.INTEGRATED, eli=result.eli,
        total_cost=float(slot.base_price.dot(result.e)), e=result.e,
        lower_bound=result.eli)


def _solve_restricted(slot, options):
    integrated = benchmarks.solve_integrated(slot)
    result = benchmarks.solve_restricted(slot)
    return _priced_report(
        slot, model.RESTRICTED, _announce(slot, result.s, options), result.e,
        result.eli, integrated.eli, result.eli,
        dict(iterations=result.iterations,
             primal_residual=result.primal_residual))


def _solve_exact(slot, options):
    integrated, restricted = _bounds(slot)
    result = bilevel.solve_exact(slot, integrated=integrated,
                                 restricted=restricted)
    return _priced_report(
        slot, model.EXACT, _announce(slot, result.s, options), result.e,
        result.eli, integrated.eli, _upper(restricted), result.diagnostics)


def _solve_heuristic(slot, options):
    integrated, restricted = _bounds(slot)
    result = heuristic.descent_solve(slot, restricted=restricted)
    diagnostics = dict(result.diagnostics)
    diagnostics["trace_eli"] = heuristic.accepted_elis(result.trace)
    return _priced_report(
        slot, model.HEURISTIC, _announce(slot, result.s, options), result.e,
        result.eli, integrated.eli, _upper(restricted), diagnostics)


def _solve_robust(slot, options):
    uncertainty = robust.relative_uncertainty_set(slot, options.uncertainty)
    report = robust.solve_wcp(slot, uncertainty, robust.EXACT,
                              options.freeze_box)
    worst = robust.shifted_slot(slot, robust.worst_case_error(uncertainty),
                                options.freeze_box)
    s = _announce(worst, report.s, options)

    nominal = bilevel.solve_exact(slot)
    rng = np.random.default_rng([options.seed, slot.slot])
    replayed = robust.replay(slot, uncertainty, s, report.eli, rng,
                             options.replay_count, nominal_s=nominal.s)
    diagnostics = dict(report.diagnostics)
    diagnostics.update(replayed)
    diagnostics["nominal_eli"] = nominal.eli
    return _priced_report(worst, model.ROBUST, s, report.e, report.eli,
                          benchmarks.solve_integrated(worst).eli, np.nan,
                          diagnostics)


def _solve_base_price(slot, options):
    result = benchmarks.solve_base_price(slot)
    return model.solve_report(
        slot=slot.slot, method=model.BASE_PRICE, eli=result.eli,
        total_cost=result.cost, e=result.e, price=slot.base_price)


_SOLVERS = {
    model.INTEGRATED: _solve_integrated,
    model.RESTRICTED: _solve_restricted,
    model.EXACT: _solve_exact,
    model.HEURISTIC: _solve_heuristic,
    model.ROBUST: _solve_robust,
    model.BASE_PRICE: _solve_base_price,
}


def solve_cell(scenario, t, method, options):
    """SolveReport of one (slot, method) cell. Module errors are caught and
    recorded in the report.
    """
    try:
        slot = model.reduce_to_energy_space(scenario, t)
        return _SOLVERS[method](slot, options)
    except INFEASIBLE_ERRORS as error:
        logger.warning("slot %d, %s: %s", t, method, error)
        return model.failed_report(t, method, error, INFEASIBLE)
    except SOLVER_ERRORS as error:
        logger.warning("slot %d, %s: %s", t, method, error)
        return model.failed_report(t, method, error, SOLVER)


def solve_all(scenario, methods, options, serial_mode=False, processes=None):
    """Reports of every cell, slot-major in the order of methods, whatever
    the execution order.
    """
    return utils.parallel_parameter_sweep(
        solve_cell, [[scenario], range(scenario.T), list(methods), [options]],
        serial_mode=serial_mode, processes=processes)


def exit_code(reports):
    kinds = set(r.error_kind for r in reports)
    if SOLVER in kinds:
        return EXIT_SOLVER
    if INFEASIBLE in kinds:
        return EXIT_INFEASIBLE
    return EXIT_OK


# Summaries
# ============================================================


def _by_method(reports):
    out = collections.OrderedDict()
    for r in reports:
        out.setdefault(r.method, {})[r.slot] = r
    return out


def _solved(r):
    return r is not None and r.error is None


def summarize(scenario, reports):
    """Averages per method, reductions against the base-price baseline,
    gaps to the lower bound and the list of failed cells.
    """
    table = _by_method(reports)
    base = table.get(model.BASE_PRICE, {})
    methods = collections.OrderedDict()
    for method, cells in table.items():
        good = [r for r in cells.values() if _solved(r)]
        entry = dict(solved=len(good), failed=len(cells) - len(good),
                     mean_eli=_mean([r.eli for r in good]),
                     total_cost=float(sum(r.total_cost for r in good)))

        paired = [(base.get(t), r) for t, r in sorted(cells.items())
                  if _solved(r) and _solved(base.get(t))]
        if paired and method != model.BASE_PRICE:
            entry["eli_reduction_pct"] = _mean(
                [utils.percent_reduction(b.eli, r.eli) for b, r in paired])
            entry["cost_reduction_pct"] = utils.percent_reduction(
                sum(b.total_cost for b, _ in paired),
                sum(r.total_cost for _, r in paired))
            entry["eli_not_above_base"] = all(r.eli <= b.eli + 1e-9
                                              for b, r in paired)

        bounded = [r for r in good if np.isfinite(r.lower_bound)
                   and r.lower_bound > 0 and method != model.INTEGRATED]
        if bounded:
            entry["gap_to_lower_bound_pct"] = _mean(
                [100.0 * (r.eli - r.lower_bound) / r.lower_bound
                 for r in bounded])

        if method == model.ROBUST and good:
            entry["robust_exceed"] = sum(r.diagnostics["robust_exceed"]
                                         for r in good)
            entry["nominal_exceed"] = sum(r.diagnostics["nominal_exceed"]
                                          for r in good)
        methods[method] = entry

    failures = [dict(slot=r.slot, method=r.method, kind=r.error_kind,
                     error=r.error) for r in reports if r.error is not None]
    return dict(scenario=scenario.name, slots=scenario.T,
                data_centers=scenario.N, methods=methods, failures=failures,
                exit_code=exit_code(reports))


def _mean(values):
    return float(np.mean(values)) if len(values) else float("nan")


# Report files
# ============================================================


def slots_frame(reports, N):
    """One row per (slot, method) with per-location vectors spread over
    columns.
    """
    rows = []
    for r in reports:
        row = collections.OrderedDict([
            ("slot", r.slot), ("method", r.method), ("eli", r.eli),
            ("total_cost", r.total_cost), ("lower_bound", r.lower_bound),
            ("upper_bound", r.upper_bound),
            ("error_kind", r.error_kind or ""), ("error", r.error or "")])
        for name in ("s", "e", "price"):
            values = getattr(r, name)
            for i in range(N):
                row["%s_%d" % (name, i)] = np.nan if values is None \
                    else float(values[i])
        rows.append(row)
    return pd.DataFrame(rows)


def read_slots(path):
    """Re-read a slots table written by write_reports, floats unchanged."""
    return pd.read_csv(path, float_precision="round_trip",
                       keep_default_na=False, na_values=[NA_REP])


def focus_slot(scenario):
    """Slot with the heaviest data-center workload."""
    return int(np.argmax(scenario.workload))


def figure_series(scenario, reports, focus=None):
    """Plot-ready series: name -> (index column, index values, values)."""
    series = collections.OrderedDict()
    slots = np.arange(scenario.T)
    table = _by_method(reports)

    def per_slot(name, cells, value):
        series[name] = ("slot", slots, np.array(
            [value(cells[t]) if _solved(cells.get(t)) else np.nan
             for t in slots]))

    for method, cells in table.items():
        per_slot("eli_%s" % method, cells, lambda r: r.eli)
        per_slot("cost_%s" % method, cells, lambda r: r.total_cost)
        if method in PRICED_METHODS or method == model.BASE_PRICE:
            for i in range(scenario.N):
                per_slot("price_%s_%d" % (method, i), cells,
                         lambda r, i=i: r.price[i])
        if method == model.ROBUST:
            for key in ("robust_max", "robust_mean", "nominal_max",
                        "nominal_mean"):
                per_slot("replay_%s" % key, cells,
                         lambda r, key=key: r.diagnostics[key])

    if focus is None:
        focus = focus_slot(scenario)
    locations = np.arange(scenario.N)
    B = scenario.grid.background_load[focus]
    series["load_background"] = ("location", locations, np.array(B))
    for method in (model.BASE_PRICE, model.EXACT):
        r = table.get(method, {}).get(focus)
        if _solved(r):
            series["load_%s_datacenter" % method] = ("location", locations,
                                                     np.array(r.e))
            series["load_%s_total" % method] = ("location", locations,
                                                np.array(r.e) + B)
    return series


def _jsonable(value):
    if isinstance(value, dict):
        return dict((str(k), _jsonable(v)) for k, v in value.items())
    if isinstance(value, (list, tuple, np.ndarray)):
        return [_jsonable(v) for v in value]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if np.isfinite(value) else None
    return value


def write_series(directory, series):
    series_dir = os.path.join(directory, "series")
    if not os.path.isdir(series_dir):
        os.makedirs(series_dir)
    for name, (index_name, index, values) in series.items():
        frame = pd.DataFrame({index_name: index, "value": values})
        frame.to_csv(os.path.join(series_dir, name + ".csv"), index=False,
                     na_rep=NA_REP,
                     columns=[index_name, "value"],
                     float_format=utils.FLOAT_FORMAT)


def write_summary(directory, summary):
    with open(os.path.join(directory, "summary.json"), "w") as f:
        json.dump(_jsonable(summary), f, indent=2, sort_keys=True)
        f.write("\n")


def write_reports(directory, scenario, reports, summary, focus=None):
    if not os.path.isdir(directory):
        os.makedirs(directory)
    slots_frame(reports, scenario.N).to_csv(
        os.path.join(directory, "slots.csv"), index=False,
        na_rep=NA_REP,
        float_format=utils.FLOAT_FORMAT)
    write_series(directory, figure_series(scenario, reports, focus))
    write_summary(directory, summary)


def run(manifest):
    """Solve every requested cell of the manifest's scenario and write the
    reports when an output directory is given.
    """
    check_manifest(manifest)
    scenario = scenario_io.load_scenario(manifest.scenario)
    if manifest.workload_scale != 1.0:
        scenario = model.scale_workload(scenario, manifest.workload_scale)

    reports = solve_all(scenario, manifest.methods, cell_options(manifest),
                        manifest.deterministic, manifest.processes)
    summary = summarize(scenario, reports)
    summary["workload_scale"] = manifest.workload_scale
    summary["uncertainty"] = manifest.uncertainty
    if manifest.out is not None:
        write_reports(manifest.out, scenario, reports, summary,
                      manifest.focus_slot)
        logger.info("wrote reports to %s", manifest.out)
    return RunResult(scenario=scenario, reports=reports, summary=summary)


# Sweeps
# ============================================================


def sweep_workload(scenario, scales, options, serial_mode=False,
                   processes=None):
    """Mean load index of base pricing and exact pricing, and the average
    reductions, for the workload scaled by each factor.
    """
    rows = []
    for scale in scales:
        scaled = model.scale_workload(scenario, scale)
        reports = solve_all(scaled, (model.BASE_PRICE, model.EXACT), options,
                            serial_mode, processes)
        summary = summarize(scaled, reports)["methods"]
        exact = summary[model.EXACT]
        rows.append(collections.OrderedDict([
            ("scale", float(scale)),
            ("eli_base_price", summary[model.BASE_PRICE]["mean_eli"]),
            ("eli_exact", exact["mean_eli"]),
            ("eli_reduction_pct", exact.get("eli_reduction_pct", np.nan)),
            ("cost_reduction_pct", exact.get("cost_reduction_pct", np.nan)),
            ("failed", exact["failed"])]))
        logger.info("workload scale %g: eli reduction %.4g%%", scale,
                    rows[-1]["eli_reduction_pct"])
    return pd.DataFrame(rows)


def sweep_band(scenario, scales, options, serial_mode=False, processes=None):
    """Mean load index of the lower bound, the exact solution and the upper
    bound as the price band half-widths are scaled.
    """
    methods = (model.INTEGRATED, model.EXACT, model.RESTRICTED)
    rows = []
    for scale in scales:
        scaled = model.scale_price_band(scenario, scale)
        reports = solve_all(scaled, methods, options, serial_mode, processes)
        summary = summarize(scaled, reports)["methods"]
        row = collections.OrderedDict([("scale", float(scale))])
        for method in methods:
            row["eli_%s" % method] = summary[method]["mean_eli"]
        row["failed"] = sum(summary[m]["failed"] for m in methods)
        rows.append(row)
    return pd.DataFrame(rows)


def write_sweep(directory, frame):
    if not os.path.isdir(directory):
        os.makedirs(directory)
    frame.to_csv(os.path.join(directory, "sweep.csv"), index=False,
                 float_format=utils.FLOAT_FORMAT)
    series = collections.OrderedDict(
        ("sweep_%s" % column, ("scale", frame["scale"].values,
                               frame[column].values))
        for column in frame.columns if column not in ("scale", "failed"))
    write_series(directory, series)


def interior_peak(frame, column="eli_reduction_pct"):
    """Whether the column's maximum sits strictly inside the scale range."""
    k = int(np.nanargmax(frame[column].values))
    return 0 < k < len(frame) - 1


# Reduction check
# ============================================================


def check_reduction(scenario, settings=None):
    """Per-slot comparison of the integrated problem solved in energy space
    and over request rates and server counts.
    """
    rows = []
    for t in range(scenario.T):
        slot = model.reduce_to_energy_space(scenario, t)
        reduced = benchmarks.solve_integrated(slot).eli
        direct = benchmarks.solve_integrated_dispatch_space(scenario, t,
                                                            settings).eli
        rows.append(dict(slot=t, reduced=reduced, direct=direct,
                         relative_error=utils.relative_error(direct, reduced)))
    return rows


# Testing
# ============================================================


def test_manifest_checks():
    bad = RunManifest("x", methods=("exact", "magic", "robust"),
                      workload_scale=0.0)
    assert len(manifest_violations(bad)) == 3
    assert manifest_violations(RunManifest("x")) == []


def test_exit_code_precedence():
    ok = model.solve_report(0, model.EXACT, 1.0, 1.0)
    infeasible = model.failed_report(1, model.EXACT, ValueError("x"),
                                     INFEASIBLE)
    broken = model.failed_report(2, model.EXACT, ValueError("x"), SOLVER)
    assert exit_code([ok]) == EXIT_OK
    assert exit_code([ok, infeasible]) == EXIT_INFEASIBLE
    assert exit_code([ok, infeasible, broken]) == EXIT_SOLVER
