from __future__ import division
from __future__ import absolute_import

import json
import os
import shutil

import numpy as np
import pandas as pd
import pytest

import gridprice.core.utils as utils
import gridprice.grid.model as model
import gridprice.grid.bilevel as bilevel
import gridprice.experiments.scenario_io as scenario_io
import gridprice.experiments.synth as synth
import gridprice.experiments.run as run_mod
import gridprice.experiments.cli as cli


def _default_dir():
    return os.path.dirname(scenario_io.default_scenario_path())


def _copy_default(tmp_path):
    target = str(tmp_path / "scenario")
    shutil.copytree(_default_dir(), target)
    return target


def _edit_trace(directory, name, slot, location, value):
    path = os.path.join(directory, name + ".csv")
    frame = pd.read_csv(path, dtype={"location": str},
                        float_precision="round_trip")
    mask = (frame["slot"] == slot) & (frame["location"] == str(location))
    frame.loc[mask, "value"] = value
    frame.to_csv(path, index=False)


def _small_scenario(**kwargs):
    config = dict(n=2, T=3, seed=1)
    config.update(kwargs)
    return synth.synth_scenario(synth.SynthConfig(**config))


def _options(**overrides):
    kwargs = dict(price_shift=True, uncertainty=None, freeze_box=False,
                  seed=0, replay_count=200)
    kwargs.update(overrides)
    return run_mod.CellOptions(**kwargs)


# Scenario files
# ============================================================


def test_default_scenario_every_slot_feasible():
    scenario = scenario_io.load_scenario(_default_dir())
    assert (scenario.N, scenario.T) == (4, 24)
    for t in range(scenario.T):
        model.reduce_to_energy_space(scenario, t)


def test_background_above_capacity_is_named(tmp_path):
    directory = _copy_default(tmp_path)
    _edit_trace(directory, "background_load", 3, 1, 1e4)
    with pytest.raises(model.ScenarioValidationError) as info:
        scenario_io.load_scenario(directory)
    assert any("i=1, t=3" in v and "capacity" in v
               for v in info.value.violations)


def test_delay_beyond_bound_cites_qos(tmp_path):
    directory = _copy_default(tmp_path)
    _edit_trace(directory, "transmission_delay", 5, 2, 0.06)
    with pytest.raises(model.ScenarioValidationError) as info:
        scenario_io.load_scenario(directory)
    assert any("i=2, t=5" in v and "QoS" in v for v in info.value.violations)


def test_all_trace_problems_reported(tmp_path):
    directory = _copy_default(tmp_path)
    path = os.path.join(directory, "base_price.csv")
    frame = pd.read_csv(path, dtype={"location": str})
    frame = frame[~((frame["slot"] == 2) & (frame["location"] == "0"))].copy()
    frame["value"] = frame["value"].astype(object)
    frame.loc[frame.index[0], "value"] = "cheap"
    frame.to_csv(path, index=False)
    with pytest.raises(model.ScenarioValidationError) as info:
        scenario_io.load_scenario(directory)
    messages = info.value.violations
    assert any("no entry for i=0, t=2" in v for v in messages)
    assert any("line 2" in v and "not a number" in v for v in messages)


def test_bad_header_is_a_parse_error(tmp_path):
    directory = _copy_default(tmp_path)
    with open(os.path.join(directory, "workload.csv"), "w") as f:
        f.write("t,where,value\n0,all,1.0\n")
    with pytest.raises(scenario_io.ScenarioParseError):
        scenario_io.load_scenario(directory)


def test_bad_json_is_a_parse_error(tmp_path):
    directory = _copy_default(tmp_path)
    with open(os.path.join(directory, "scenario.json"), "w") as f:
        f.write("{not json")
    with pytest.raises(scenario_io.ScenarioParseError):
        scenario_io.load_scenario(directory)


def test_units_are_normalised(tmp_path):
    directory = _copy_default(tmp_path)
    path = os.path.join(directory, "scenario.json")
    with open(path) as f:
        config = json.load(f)
    config["units"]["currency"] = "cents"
    with open(path, "w") as f:
        json.dump(config, f)
    prices = pd.read_csv(os.path.join(directory, "base_price.csv"))
    prices["value"] = prices["value"] * 100.0
    prices.to_csv(os.path.join(directory, "base_price.csv"), index=False)

    reference = scenario_io.load_scenario(_default_dir())
    scenario = scenario_io.load_scenario(directory)
    assert np.allclose(scenario.pricing.base_price,
                       reference.pricing.base_price, rtol=1e-12, atol=0.0)
    # Sensitivity is per MWh squared: cents scale it too.
    assert np.allclose(scenario.pricing.sensitivity,
                       reference.pricing.sensitivity / 100.0, rtol=1e-12)


def test_scenario_write_read(tmp_path):
    scenario = _small_scenario()
    scenario_io.write_scenario(scenario, str(tmp_path))
    back = scenario_io.load_scenario(str(tmp_path))
    assert np.array_equal(back.pricing.base_price, scenario.pricing.base_price)
    assert np.array_equal(back.grid.background_load,
                          scenario.grid.background_load)
    assert np.array_equal(back.workload, scenario.workload)
    assert np.allclose(back.pricing.price_floor, scenario.pricing.price_floor,
                       rtol=1e-15)


# Synthetic scenarios
# ============================================================


def test_synth_files_are_byte_identical(tmp_path):
    config = synth.SynthConfig(seed=42)
    for name in ("a", "b"):
        scenario_io.write_scenario(synth.synth_scenario(config),
                                   str(tmp_path / name),
                                   synth.provenance(config))
    for name in os.listdir(str(tmp_path / "a")):
        with open(str(tmp_path / "a" / name), "rb") as f:
            a = f.read()
        with open(str(tmp_path / "b" / name), "rb") as f:
            b = f.read()
        assert a == b, name


def test_synth_default_every_slot_feasible():
    scenario = synth.synth_scenario(synth.SynthConfig(seed=7))
    for t in range(scenario.T):
        model.reduce_to_energy_space(scenario, t)


def test_synth_single_site():
    scenario = synth.synth_scenario(synth.SynthConfig(n=1, T=2))
    slot = model.reduce_to_energy_space(scenario, 0)
    result = bilevel.solve_exact(slot)
    utils.assert_almost_equal(result.e[0], slot.E_total / slot.theta[0], 1e-8)
    assert result.diagnostics["nodes"] <= 5


def test_synth_rejects_empty():
    with pytest.raises(ValueError):
        synth.synth_scenario(synth.SynthConfig(n=0))


# Runs
# ============================================================


def test_cells_sandwich_and_order_independence():
    scenario = _small_scenario()
    methods = (model.INTEGRATED, model.RESTRICTED, model.EXACT,
               model.BASE_PRICE)
    reports = run_mod.solve_all(scenario, methods, _options(),
                                serial_mode=True)
    assert len(reports) == scenario.T * len(methods)
    table = dict(((r.slot, r.method), r) for r in reports)
    for t in range(scenario.T):
        pi = table[t, model.INTEGRATED]
        exact = table[t, model.EXACT]
        assert exact.error is None
        assert pi.eli <= exact.eli + 1e-6
        rs = table[t, model.RESTRICTED]
        if rs.error is None:
            assert exact.eli <= rs.eli + 1e-6

    # Reversed slot order gives the same cells.
    for t in reversed(range(scenario.T)):
        again = run_mod.solve_cell(scenario, t, model.EXACT, _options())
        assert again.eli == table[t, model.EXACT].eli
        assert np.array_equal(again.s, table[t, model.EXACT].s)


def test_repeated_runs_are_bitwise_identical():
    scenario = _small_scenario()
    methods = (model.EXACT, model.HEURISTIC)
    first = run_mod.solve_all(scenario, methods, _options(), serial_mode=True)
    second = run_mod.solve_all(scenario, methods, _options(),
                               serial_mode=True)
    for a, b in zip(first, second):
        assert a.eli == b.eli
        assert np.array_equal(a.s, b.s)
        assert np.array_equal(a.e, b.e)


def test_price_shift_keeps_load_index():
    scenario = _small_scenario()
    shifted = run_mod.solve_cell(scenario, 0, model.EXACT, _options())
    plain = run_mod.solve_cell(scenario, 0, model.EXACT,
                               _options(price_shift=False))
    assert shifted.eli == plain.eli
    assert np.all(shifted.price <= plain.price + 1e-9)
    assert shifted.total_cost <= plain.total_cost + 1e-9


def test_failed_cell_does_not_stop_run():
    scenario = _small_scenario()
    workload = np.array(scenario.workload)
    workload[1] *= 10.0
    scenario = scenario._replace(workload=utils.freeze(workload))
    reports = run_mod.solve_all(scenario, (model.INTEGRATED,), _options(),
                                serial_mode=True)
    assert [r.error_kind for r in reports] == \
        [None, run_mod.INFEASIBLE, None]
    assert run_mod.exit_code(reports) == run_mod.EXIT_INFEASIBLE
    summary = run_mod.summarize(scenario, reports)
    assert summary["failures"][0]["slot"] == 1


def test_robust_cells_keep_their_guarantee():
    scenario = _small_scenario()
    reports = run_mod.solve_all(scenario, (model.ROBUST,),
                                _options(uncertainty=0.1, freeze_box=True),
                                serial_mode=True)
    for r in reports:
        assert r.error is None
        assert r.diagnostics["robust_exceed"] == 0


def test_reports_round_trip(tmp_path):
    directory = str(tmp_path / "scenario")
    scenario_io.write_scenario(_small_scenario(), directory)
    out = str(tmp_path / "out")
    manifest = run_mod.RunManifest(
        directory, methods=(model.EXACT, model.BASE_PRICE), out=out,
        deterministic=True)
    result = run_mod.run(manifest)

    frame = run_mod.read_slots(os.path.join(out, "slots.csv"))
    assert frame["eli"].tolist() == [r.eli for r in result.reports]
    assert frame["total_cost"].tolist() == [r.total_cost for r in result.reports]
    exact = [r for r in result.reports if r.method == model.EXACT]
    rows = frame[frame["method"] == model.EXACT]
    assert rows["s_0"].tolist() == [r.s[0] for r in exact]
    assert np.all(np.isnan(frame[frame["method"] == model.BASE_PRICE]["s_0"]))

    series = pd.read_csv(os.path.join(out, "series", "eli_exact.csv"),
                         float_precision="round_trip")
    assert list(series.columns) == ["slot", "value"]
    assert series["value"].tolist() == [r.eli for r in exact]

    with open(os.path.join(out, "summary.json")) as f:
        summary = json.load(f)
    assert summary["methods"]["exact"]["mean_eli"] == \
        result.summary["methods"]["exact"]["mean_eli"]


def test_check_reduction_small():
    rows = run_mod.check_reduction(_small_scenario())
    assert all(row["relative_error"] <= run_mod.REDUCTION_TOL for row in rows)


# Command line
# ============================================================


def test_parse_range():
    scales = cli.parse_range("0.6:1.4:0.1")
    assert len(scales) == 9
    assert scales[0] == 0.6 and scales[-1] == 1.4


def test_cli_validate():
    assert cli.main(["validate", _default_dir()]) == 0


def test_cli_validate_broken(tmp_path):
    directory = _copy_default(tmp_path)
    _edit_trace(directory, "background_load", 0, 0, -1.0)
    assert cli.main(["validate", directory]) == 2


def test_cli_unknown_method():
    assert cli.main(["run", "--methods", "magic"]) == 2


def test_cli_bad_arguments():
    assert cli.main(["sweep", "--range", "1:0:0.1"]) == 2


def test_cli_synth_run_plot(tmp_path):
    directory = str(tmp_path / "scenario")
    out = str(tmp_path / "out")
    assert cli.main(["synth", "--seed", "3", "--sites", "2", "--slots", "2",
                     "--out", directory]) == 0
    assert cli.main(["run", "--scenario", directory, "--methods",
                     "integrated,exact,base-price", "--deterministic",
                     "--out", out]) == 0
    assert os.path.exists(os.path.join(out, "slots.csv"))
    status = cli.main(["plot", out])
    assert status == 0
    assert os.path.exists(os.path.join(out, "eli_comparison.png"))


# Acceptance on the shipped scenario
# ============================================================


@pytest.mark.slow
def test_default_pipeline():
    scenario = scenario_io.load_scenario(_default_dir())
    methods = (model.INTEGRATED, model.RESTRICTED, model.EXACT,
               model.HEURISTIC, model.BASE_PRICE)
    reports = run_mod.solve_all(scenario, methods, _options())
    table = dict(((r.slot, r.method), r) for r in reports)
    assert all(r.error is None for r in reports
               if r.method in (model.EXACT, model.BASE_PRICE))

    for t in range(scenario.T):
        exact = table[t, model.EXACT]
        base = table[t, model.BASE_PRICE]
        assert exact.eli <= base.eli + 1e-9
        assert exact.eli >= exact.lower_bound - 1e-6
        rs = table[t, model.RESTRICTED]
        if rs.error is None:
            assert exact.eli - exact.lower_bound <= \
                rs.eli - exact.lower_bound + 1e-6
        heur = table[t, model.HEURISTIC]
        assert heur.eli <= 1.05 * exact.eli
        utils.assert_nonincreasing(heur.diagnostics["trace_eli"], 1e-12)

    summary = run_mod.summarize(scenario, reports)["methods"]
    assert summary[model.EXACT]["eli_reduction_pct"] > 0
    assert summary[model.EXACT]["cost_reduction_pct"] > 0
    assert summary[model.EXACT]["gap_to_lower_bound_pct"] >= 0


@pytest.mark.slow
@pytest.mark.parametrize("freeze_box", [False, True])
def test_default_robust_guarantee(freeze_box):
    scenario = scenario_io.load_scenario(_default_dir())
    options = _options(uncertainty=0.1, freeze_box=freeze_box,
                       replay_count=1000)
    reports = run_mod.solve_all(scenario, (model.ROBUST,), options)
    for r in reports:
        assert r.error is None
        assert r.diagnostics["robust_exceed"] == 0
        assert r.diagnostics["robust_max"] <= r.eli + 1e-9


@pytest.mark.slow
def test_default_workload_sweep_peaks_inside():
    scenario = scenario_io.load_scenario(_default_dir())
    frame = run_mod.sweep_workload(scenario, run_mod.WORKLOAD_SCALES,
                                   _options())
    assert run_mod.interior_peak(frame)


@pytest.mark.slow
def test_default_reduction_check():
    scenario = scenario_io.load_scenario(_default_dir())
    for row in run_mod.check_reduction(scenario):
        assert row["relative_error"] <= run_mod.REDUCTION_TOL
