"""Command line interface.

    gridprice validate SCENARIO [--check-reduction]
    gridprice synth --seed 42 --out DIR
    gridprice run --scenario SCENARIO --methods exact,base-price --out DIR
    gridprice sweep --scenario SCENARIO --range 0.6:1.4:0.1 --out DIR
    gridprice plot DIR

Exit codes: 0 success, 2 invalid scenario or arguments, 3 an infeasible
cell, 4 a solver error.
"""

from __future__ import division
from __future__ import absolute_import

import argparse
import logging
import sys

import numpy as np

import gridprice.grid.model as model
import gridprice.experiments.scenario_io as scenario_io
import gridprice.experiments.synth as synth
import gridprice.experiments.run as run_mod
import gridprice.experiments.plots as plots


logger = logging.getLogger(__name__)


def configure_logging(verbose):
    """One stderr handler on the package logger."""
    level = logging.DEBUG if verbose else logging.WARNING
    package = logging.getLogger("gridprice")
    package.setLevel(level)
    package.propagate = False
    for handler in list(package.handlers):
        package.removeHandler(handler)
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
    package.addHandler(handler)


def parse_range(text):
    """'lo:hi:step' -> list of floats from lo to hi inclusive."""
    try:
        lo, hi, step = [float(x) for x in text.split(":")]
    except ValueError:
        raise argparse.ArgumentTypeError("expected lo:hi:step, got %r" % text)
    if not (step > 0 and hi >= lo):
        raise argparse.ArgumentTypeError("empty range %r" % text)
    count = int(np.floor((hi - lo) / step + 1e-9)) + 1
    return [float(x) for x in np.round(lo + step * np.arange(count), 10)]


def parse_methods(text):
    return tuple(m.strip() for m in text.split(",") if m.strip())


def build_parser():
    parser = argparse.ArgumentParser(
        prog="gridprice",
        description="Tiered electricity pricing for geo-distributed data "
        "centers: load balancing experiments.")
    parser.add_argument("--verbose", "-v", action="store_true",
                        help="debug logging on stderr")
    sub = parser.add_subparsers(dest="command")

    validate = sub.add_parser("validate", help="check a scenario")
    validate.add_argument("scenario", help="scenario.json or its directory")
    validate.add_argument("--check-reduction", action="store_true",
                          help="compare the energy-space lower bound with "
                          "the dispatch-space one in every slot")

    gen = sub.add_parser("synth", help="write a synthetic scenario")
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", required=True, help="output directory")
    gen.add_argument("--sites", type=int, default=4)
    gen.add_argument("--slots", type=int, default=24)
    gen.add_argument("--noise", type=float, default=1.0,
                     help="noise scale, 0 for smooth curves")

    def add_common(p):
        p.add_argument("--scenario", default=scenario_io.default_scenario_path(),
                       help="scenario.json or its directory (default: the "
                       "shipped scenario)")
        p.add_argument("--out", default=None, help="report directory")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--no-price-shift", dest="price_shift",
                       action="store_false",
                       help="report references as solved instead of the "
                       "lowest-price equivalent ones")
        p.add_argument("--deterministic", action="store_true",
                       help="solve cells one after another in this process")
        p.add_argument("--processes", type=int, default=None)

    solve = sub.add_parser("run", help="solve every slot with each method")
    add_common(solve)
    solve.add_argument("--methods", type=parse_methods,
                       default=run_mod.DEFAULT_METHODS,
                       help="comma separated, from %s"
                       % ", ".join(model.METHODS))
    solve.add_argument("--workload-scale", type=float, default=1.0)
    solve.add_argument("--uncertainty", type=float, default=None,
                       help="relative background-load error bound; adds "
                       "the robust method")
    solve.add_argument("--wcp-freeze-box", action="store_true",
                       help="keep the data centers' supply cap at its "
                       "nominal value in the worst case")
    solve.add_argument("--replay-count", type=int, default=1000)
    solve.add_argument("--focus-slot", type=int, default=None,
                       help="slot of the load distribution series")

    sweep = sub.add_parser("sweep", help="sweep workload or price band scale")
    add_common(sweep)
    sweep.add_argument("--kind", choices=["workload", "band"],
                       default="workload")
    sweep.add_argument("--range", dest="scales", type=parse_range,
                       default=list(run_mod.WORKLOAD_SCALES))

    plot = sub.add_parser("plot", help="render figures from a report "
                          "directory")
    plot.add_argument("directory")
    plot.add_argument("--out", default=None)
    return parser


# Commands
# ============================================================


def cmd_validate(args):
    scenario = scenario_io.load_scenario(args.scenario)
    for t in range(scenario.T):
        model.reduce_to_energy_space(scenario, t)
    print("%s: %d data centers, %d slots, every slot feasible"
          % (scenario.name, scenario.N, scenario.T))
    if not args.check_reduction:
        return run_mod.EXIT_OK

    status = run_mod.EXIT_OK
    for row in run_mod.check_reduction(scenario):
        print("slot %(slot)d: energy space %(reduced).10g, dispatch space "
              "%(direct).10g, relative error %(relative_error).2e" % row)
        if row["relative_error"] > run_mod.REDUCTION_TOL:
            logger.error("slot %d: reduction check failed", row["slot"])
            status = run_mod.EXIT_SOLVER
    return status


def cmd_synth(args):
    config = synth.SynthConfig(n=args.sites, T=args.slots, seed=args.seed,
                               noise=args.noise)
    scenario = synth.synth_scenario(config)
    path = scenario_io.write_scenario(scenario, args.out,
                                      synth.provenance(config))
    print(path)
    return run_mod.EXIT_OK


def cmd_run(args):
    methods = args.methods
    if args.uncertainty is not None and model.ROBUST not in methods:
        methods = methods + (model.ROBUST,)
    manifest = run_mod.RunManifest(
        scenario=args.scenario, methods=methods,
        workload_scale=args.workload_scale, uncertainty=args.uncertainty,
        seed=args.seed, out=args.out, price_shift=args.price_shift,
        deterministic=args.deterministic, freeze_box=args.wcp_freeze_box,
        replay_count=args.replay_count, focus_slot=args.focus_slot,
        processes=args.processes)
    result = run_mod.run(manifest)
    for method, entry in result.summary["methods"].items():
        line = "%-11s mean eli %.6g" % (method, entry["mean_eli"])
        if "eli_reduction_pct" in entry:
            line += ", eli reduction %.3g%%, cost reduction %.3g%%" % (
                entry["eli_reduction_pct"], entry["cost_reduction_pct"])
        if entry["failed"]:
            line += ", %d failed" % entry["failed"]
        print(line)
    return result.summary["exit_code"]


def cmd_sweep(args):
    scenario = scenario_io.load_scenario(args.scenario)
    options = run_mod.CellOptions(price_shift=args.price_shift,
                                  uncertainty=None, freeze_box=False,
                                  seed=args.seed, replay_count=1)
    sweep = run_mod.sweep_workload if args.kind == "workload" \
        else run_mod.sweep_band
    frame = sweep(scenario, args.scales, options, args.deterministic,
                  args.processes)
    if args.out is not None:
        run_mod.write_sweep(args.out, frame)
    print(frame.to_string(index=False))
    return run_mod.EXIT_OK


def cmd_plot(args):
    for path in plots.plot_reports(args.directory, args.out):
        print(path)
    return run_mod.EXIT_OK


COMMANDS = dict(validate=cmd_validate, synth=cmd_synth, run=cmd_run,
                sweep=cmd_sweep, plot=cmd_plot)


def main(argv=None):
    """Run the command line and return the exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exit:
        return run_mod.EXIT_VALIDATION if exit.code else run_mod.EXIT_OK
    if args.command is None:
        parser.print_help()
        return run_mod.EXIT_VALIDATION
    configure_logging(args.verbose)

    try:
        return COMMANDS[args.command](args)
    except (model.ScenarioValidationError,
            scenario_io.ScenarioParseError) as error:
        for line in getattr(error, "violations", [str(error)]):
            logger.error("%s", line)
        return run_mod.EXIT_VALIDATION
    except run_mod.INFEASIBLE_ERRORS as error:
        logger.error("%s", error)
        return run_mod.EXIT_INFEASIBLE
    except run_mod.SOLVER_ERRORS as error:
        logger.error("%s", error)
        return run_mod.EXIT_SOLVER
    except ValueError as error:
        logger.error("%s", error)
        return run_mod.EXIT_VALIDATION


def console_main():
    sys.exit(main())


if __name__ == "__main__":
    console_main()
