"""Figures from the series written by a run or a sweep."""

from __future__ import division
from __future__ import absolute_import

import glob
import logging
import os

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import pandas as pd


logger = logging.getLogger(__name__)


# (file name, title, y label, series names)
FIGURES = [
    ("bounds.png", "Load index and its bounds", "ELI",
     ["eli_integrated", "eli_exact", "eli_restricted"]),
    ("optimal_vs_heuristic.png", "Optimal and heuristic load index", "ELI",
     ["eli_exact", "eli_heuristic"]),
    ("eli_comparison.png", "Load index against base pricing", "ELI",
     ["eli_base-price", "eli_exact"]),
    ("cost_comparison.png", "Data center energy cost", "cost",
     ["cost_base-price", "cost_exact"]),
    ("prediction_error.png", "Load index under background-load error", "ELI",
     ["eli_robust", "replay_robust_max", "replay_nominal_max"]),
    ("load_distribution.png", "Load at the busiest slot", "MWh",
     ["load_background", "load_base-price_total", "load_exact_total"]),
    ("workload_sweep.png", "Load index reduction over workload scale", "%",
     ["sweep_eli_reduction_pct"]),
    ("band_sweep.png", "Load index over price band scale", "ELI",
     ["sweep_eli_integrated", "sweep_eli_exact", "sweep_eli_restricted"]),
]


def read_series(directory):
    """name -> DataFrame for every series file under directory/series."""
    out = {}
    for path in sorted(glob.glob(os.path.join(directory, "series", "*.csv"))):
        name = os.path.splitext(os.path.basename(path))[0]
        out[name] = pd.read_csv(path, float_precision="round_trip")
    return out


def _plot_lines(ax, series, names):
    for name in names:
        frame = series[name]
        x = frame.columns[0]
        style = "o-" if x == "location" else "-"
        ax.plot(frame[x].values, frame["value"].values, style, label=name)
    ax.set_xlabel(series[names[0]].columns[0])
    ax.legend()


def _price_groups(series):
    groups = {}
    for name in series:
        if name.startswith("price_"):
            method = name[len("price_"):].rsplit("_", 1)[0]
            groups.setdefault(method, []).append(name)
    return groups


def plot_reports(directory, out=None):
    """Render every figure whose series exist. Returns the written paths."""
    if out is None:
        out = directory
    if not os.path.isdir(out):
        os.makedirs(out)
    series = read_series(directory)
    written = []

    figures = list(FIGURES)
    for method, names in sorted(_price_groups(series).items()):
        figures.append(("prices_%s.png" % method, "Unit prices, %s" % method,
                        "price", sorted(names)))

    for filename, title, ylabel, names in figures:
        present = [n for n in names if n in series]
        if not present:
            continue
        fig, ax = plt.subplots()
        _plot_lines(ax, series, present)
        ax.set_title(title)
        ax.set_ylabel(ylabel)
        path = os.path.join(out, filename)
        fig.savefig(path)
        plt.close(fig)
        written.append(path)
        logger.debug("wrote %s", path)
    return written
