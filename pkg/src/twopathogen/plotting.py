"""PNG figures for the report path, rendered off-screen from report tables."""

from __future__ import annotations

from pathlib import Path

import numpy as np
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure

from .observation import THETA_NAMES

COLORS = {"p1": "#d95f02", "p2": "#1b9e77", "data": "#7570b3", "fit": "k"}
WIDTH = 6.0
# no timestamps or version strings in the files, so reruns are byte-identical
_PNG_META = {"Software": None}


def _figure(nrows=1, ncols=1, aspect=0.6):
    fig = Figure(figsize=(WIDTH, WIDTH * aspect))
    FigureCanvasAgg(fig)
    axes = fig.subplots(nrows, ncols, squeeze=False)
    for ax in axes.flat:
        ax.spines["top"].set_visible(False)
        ax.spines["right"].set_visible(False)
    return fig, axes


def _save(fig, path) -> Path:
    path = Path(path)
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata=_PNG_META)
    return path


def plot_replacement(report: dict, path) -> Path:
    rn = report["replacement_numbers"]
    fig, axes = _figure()
    ax = axes[0, 0]
    ax.plot(rn["t_days"], rn["r1"], color=COLORS["p1"], label="$R_1$")
    ax.plot(rn["t_days"], rn["r2"], color=COLORS["p2"], label="$R_2$")
    ax.axhline(1.0, color="0.6", lw=0.5)
    for t in rn["crossover_times"]:
        ax.axvline(t, color="0.4", lw=0.5, ls="--")
    ax.set_xlabel("days since season start")
    ax.set_ylabel("replacement number")
    ax.legend(frameon=False)
    return _save(fig, path)


def plot_incidence(report: dict, path) -> Path:
    inc = report["incidence"]
    edges = np.asarray(inc["week_edges_days"])
    mid = 0.5 * (edges[:-1] + edges[1:])
    fig, axes = _figure()
    ax = axes[0, 0]
    ax.bar(mid, inc["observed"], width=0.8 * np.diff(edges), color=COLORS["data"],
           alpha=0.5, label="observed")
    ax.plot(mid, inc["map_expected"], color=COLORS["fit"], marker="o", ms=3, label="MAP expected")
    ax.set_xlabel("days since season start")
    ax.set_ylabel("weekly count")
    ax.legend(frameon=False)
    return _save(fig, path)


def plot_states(report: dict, path) -> Path:
    traj = report["map_trajectory"]
    states = np.asarray(traj["states"])
    fig, axes = _figure()
    ax = axes[0, 0]
    for j, name in enumerate(traj["compartments"]):
        if j == 0:
            continue    # X_SS dwarfs the rest
        ax.plot(traj["t_days"], states[:, j], lw=1, label=name)
    ax.set_xlabel("days since season start")
    ax.set_ylabel("individuals")
    ax.legend(frameon=False, ncol=2, fontsize=7)
    return _save(fig, path)


def plot_histograms(histograms: dict, path) -> Path:
    fig, axes = _figure(3, 3, aspect=0.9)
    for ax, name in zip(axes.flat, THETA_NAMES):
        bins = histograms[name]
        lo = np.array([b["lo"] for b in bins])
        hi = np.array([b["hi"] for b in bins])
        ax.bar(lo, [b["count"] for b in bins], width=hi - lo, align="edge",
               color=COLORS["data"], lw=0)
        ax.set_title(name, fontsize=8)
        ax.tick_params(labelsize=6)
        ax.set_yticks([])
    return _save(fig, path)


def report_figures(report: dict, histograms: dict, out_dir) -> list[Path]:
    out_dir = Path(out_dir)
    return [plot_incidence(report, out_dir / "incidence.png"),
            plot_replacement(report, out_dir / "replacement.png"),
            plot_states(report, out_dir / "states.png"),
            plot_histograms(histograms, out_dir / "histograms.png")]
