"""Figures for the report command.  Uses the Agg backend; nothing is shown on screen."""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .harness import BAND  # noqa: E402

colors = ["#08589e", "#2b8cbe", "#4eb3d3", "#7bccc4", "#e34a33"]

params = {
    "axes.prop_cycle": matplotlib.cycler(color=colors),
    "axes.labelsize": 10,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "font.size": 9,
    "legend.fontsize": 8,
    "legend.frameon": False,
    "xtick.labelsize": 9,
    "ytick.labelsize": 9,
    "figure.figsize": [6.0, 3.7],
    "figure.dpi": 120,
    "savefig.dpi": 150,
    "lines.linewidth": 1.2,
    "lines.markersize": 2,
}


def setup():
    matplotlib.rcParams.update(params)


def _save(fig, out_dir, name):
    path = os.path.join(out_dir, name)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def _profile_series(profile, mode, static=True):
    # profile rows: scenario, mode, motion, offset, x, n, est_mean, est_std, true_mean, true_std
    out = {}
    for r in profile:
        if r[1] != mode or (r[2] == "static") != static:
            continue
        out.setdefault((r[3], r[0]), []).append(r)
    return {k: np.array([row[4:] for row in v], dtype=float) for k, v in sorted(out.items())}


def plot_closed_loop(profile, out_dir):
    fig, ax = plt.subplots()
    ax.axhspan(*BAND, color="0.9", lw=0)
    for (offset, name), a in _profile_series(profile, "closed_loop").items():
        ax.plot(a[:, 0], a[:, 2], label=f"start {offset:g} cm")
        ax.fill_between(a[:, 0], a[:, 2] - a[:, 3], a[:, 2] + a[:, 3], alpha=0.15, lw=0)
    ax.set_xlabel("position along arm (cm)")
    ax.set_ylabel("estimated distance (cm)")
    ax.legend(ncol=2)
    return _save(fig, out_dir, "fig_closed_loop.png")


def plot_open_loop(profile, out_dir):
    fig, ax = plt.subplots()
    for (offset, name), a in _profile_series(profile, "open_loop").items():
        ax.plot(a[:, 0], a[:, 4], label=f"start {offset:g} cm")
    ax.axhline(5.0, color="0.5", ls="--", lw=0.8)
    ax.set_xlabel("position along arm (cm)")
    ax.set_ylabel("true gap to arm (cm)")
    ax.legend(ncol=2)
    return _save(fig, out_dir, "fig_open_loop.png")


def plot_motion(logs, index, out_dir):
    """True gap and estimate against time for the first motion trial."""
    moving = {r["trial_id"] for r in index if r["motion"] != "static"}
    trial = next((tr for tr in logs if tr.trial_id in moving), None)
    if trial is None:
        return None
    fig, ax = plt.subplots()
    ax.axhspan(*BAND, color="0.9", lw=0)
    ax.plot(trial.column("t"), trial.column("true_distance"), label="true gap")
    ax.plot(trial.column("t"), trial.column("d_estimate"), label="estimate", color=colors[4])
    ax.set_xlabel("time (s)")
    ax.set_ylabel("distance (cm)")
    ax.set_title(trial.trial_id, fontsize=9)
    ax.legend()
    return _save(fig, out_dir, "fig_motion.png")


def plot_calibration(sweep, model, out_dir, max_points=3000):
    keep = sweep.in_range(model.range_max)
    dc, d = sweep.delta_c[keep], sweep.distance[keep]
    step = max(1, len(dc) // max_points)
    fig, ax = plt.subplots()
    ax.plot(dc[::step], d[::step], ".", color="0.6", alpha=0.5, label="sweep")
    grid = np.linspace(0.0, max(dc.max(), 1.0), 400)
    ax.plot(grid, model.predict(grid), color=colors[4],
            label=f"fit  a={model.alpha:.2f}  b={model.beta:.3f}  R2={model.r_squared:.3f}")
    ax.set_xlabel("delta C (counts)")
    ax.set_ylabel("distance (cm)")
    ax.set_ylim(0, model.range_max * 1.05)
    ax.legend()
    return _save(fig, out_dir, "fig_calibration.png")


def render_all(out_dir, profile, logs, index, calibration=None):
    setup()
    paths = [plot_closed_loop(profile, out_dir), plot_open_loop(profile, out_dir),
             plot_motion(logs, index, out_dir)]
    if calibration is not None:
        paths.append(plot_calibration(*calibration, out_dir))
    return [p for p in paths if p]
