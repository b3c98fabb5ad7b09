"""Logs to summary, plot-data CSVs and PNG figures.

Plot data is binned along the arm so figures stay small regardless of how
many trials went in.
"""

from __future__ import annotations

import csv
import math
import os

from .calibration import CalibrationModel, SweepDataset
from .errors import ConfigError
from .harness import load_logs, report_contacts, summarize, write_summary

PROFILE_HEADER = ["scenario", "mode", "motion", "start_offset_cm", "x_bin_cm", "n",
                  "d_est_mean_cm", "d_est_std_cm", "true_mean_cm", "true_std_cm"]
CONTACT_HEADER = ["trial_id", "start_s", "duration_s", "peak_force_n"]
BIN_WIDTH = 2.0


def read_index(out_dir):
    path = os.path.join(out_dir, "trials.csv")
    if not os.path.exists(path):
        raise ConfigError(f"{out_dir} has no trials.csv index")
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


def _stats(vals):
    n = len(vals)
    mean = math.fsum(vals) / n
    return mean, math.sqrt(math.fsum((v - mean) ** 2 for v in vals) / n)


def profile_rows(logs, index, bin_width=BIN_WIDTH):
    """Per scenario and x bin: mean/std of the estimate and the true gap."""
    meta = {r["trial_id"]: r for r in index}
    cells = {}
    for tr in logs:
        m = meta[tr.trial_id]
        key = (tr.scenario, m["mode"], m["motion"], float(m["start_offset_cm"]))
        for s in tr.steps:
            b = math.floor(s.ee_x / bin_width) * bin_width + bin_width / 2
            cells.setdefault(key, {}).setdefault(b, []).append((s.d_estimate, s.true_distance))
    rows = []
    for key in sorted(cells):
        for b in sorted(cells[key]):
            pts = cells[key][b]
            est = _stats([p[0] for p in pts])
            true = _stats([p[1] for p in pts])
            rows.append([*key, b, len(pts), *est, *true])
    return rows


def write_rows(path, header, rows):
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([f"{v:.6f}" if isinstance(v, float) else v for v in row])


def build_report(logs_dir, out_dir=None, figures=True):
    """Write summary.csv, plot_profile.csv, contacts.csv and (optionally) figures.

    Returns the list of files written.
    """
    out_dir = out_dir or logs_dir
    os.makedirs(out_dir, exist_ok=True)
    index = read_index(logs_dir)
    logs = load_logs(logs_dir)
    written = []

    path = os.path.join(out_dir, "summary.csv")
    write_summary(summarize(logs), path)
    written.append(path)

    profile = profile_rows(logs, index)
    path = os.path.join(out_dir, "plot_profile.csv")
    write_rows(path, PROFILE_HEADER, profile)
    written.append(path)

    episodes = report_contacts(logs)
    path = os.path.join(out_dir, "contacts.csv")
    write_rows(path, CONTACT_HEADER, [[e.trial, e.start, e.duration, e.peak_force] for e in episodes])
    written.append(path)

    if figures:
        from . import plotting
        written += plotting.render_all(out_dir, profile, logs, index, _calibration(logs_dir))
    return written


def _calibration(logs_dir):
    sweep = os.path.join(logs_dir, "sweep.csv")
    model = os.path.join(logs_dir, "model.json")
    if not (os.path.exists(sweep) and os.path.exists(model)):
        return None
    return SweepDataset.from_csv(sweep), CalibrationModel.load(model)
