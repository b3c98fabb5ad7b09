"""Command line entry point: ``capprox <command> [options]``.

Commands
--------
calibrate   sweep the calibration subject, write sweep.csv and model.json
fit         fit a model from a sweep CSV
trial       run one scenario for one subject, write its log CSV
matrix      run the full evaluation, write logs, index, summary and model
report      turn a matrix output directory into summary, plot data and figures
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import os
import sys
import time

from . import __version__
from .calibration import SweepDataset, evaluate_fit, fit_model
from .config import build_model, calibration_sweep, load_config
from .errors import IO_EXIT_CODE, CapproxError, ConfigError
from .harness import Mode, _run_one, export_csv, run_matrix, trial_seed
from .report import build_report

log = logging.getLogger("capprox")

CONTROLLER_FLAGS = ("kp", "kd", "d_desired", "x_step", "force_limit", "z_rate_limit",
                    "command_mode")


def _common(parser, suppress):
    default = argparse.SUPPRESS if suppress else None
    parser.add_argument("--seed", type=int, default=default, help="master seed (overrides config)")
    parser.add_argument("--config", default=default, help="YAML config file")
    parser.add_argument("--out", default=default,
                        help="output directory (default: out; report defaults to the logs dir)")
    parser.add_argument("-v", "--verbose", action="store_true",
                        default=argparse.SUPPRESS if suppress else False)
    g = parser.add_argument_group("controller overrides")
    for name in CONTROLLER_FLAGS:
        kind = str if name == "command_mode" else float
        g.add_argument("--" + name.replace("_", "-"), dest=name, type=kind, default=default)


def build_parser():
    parser = argparse.ArgumentParser(prog="capprox", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"capprox {__version__}")
    _common(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    def add(name, help):
        p = sub.add_parser(name, help=help)
        _common(p, suppress=True)
        return p

    p = add("calibrate", "sweep the calibration subject and fit a model")
    p.add_argument("--locations", type=int, help="sweep locations along the arm")
    p.add_argument("--jitter", type=float, help="surface height jitter (cm)")

    p = add("fit", "fit a model from a sweep CSV")
    p.add_argument("csv", help="sweep CSV (t_s,location_x_cm,delta_c,distance_cm,subject_id)")
    p.add_argument("--range-max", type=float, default=10.0)

    p = add("trial", "run one scenario")
    p.add_argument("scenario", help="scenario name from the config")
    p.add_argument("--subject", type=int, default=0)
    p.add_argument("--rep", type=int, default=0)
    p.add_argument("--start-offset", type=float, help="override the scenario start height (cm)")
    p.add_argument("--mode", choices=[m.value for m in Mode])

    p = add("matrix", "run the evaluation matrix")
    p.add_argument("--subjects", type=int)
    p.add_argument("--reps", type=int)
    p.add_argument("--model", help="fitted, reference or a model.json path")
    p.add_argument("--only", action="append", metavar="SCENARIO",
                   help="restrict to these scenarios (repeatable)")
    p.add_argument("--jobs", type=int, default=1, help="worker processes")
    p.add_argument("--report", action="store_true", help="also write plot data and figures")

    p = add("report", "summary, plot data and figures from matrix output")
    p.add_argument("logs", help="directory written by 'matrix'")
    p.add_argument("--no-figures", action="store_true")
    return parser


def resolve_config(args):
    config = load_config(args.config)
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    ctrl = {k: getattr(args, k) for k in CONTROLLER_FLAGS if getattr(args, k, None) is not None}
    if ctrl:
        try:
            changes["controller"] = dataclasses.replace(config.controller, **ctrl)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc
    for attr, key in (("subjects", "subjects"), ("reps", "repetitions"), ("model", "model"),
                      ("locations", "n_locations"), ("jitter", "surface_jitter")):
        if getattr(args, attr, None) is not None:
            changes[key] = getattr(args, attr)
    only = getattr(args, "only", None)
    if only:
        known = {s.name for s in config.scenarios}
        missing = sorted(set(only) - known)
        if missing:
            raise ConfigError(f"unknown scenario(s): {', '.join(missing)}")
        changes["scenarios"] = [s for s in config.scenarios if s.name in only]
    return dataclasses.replace(config, **changes) if changes else config


def _makedirs(path):
    os.makedirs(path, exist_ok=True)
    return path


def cmd_calibrate(args, config):
    out = _makedirs(args.out)
    sweep = calibration_sweep(config)
    model = fit_model(sweep)
    sweep.to_csv(os.path.join(out, "sweep.csv"))
    model.save(os.path.join(out, "model.json"))
    print(f"alpha={model.alpha:.4f} beta={model.beta:.4f} r_squared={model.r_squared:.4f} "
          f"n={model.n_samples}")


def cmd_fit(args, config):
    try:
        data = SweepDataset.from_csv(args.csv)
    except OSError as exc:
        raise ConfigError(f"cannot read {args.csv}: {exc}") from exc
    except (ValueError, KeyError, IndexError) as exc:
        raise ConfigError(f"malformed sweep CSV {args.csv}: {exc}") from exc
    model = fit_model(data, range_max=args.range_max)
    out = _makedirs(args.out)
    model.save(os.path.join(out, "model.json"))
    ev = evaluate_fit(model, data)
    print(f"alpha={model.alpha:.4f} beta={model.beta:.4f} r_squared={model.r_squared:.4f} "
          f"n={model.n_samples} rmse={ev.rmse:.4f}")


def cmd_trial(args, config):
    by_name = {s.name: s for s in config.scenarios}
    if args.scenario not in by_name:
        raise ConfigError(f"unknown scenario {args.scenario!r}; have {', '.join(sorted(by_name))}")
    scenario = by_name[args.scenario]
    if args.start_offset is not None:
        scenario = dataclasses.replace(scenario, start_offset=args.start_offset)
    if args.mode:
        scenario = dataclasses.replace(scenario, mode=Mode(args.mode))
    arms = config.subject_arms()
    if not 0 <= args.subject < len(arms):
        raise ConfigError(f"subject must be in [0, {len(arms) - 1}]")
    model = build_model(config)
    seed = trial_seed(config.seed, args.subject, scenario.name, args.rep)
    trial = _run_one((scenario, arms[args.subject], model, config.profile, config.sensor,
                      config.controller, config.stiffness, args.subject, args.rep, seed))
    path = os.path.join(_makedirs(args.out), trial.trial_id + ".csv")
    export_csv(trial, path)
    outcome = trial.outcome.value if trial.outcome else "unclassified"
    print(f"{trial.trial_id}: {outcome} ({trial.terminal}, {len(trial.steps)} steps) -> {path}")


def _print_summary(rows):
    print(f"{'scenario':22s} {'n':>4s} {'track':>7s} {'band':>6s} {'ok':>4s} {'caught':>6s} "
          f"{'missed':>6s} {'halt':>4s} {'peakF':>6s}")
    for r in rows:
        o = r.outcomes
        print(f"{r.scenario:22s} {r.n_trials:4d} {r.tracking_mean:7.3f} {r.band_fraction:6.2f} "
              f"{o['success']:4d} {o['caught']:6d} {o['missed']:6d} {o['halted']:4d} "
              f"{r.max_peak_force:6.2f}")


def cmd_matrix(args, config):
    if args.jobs < 1:
        raise ConfigError("--jobs must be >= 1")
    t0 = time.perf_counter()
    out = args.out
    result = run_matrix(config, out, jobs=args.jobs)
    if config.model == "fitted":
        calibration_sweep(config).to_csv(os.path.join(out, "sweep.csv"))
    log.info("%d trials in %.1f s", len(result.logs), time.perf_counter() - t0)
    _print_summary(result.summary)
    if args.report:
        build_report(out)


def cmd_report(args, config):
    if not os.path.isdir(args.logs):
        raise ConfigError(f"{args.logs} is not a directory")
    for path in build_report(args.logs, args.out or args.logs, figures=not args.no_figures):
        print(path)


COMMANDS = {"calibrate": cmd_calibrate, "fit": cmd_fit, "trial": cmd_trial,
            "matrix": cmd_matrix, "report": cmd_report}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command != "report":
        args.out = args.out or "out"
    try:
        config = resolve_config(args)
        COMMANDS[args.command](args, config)
    except CapproxError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return IO_EXIT_CODE
    return 0


if __name__ == "__main__":
    sys.exit(main())
