"""Trial runner, evaluation matrix, trial logs and summary statistics."""

from __future__ import annotations

import csv
import enum
import logging
import math
import os
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .calibration import CalibrationModel
from .controller import ControllerConfig, ControllerState, force_monitor, open_loop_step, pd_step
from .environment import (
    DEFAULT_STIFFNESS, GOWN, ArmModel, GarmentConfig, MotionProfile, MotionState, Outcome,
    classify_outcome, contact_force, sensed_surface, step_motion,
)
from .errors import ConfigError, IncompleteLogError
from .sensor import HUMAN_ARM, MaterialProfile, SensorConfig, detect_contact, estimate_distance, \
    forward_delta_c_array

log = logging.getLogger(__name__)

LOG_HEADER = ["t_s", "ee_x_cm", "ee_z_cm", "true_dist_cm", "delta_c", "d_est_cm", "error_cm",
              "u_z_cm_s", "force_n", "contact", "halted"]
BAND = (4.0, 6.0)
MIN_SENSED_GAP = 0.01
TRAVERSAL_MARGIN = 5.0
LOG_DECIMALS = 6


class Mode(str, enum.Enum):
    CLOSED_LOOP = "closed_loop"
    OPEN_LOOP = "open_loop"


@dataclass(frozen=True)
class Scenario:
    name: str = "closed_h05"
    start_offset: float = 5.0
    mode: Mode = Mode.CLOSED_LOOP
    motion: MotionProfile = field(default_factory=MotionProfile)
    garment: GarmentConfig = GOWN
    sleeved: bool = False
    seed: int = 0
    start_margin: float = 10.0
    x_extent: float | None = None
    time_budget: float = 60.0

    def __post_init__(self):
        object.__setattr__(self, "mode", Mode(self.mode))
        # 0 is allowed so that a fault-injection trial can start at fist level
        if self.start_offset < 0 or not math.isfinite(self.start_offset):
            raise ConfigError(f"{self.name}: start_offset must be >= 0")
        if self.start_margin < 0 or self.time_budget <= 0:
            raise ConfigError(f"{self.name}: start_margin >= 0 and time_budget > 0 required")

    def extent(self, arm: ArmModel) -> float:
        limit = arm.length + TRAVERSAL_MARGIN
        if self.x_extent is None:
            return limit
        if self.x_extent > limit + self.start_margin:
            raise ConfigError(f"{self.name}: x_extent beyond arm length plus start margin")
        return self.x_extent


@dataclass(frozen=True)
class StepRecord:
    t: float
    ee_x: float
    ee_z: float
    true_distance: float
    delta_c: float
    d_estimate: float
    error: float
    u_z: float
    force: float
    contact: bool
    halted: bool


@dataclass(frozen=True)
class ContactEpisode:
    start: float
    duration: float
    peak_force: float
    trial: str = ""


@dataclass
class TrialLog:
    scenario: str
    steps: list = field(default_factory=list)
    outcome: Outcome | None = None
    terminal: str | None = None
    halted: bool = False
    arm_length: float = 70.0
    d_desired: float = 5.0
    period: float = 0.1
    misuse_count: int = 0
    subject: int = 0
    rep: int = 0
    seed: int = 0

    @property
    def trial_id(self):
        return f"{self.scenario}__s{self.subject:02d}__r{self.rep:02d}"

    def column(self, name):
        return np.array([getattr(s, name) for s in self.steps], dtype=float)

    def acquisition_index(self):
        """First step whose estimate lies in the steady-state band, or None."""
        for i, s in enumerate(self.steps):
            if BAND[0] <= s.d_estimate <= BAND[1]:
                return i
        return None

    def steady_steps(self):
        i = self.acquisition_index()
        return [] if i is None else self.steps[i:]


def run_trial(scenario: Scenario, arm: ArmModel, model: CalibrationModel,
              profile: MaterialProfile = HUMAN_ARM, sensor_config: SensorConfig | None = None,
              controller_config: ControllerConfig | None = None, rng=None,
              stiffness: float = DEFAULT_STIFFNESS) -> TrialLog:
    """Run one traversal at the control rate and classify its outcome."""
    sensor_config = sensor_config or SensorConfig()
    cfg = controller_config or ControllerConfig()
    if not model.alpha or model.alpha <= 0:
        raise ConfigError("calibration model is not fitted")
    if not scenario.sleeved:
        sensor_config = replace(sensor_config, clothing_attenuation=1.0)
    rng = np.random.default_rng(scenario.seed) if rng is None else rng
    motion = MotionState.start(scenario.motion, seed=int(rng.integers(2 ** 63)))
    thickness = scenario.garment.thickness if scenario.sleeved else 0.0
    x_end = scenario.extent(arm)

    period = cfg.period
    n_sub = max(1, int(round(sensor_config.sample_rate * period)))
    dt_s = period / n_sub
    state = ControllerState()
    trial = TrialLog(scenario.name, arm_length=arm.length, d_desired=cfg.d_desired, period=period)

    ee_x = -scenario.start_margin
    ee_z = sensed_surface(arm, 0.0, ee_x) + scenario.start_offset
    t = 0.0
    k = 0
    gaps = np.empty(n_sub)
    while True:
        for j in range(n_sub):
            tilt = step_motion(scenario.motion, t + j * dt_s, dt_s, motion)
            gaps[j] = ee_z - sensed_surface(arm, tilt, ee_x)
        t_sub = t + dt_s * np.arange(1, n_sub + 1)
        dc, _ = forward_delta_c_array(np.maximum(gaps, MIN_SENSED_GAP), t_sub, profile,
                                      sensor_config, rng)
        k += 1
        t = k * period
        mean_dc = float(dc.mean())
        d_est = estimate_distance(mean_dc, model)
        contact = detect_contact(mean_dc, model)
        if scenario.mode is Mode.CLOSED_LOOP:
            dx, dz = pd_step(state, d_est, period, cfg)
        else:
            dx, dz = open_loop_step(state, cfg)
        ee_x += dx
        ee_z += dz
        gap = ee_z - sensed_surface(arm, motion.tilt, ee_x)
        force = contact_force(thickness - gap, stiffness)
        halted = force_monitor(force, state, cfg)
        # records hold what the CSV holds, so logs read back summarize identically
        trial.steps.append(StepRecord(*(round(float(v), LOG_DECIMALS) for v in (
            t, ee_x, ee_z, gap, mean_dc, d_est, cfg.d_desired - d_est, state.last_u_z, force)),
            contact, halted))
        if halted:
            trial.terminal = "halt"
        elif ee_x >= x_end:
            trial.terminal = "traversal"
        elif t >= scenario.time_budget - 1e-9:
            trial.terminal = "budget"
        if trial.terminal:
            break
    trial.halted = state.halted
    trial.misuse_count = state.misuse_count
    try:
        trial.outcome = classify_outcome(trial, scenario.garment)
    except IncompleteLogError:
        log.warning("%s ended early (%s); outcome unclassified", scenario.name, trial.terminal)
    return trial


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    return f"{v:.6f}"


def export_csv(trial: TrialLog, path):
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(LOG_HEADER)
        for s in trial.steps:
            w.writerow([_fmt(s.t), _fmt(s.ee_x), _fmt(s.ee_z), _fmt(s.true_distance),
                        _fmt(s.delta_c), _fmt(s.d_estimate), _fmt(s.error), _fmt(s.u_z),
                        _fmt(s.force), _fmt(s.contact), _fmt(s.halted)])


def read_csv(path, **meta) -> TrialLog:
    """Inverse of ``export_csv``; metadata not stored in the file comes from ``meta``."""
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header != LOG_HEADER:
            raise ConfigError(f"{path}: unexpected trial log header")
        steps = []
        for row in reader:
            vals = [float(v) for v in row[:9]]
            steps.append(StepRecord(*vals, row[9] == "1", row[10] == "1"))
    trial = TrialLog(meta.pop("scenario", os.path.splitext(os.path.basename(path))[0]), steps, **meta)
    trial.halted = any(s.halted for s in steps)
    return trial


def report_contacts(logs) -> list:
    """Group consecutive contact steps of each log into episodes."""
    episodes = []
    for trial in logs:
        run = []
        for s in trial.steps + [None]:
            if s is not None and s.contact:
                run.append(s)
                continue
            if run:
                episodes.append(ContactEpisode(run[0].t - trial.period, len(run) * trial.period,
                                               max(r.force for r in run), trial.trial_id))
                run = []
    return episodes


def _mean_std(values):
    values = list(values)
    if not values:
        return float("nan"), float("nan")
    n = len(values)
    mean = math.fsum(values) / n
    var = math.fsum((v - mean) ** 2 for v in values) / n
    return mean, math.sqrt(var)


@dataclass(frozen=True)
class ScenarioSummary:
    scenario: str
    n_trials: int
    tracking_mean: float
    tracking_std: float
    estimate_error_mean: float
    estimate_error_std: float
    band_fraction: float
    outcomes: dict
    n_contacts: int
    max_contact_duration: float
    max_peak_force: float
    max_force: float
    n_halted: int


SUMMARY_HEADER = ["scenario", "n_trials", "tracking_mean_cm", "tracking_std_cm",
                  "est_error_mean_cm", "est_error_std_cm", "band_fraction", "success", "caught",
                  "missed", "halted", "unclassified", "n_contacts", "max_contact_s",
                  "max_contact_peak_n", "max_force_n"]


def trial_tracking_error(trial: TrialLog):
    """Mean |true gap - d_desired| over post-acquisition steps (nan if never acquired)."""
    steady = trial.steady_steps()
    if not steady:
        return float("nan")
    return math.fsum(abs(s.true_distance - trial.d_desired) for s in steady) / len(steady)


def trial_band_fraction(trial: TrialLog):
    steady = trial.steady_steps()
    if not steady:
        return 0.0
    return sum(BAND[0] <= s.d_estimate <= BAND[1] for s in steady) / len(steady)


def summarize(logs) -> list:
    """Per-scenario statistics, pooled over post-acquisition steps of all trials."""
    groups = {}
    for trial in logs:
        groups.setdefault(trial.scenario, []).append(trial)
    rows = []
    for name in sorted(groups):
        trials = groups[name]
        steady = [s for tr in trials for s in tr.steady_steps()]
        d_des = trials[0].d_desired
        track = _mean_std(abs(s.true_distance - d_des) for s in steady)
        est = _mean_std(abs(s.d_estimate - d_des) for s in steady)
        in_band = sum(BAND[0] <= s.d_estimate <= BAND[1] for s in steady)
        outcomes = {o.value: 0 for o in Outcome}
        outcomes["unclassified"] = 0
        for tr in trials:
            outcomes[tr.outcome.value if tr.outcome else "unclassified"] += 1
        episodes = report_contacts(trials)
        rows.append(ScenarioSummary(
            name, len(trials), *track, *est, in_band / len(steady) if steady else 0.0, outcomes,
            len(episodes), max((e.duration for e in episodes), default=0.0),
            max((e.peak_force for e in episodes), default=0.0),
            max((s.force for tr in trials for s in tr.steps), default=0.0),
            sum(tr.halted for tr in trials)))
    return rows


def write_summary(rows, path):
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(SUMMARY_HEADER)
        for r in rows:
            w.writerow([r.scenario, r.n_trials] + [f"{v:.6f}" for v in (
                r.tracking_mean, r.tracking_std, r.estimate_error_mean, r.estimate_error_std,
                r.band_fraction)] + [r.outcomes[k] for k in (
                    "success", "caught", "missed", "halted", "unclassified")]
                + [r.n_contacts] + [f"{v:.6f}" for v in (
                    r.max_contact_duration, r.max_peak_force, r.max_force)])


def trial_seed(master_seed: int, subject: int, scenario: str, rep: int) -> int:
    """Order-independent per-trial seed derived from the master seed."""
    ss = np.random.SeedSequence(master_seed, spawn_key=(subject, zlib.crc32(scenario.encode()), rep))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


@dataclass
class MatrixResult:
    summary: list
    logs: list
    model: CalibrationModel


def _run_one(args):
    scenario, arm, model, profile, sensor_config, controller_config, stiffness, subject, rep, seed = args
    trial = run_trial(replace(scenario, seed=seed), arm, model, profile, sensor_config,
                      controller_config, np.random.default_rng(seed), stiffness)
    trial.subject, trial.rep, trial.seed = subject, rep, seed
    return trial


INDEX_HEADER = ["trial_id", "scenario", "subject", "rep", "seed", "mode", "start_offset_cm",
                "motion", "garment", "sleeved", "arm_length_cm", "d_desired_cm", "period_s",
                "terminal", "outcome"]


def run_matrix(config, out_dir=None, jobs: int = 1) -> MatrixResult:
    """Run every (subject, scenario, repetition) trial of a ``MatrixConfig``.

    With ``out_dir`` set, writes ``trials/<trial_id>.csv``, ``trials.csv``
    (the index), ``summary.csv`` and ``model.json``.
    """
    from .config import build_model  # avoid import cycle

    if out_dir is not None:
        try:
            os.makedirs(os.path.join(out_dir, "trials"), exist_ok=True)
        except OSError as exc:
            raise OSError(f"cannot create output directory {out_dir}: {exc}") from exc
        if not os.access(out_dir, os.W_OK):
            raise OSError(f"output directory {out_dir} is not writable")
    model = build_model(config)
    arms = config.subject_arms()
    work = []
    for subject, arm in enumerate(arms):
        for scenario in config.scenarios:
            for rep in range(config.repetitions):
                seed = trial_seed(config.seed, subject, scenario.name, rep)
                work.append((scenario, arm, model, config.profile, config.sensor, config.controller,
                             config.stiffness, subject, rep, seed))
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            logs = list(pool.map(_run_one, work, chunksize=8))
    else:
        logs = [_run_one(w) for w in work]
    summary = summarize(logs)
    if out_dir is not None:
        write_outputs(out_dir, config, logs, summary, model)
    return MatrixResult(summary, logs, model)


def write_outputs(out_dir, config, logs, summary, model):
    by_name = {s.name: s for s in config.scenarios}
    with open(os.path.join(out_dir, "trials.csv"), "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(INDEX_HEADER)
        for tr in logs:
            sc = by_name[tr.scenario]
            export_csv(tr, os.path.join(out_dir, "trials", tr.trial_id + ".csv"))
            w.writerow([tr.trial_id, tr.scenario, tr.subject, tr.rep, tr.seed, sc.mode.value,
                        f"{sc.start_offset:.6f}", sc.motion.kind.value, sc.garment.name,
                        int(sc.sleeved), f"{tr.arm_length:.6f}", f"{tr.d_desired:.6f}",
                        f"{tr.period:.6f}", tr.terminal,
                        tr.outcome.value if tr.outcome else "unclassified"])
    write_summary(summary, os.path.join(out_dir, "summary.csv"))
    model.save(os.path.join(out_dir, "model.json"))


def load_logs(out_dir) -> list:
    """Read back the trial logs listed in ``<out_dir>/trials.csv``."""
    index = os.path.join(out_dir, "trials.csv")
    if not os.path.exists(index):
        raise ConfigError(f"{out_dir} has no trials.csv index")
    logs = []
    with open(index, newline="") as f:
        for row in csv.DictReader(f):
            trial = read_csv(os.path.join(out_dir, "trials", row["trial_id"] + ".csv"),
                             scenario=row["scenario"], subject=int(row["subject"]),
                             rep=int(row["rep"]), seed=int(row["seed"]),
                             arm_length=float(row["arm_length_cm"]),
                             d_desired=float(row["d_desired_cm"]), period=float(row["period_s"]))
            trial.terminal = row["terminal"]
            trial.outcome = None if row["outcome"] == "unclassified" else Outcome(row["outcome"])
            logs.append(trial)
    return logs
