import random

import numpy as np
import pytest

from capprox.calibration import REFERENCE_MODEL, CalibrationModel
from capprox.config import config_from_dict
from capprox.controller import ControllerConfig
from capprox.environment import GOWN, ArmModel, Outcome
from capprox.errors import ConfigError
from capprox.harness import (
    LOG_HEADER, Mode, Scenario, StepRecord, TrialLog, export_csv, load_logs, read_csv,
    report_contacts, run_matrix, run_trial, summarize, write_summary,
)

ARM = ArmModel.default(70.0, 1.0, 65.0)


def trial(name="t", start=5.0, mode=Mode.CLOSED_LOOP, seed=0, **kw):
    return run_trial(Scenario(name, start, mode, **kw), ARM, REFERENCE_MODEL,
                     rng=np.random.default_rng(seed))


def step(t, contact=False, force=0.0, halted=False):
    return StepRecord(t, 0.0, 0.0, 5.0, 12.0, 5.0, 0.0, 0.0, force, contact, halted)


# single trials

def test_closed_loop_from_twenty_succeeds():
    tr = trial(start=20.0)
    assert tr.outcome is Outcome.SUCCESS
    est = np.array([s.d_estimate for s in tr.steady_steps()])
    assert np.all((est >= 4.0) & (est <= 6.0))


@pytest.mark.parametrize("start", [15.0, 20.0])
def test_open_loop_high_start_fails(start):
    tr = trial(start=start, mode=Mode.OPEN_LOOP)
    assert tr.outcome in (Outcome.MISSED, Outcome.CAUGHT)


def test_timestamps_at_control_period():
    tr = trial()
    t = tr.column("t")
    np.testing.assert_allclose(np.diff(t), 0.1, atol=1e-9)
    assert t[0] == pytest.approx(0.1)


def test_one_terminal_condition():
    tr = trial()
    assert tr.terminal == "traversal"
    assert tr.column("ee_x")[-1] >= ARM.length + 5.0
    assert tr.outcome is not None


def test_budget_terminal():
    tr = trial(time_budget=3.0)
    assert tr.terminal == "budget"
    assert tr.outcome is None  # did not cover the forearm


def test_x_extent_stops_early():
    tr = trial(x_extent=40.0)
    assert tr.terminal == "traversal"
    assert tr.column("ee_x")[-1] == pytest.approx(40.0)


def test_x_extent_beyond_arm_rejected():
    with pytest.raises(ConfigError):
        trial(x_extent=200.0)


def test_negative_start_rejected():
    with pytest.raises(ConfigError):
        Scenario("bad", -1.0)


def test_unfitted_model_rejected():
    with pytest.raises(ConfigError):
        run_trial(Scenario(), ARM, CalibrationModel(0.0, 1.0))


def test_misconfigured_trial_halts_and_latches():
    cfg = ControllerConfig(kp=0.0, kd=0.0)
    tr = run_trial(Scenario("fault", 0.0), ARM, REFERENCE_MODEL, controller_config=cfg,
                   rng=np.random.default_rng(1))
    assert tr.halted and tr.outcome is Outcome.HALTED
    assert tr.terminal == "halt"
    first = next(i for i, s in enumerate(tr.steps) if s.halted)
    assert all(s.halted for s in tr.steps[first:])
    assert tr.steps[-1].force > 10.0


def test_trial_stops_at_halt():
    # the runner never asks a halted controller for another command
    cfg = ControllerConfig(kp=0.0, kd=0.0)
    tr = run_trial(Scenario("fault", 0.0), ARM, REFERENCE_MODEL, controller_config=cfg)
    assert [s.halted for s in tr.steps].count(True) == 1
    assert tr.steps[-1].halted
    assert tr.misuse_count == 0


def test_trial_reproducible():
    a, b = trial(seed=4), trial(seed=4)
    assert [s for s in a.steps] == [s for s in b.steps]


# csv export

def test_export_empty_log(tmp_path):
    p = tmp_path / "e.csv"
    export_csv(TrialLog("e"), p)
    assert p.read_text() == ",".join(LOG_HEADER) + "\n"


def test_export_one_step(tmp_path):
    p = tmp_path / "one.csv"
    export_csv(TrialLog("one", [step(0.1)]), p)
    lines = p.read_text().splitlines()
    assert len(lines) == 2
    assert lines[1].split(",")[0] == "0.100000"
    assert lines[1].endswith(",0,0")


def test_reexport_identical_bytes(tmp_path):
    tr = trial(seed=2)
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    export_csv(tr, a)
    export_csv(read_csv(a), b)
    assert a.read_bytes() == b.read_bytes()


def test_read_rejects_header(tmp_path):
    p = tmp_path / "x.csv"
    p.write_text("foo,bar\n")
    with pytest.raises(ConfigError):
        read_csv(p)


# contacts

def test_four_contact_steps_one_episode():
    flags = [False] * 5 + [True] * 4 + [False] * 5
    steps = [step(0.1 * (k + 1), c, 1.0 * k if c else 0.0) for k, c in enumerate(flags)]
    eps = report_contacts([TrialLog("c", steps)])
    assert len(eps) == 1
    assert eps[0].duration == pytest.approx(0.4)
    assert eps[0].start == pytest.approx(0.5)
    assert eps[0].peak_force == pytest.approx(8.0)


def test_contact_at_log_end_closed():
    steps = [step(0.1), step(0.2, True), step(0.3, True)]
    assert report_contacts([TrialLog("c", steps)])[0].duration == pytest.approx(0.2)


def test_no_contacts_empty():
    assert report_contacts([TrialLog("c", [step(0.1), step(0.2)])]) == []


# matrix

SMALL = {"subjects": 2, "repetitions": 2, "scenarios": [
    {"name": "closed_h10", "start_offset": 10},
    {"name": "open_h20", "start_offset": 20, "mode": "open_loop"},
    {"name": "motion", "start_offset": 5,
     "motion": {"kind": "random-tilt", "rate_limit": 14, "volatility": 60, "hold_time": 6,
                "follow_gain": 10, "onset": 2}}]}


def test_small_matrix_outputs(tmp_path):
    res = run_matrix(config_from_dict(SMALL), tmp_path)
    assert len(res.logs) == 12
    assert len(list((tmp_path / "trials").iterdir())) == 12
    for name in ("trials.csv", "summary.csv", "model.json"):
        assert (tmp_path / name).exists()
    back = load_logs(tmp_path)
    assert [b.trial_id for b in back] == [t.trial_id for t in res.logs]
    assert [b.outcome for b in back] == [t.outcome for t in res.logs]
    for r, q in zip(summarize(back), res.summary):
        assert r.scenario == q.scenario and r.outcomes == q.outcomes
        assert r.tracking_mean == pytest.approx(q.tracking_mean, abs=1e-5, nan_ok=True)


def test_same_seed_byte_identical(tmp_path):
    run_matrix(config_from_dict(SMALL), tmp_path / "a")
    run_matrix(config_from_dict(SMALL), tmp_path / "b")
    assert (tmp_path / "a" / "summary.csv").read_bytes() == \
        (tmp_path / "b" / "summary.csv").read_bytes()
    assert (tmp_path / "a" / "trials.csv").read_bytes() == \
        (tmp_path / "b" / "trials.csv").read_bytes()


def test_different_seed_differs():
    a = run_matrix(config_from_dict({**SMALL, "seed": 1}))
    b = run_matrix(config_from_dict({**SMALL, "seed": 2}))
    assert a.summary[0].tracking_mean != b.summary[0].tracking_mean


def rendered(rows, path):
    # nan fields make dataclass equality useless, so compare the written CSV
    write_summary(rows, path)
    return path.read_bytes()


def test_parallel_matches_serial(tmp_path):
    cfg = config_from_dict(SMALL)
    assert rendered(run_matrix(cfg, jobs=2).summary, tmp_path / "a.csv") == \
        rendered(run_matrix(cfg, jobs=1).summary, tmp_path / "b.csv")


def test_summary_permutation_invariant(tmp_path):
    logs = run_matrix(config_from_dict(SMALL)).logs
    shuffled = logs[:]
    random.Random(3).shuffle(shuffled)
    assert rendered(summarize(shuffled), tmp_path / "a.csv") == \
        rendered(summarize(logs), tmp_path / "b.csv")


def test_unwritable_out_dir(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(OSError):
        run_matrix(config_from_dict(SMALL), blocker / "sub")


def test_pose_block_count(default_matrix):
    pose = [t for t in default_matrix.logs if t.scenario.startswith(("open_h", "closed_h"))]
    assert len(pose) == 10 * 4 * 2 * 5


def test_closed_loop_block_all_success(default_matrix):
    closed = [t for t in default_matrix.logs if t.scenario.startswith("closed_h")]
    assert closed and all(t.outcome is Outcome.SUCCESS for t in closed)


def test_full_matrix_under_budget(default_matrix):
    assert default_matrix.elapsed < 60.0


def test_sleeved_trial_feels_garment():
    # the garment adds thickness to the surface, so force starts earlier
    sc = Scenario("sl", 0.3, sleeved=True, garment=GOWN)
    tr = run_trial(sc, ARM, REFERENCE_MODEL, controller_config=ControllerConfig(kp=0, kd=0))
    assert tr.steps[0].force > 0
