import json
import subprocess
import sys

import pytest

from capprox.cli import main
from capprox.errors import ConfigError, FitError, IncompleteLogError, PreconditionError

SMALL = """
subjects: 2
repetitions: 1
scenarios:
  - {name: closed_h10, start_offset: 10}
  - {name: open_h20, start_offset: 20, mode: open_loop}
  - {name: motion, start_offset: 5, sleeved: true,
     motion: {kind: random-tilt, rate_limit: 14, volatility: 60, hold_time: 6,
              follow_gain: 10, onset: 2}}
"""


@pytest.fixture
def small_config(tmp_path):
    p = tmp_path / "small.yaml"
    p.write_text(SMALL)
    return str(p)


def test_calibrate_then_fit(tmp_path, capsys):
    out = tmp_path / "cal"
    assert main(["--out", str(out), "calibrate"]) == 0
    assert (out / "sweep.csv").exists() and (out / "model.json").exists()
    first = json.loads((out / "model.json").read_text())
    assert main(["fit", str(out / "sweep.csv"), "--out", str(tmp_path / "fit")]) == 0
    second = json.loads((tmp_path / "fit" / "model.json").read_text())
    assert first["alpha"] == pytest.approx(second["alpha"], rel=1e-5)
    assert "alpha=" in capsys.readouterr().out


def test_trial_writes_log(tmp_path, small_config):
    code = main(["--config", small_config, "trial", "closed_h10", "--subject", "1",
                 "--out", str(tmp_path)])
    assert code == 0
    log = tmp_path / "closed_h10__s01__r00.csv"
    assert log.read_text().startswith("t_s,ee_x_cm")


def test_trial_overrides_flags(tmp_path, small_config, capsys):
    code = main(["--config", small_config, "trial", "closed_h10", "--kp", "0", "--kd", "0",
                 "--start-offset", "0", "--out", str(tmp_path)])
    assert code == 0
    assert "halted" in capsys.readouterr().out


def test_matrix_and_report(tmp_path, small_config):
    out = tmp_path / "m"
    assert main(["--config", small_config, "--seed", "3", "--out", str(out), "matrix",
                 "--report"]) == 0
    for name in ("summary.csv", "trials.csv", "model.json", "sweep.csv", "plot_profile.csv",
                 "contacts.csv", "fig_closed_loop.png", "fig_open_loop.png", "fig_motion.png",
                 "fig_calibration.png"):
        assert (out / name).exists(), name
    rep = tmp_path / "r"
    assert main(["report", str(out), "--out", str(rep), "--no-figures"]) == 0
    assert (rep / "summary.csv").read_bytes() == (out / "summary.csv").read_bytes()
    assert not (rep / "fig_motion.png").exists()


def test_matrix_seed_reproducible(tmp_path, small_config):
    for d in ("a", "b"):
        assert main(["--config", small_config, "matrix", "--out", str(tmp_path / d)]) == 0
    assert (tmp_path / "a" / "summary.csv").read_bytes() == \
        (tmp_path / "b" / "summary.csv").read_bytes()


def test_matrix_only_filter(tmp_path, small_config):
    assert main(["--config", small_config, "matrix", "--only", "open_h20",
                 "--out", str(tmp_path)]) == 0
    rows = (tmp_path / "trials.csv").read_text().splitlines()
    assert len(rows) == 1 + 2


def test_exit_codes_distinct():
    codes = {cls.exit_code for cls in (PreconditionError, ConfigError, FitError,
                                       IncompleteLogError)}
    assert len(codes) == 4 and 0 not in codes and 2 not in codes


def test_unknown_scenario_is_config_error(tmp_path):
    assert main(["trial", "nope", "--out", str(tmp_path)]) == ConfigError.exit_code


def test_missing_config_is_config_error():
    assert main(["--config", "/nonexistent.yaml", "matrix"]) == ConfigError.exit_code


def test_bad_controller_flag_is_config_error(tmp_path):
    assert main(["matrix", "--command-mode", "torque", "--out", str(tmp_path)]) == \
        ConfigError.exit_code


def test_fit_error_exit(tmp_path):
    p = tmp_path / "s.csv"
    p.write_text("t_s,location_x_cm,delta_c,distance_cm,subject_id\n0,0,1,5,s\n0.1,0,2,4,s\n")
    assert main(["fit", str(p), "--out", str(tmp_path)]) == FitError.exit_code


def test_report_missing_dir():
    assert main(["report", "/nonexistent/logs"]) == ConfigError.exit_code


def test_io_error_exit(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert main(["calibrate", "--out", str(blocker / "sub")]) == 7


def test_usage_error_exit():
    with pytest.raises(SystemExit) as info:
        main(["bogus"])
    assert info.value.code == 2


def test_console_script_runs():
    res = subprocess.run([sys.executable, "-m", "capprox.cli", "--version"], capture_output=True,
                         text=True)
    assert res.returncode == 0 and "capprox" in res.stdout
