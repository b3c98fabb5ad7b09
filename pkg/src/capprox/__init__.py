"""Capacitive proximity distance servoing: sensor model, calibration fit, PD controller
and a trial harness around a simulated arm."""

from .calibration import (
    REFERENCE_MODEL, CalibrationModel, SweepDataset, discriminate_material, evaluate_fit, fit_model,
    inter_subject_spread, run_calibration_sweep,
)
from .controller import ControllerConfig, ControllerState, force_monitor, open_loop_step, pd_step
from .environment import (
    CARDIGAN, GOWN, ArmModel, GarmentConfig, MotionKind, MotionProfile, MotionState, Outcome,
    classify_outcome, contact_force, step_motion, surface_height,
)
from .errors import CapproxError, ConfigError, FitError, IncompleteLogError, PreconditionError
from .harness import Mode, Scenario, TrialLog, export_csv, report_contacts, run_matrix, run_trial
from .sensor import (
    GOWN_ON_TABLE, HUMAN_ARM, MaterialProfile, SensorConfig, detect_contact, estimate_distance,
    forward_delta_c, profiles_distinguishable,
)

__version__ = "0.1.0"
