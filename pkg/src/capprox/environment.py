"""Simulated world: arm contour, arm tilt motion, garment capture and contact force.

Coordinates are in cm.  ``x`` runs along the arm from the fist (0) to the
shoulder (``length``); ``z`` points up.  Arm tilt is a rotation about the
shoulder, expressed as the vertical displacement of the fist.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, IncompleteLogError, PreconditionError

FOREARM_FRACTION = 0.45
DEFAULT_STIFFNESS = 10.0  # N/cm
MAX_CONTOUR = 5.0
ARRIVAL_TOLERANCE = 0.5

# (fraction of arm length, height offset from top of fist in cm)
_DEFAULT_KNOTS = (
    (0.00, 0.0),    # top of fist
    (0.06, -0.8),
    (0.12, -1.5),   # wrist
    (0.30, -0.6),   # forearm taper
    (0.45, 0.0),    # elbow
    (0.50, 0.4),
    (0.60, 0.2),
    (0.80, 1.2),    # upper arm
    (1.00, 2.0),    # shoulder
)


@dataclass(frozen=True)
class ArmModel:
    length: float = 70.0
    contour_x: tuple = ()
    contour_z: tuple = ()
    fist_height: float = 0.0

    def __post_init__(self):
        if not 50 <= self.length <= 100:
            raise ConfigError(f"arm length {self.length} outside [50, 100] cm")
        if len(self.contour_x) != len(self.contour_z):
            raise ConfigError("contour_x and contour_z differ in length")
        if self.contour_x:
            xs = np.asarray(self.contour_x, dtype=float)
            if np.any(np.diff(xs) <= 0):
                raise ConfigError("contour_x must be strictly increasing")
            if np.max(np.abs(self.contour_z)) > MAX_CONTOUR:
                raise ConfigError(f"contour offsets must lie within +/-{MAX_CONTOUR} cm")

    def contour(self, x):
        if not self.contour_x:
            return np.zeros_like(np.asarray(x, dtype=float)) + 0.0
        return np.interp(x, self.contour_x, self.contour_z)

    @classmethod
    def default(cls, length=70.0, scale=1.0, fist_height=0.0):
        xs = tuple(f * length for f, _ in _DEFAULT_KNOTS)
        zs = tuple(scale * z for _, z in _DEFAULT_KNOTS)
        return cls(length, xs, zs, fist_height)

    @classmethod
    def flat(cls, length=70.0, fist_height=0.0):
        return cls(length, (0.0, length), (0.0, 0.0), fist_height)

    @classmethod
    def from_csv(cls, path, fist_height=0.0):
        """Contour from a CSV of ``x_cm,offset_cm`` rows; length is the last x."""
        data = np.genfromtxt(path, delimiter=",", names=True)
        xs = np.atleast_1d(data[data.dtype.names[0]])
        zs = np.atleast_1d(data[data.dtype.names[1]])
        return cls(float(xs[-1]), tuple(map(float, xs)), tuple(map(float, zs)), fist_height)


def make_subject_arms(n, rng, length_range=(65.0, 76.0), scale_range=(0.8, 1.2),
                      fist_range=(60.0, 75.0)):
    """Synthetic participants: length, contour scale and fist height drawn uniformly."""
    arms = []
    for _ in range(n):
        length = rng.uniform(*length_range)
        scale = rng.uniform(*scale_range)
        fist = rng.uniform(*fist_range)
        arms.append(ArmModel.default(length, scale, fist))
    return arms


def surface_height(arm: ArmModel, tilt: float, x: float) -> float:
    if not -1e-9 <= x <= arm.length + 1e-9:
        raise PreconditionError(f"x={x} outside arm [0, {arm.length}]")
    return float(arm.fist_height + arm.contour(x) + tilt * (1.0 - x / arm.length))


def sensed_surface(arm: ArmModel, tilt: float, x: float) -> float:
    """Surface under the electrode; it overhangs the arm ends, so x is clipped."""
    return surface_height(arm, tilt, min(max(x, 0.0), arm.length))


class MotionKind(str, enum.Enum):
    STATIC = "static"
    SCRIPTED_TILT = "scripted-tilt"
    RANDOM_TILT = "random-tilt"


@dataclass(frozen=True)
class MotionProfile:
    kind: MotionKind = MotionKind.STATIC
    amplitude: float = 20.0
    rate_limit: float = 10.0
    seed: int = 0
    period: float = 10.0
    onset: float = 0.0  # seconds of holding still before any tilt
    # random-tilt: the fist chases a target height that is redrawn on arrival
    # or after an exponential hold (mean hold_time) along an Ornstein-Uhlenbeck path
    reversion: float = 0.3
    volatility: float = 8.0
    hold_time: float = 2.0
    follow_gain: float = 4.0

    def __post_init__(self):
        object.__setattr__(self, "kind", MotionKind(self.kind))
        if not 0 <= self.amplitude <= 20:
            raise ConfigError("motion amplitude must be in [0, 20] cm")
        if self.onset < 0:
            raise ConfigError("onset must be >= 0")
        if self.rate_limit <= 0 or self.period <= 0:
            raise ConfigError("rate_limit and period must be positive")
        if self.reversion <= 0 or self.volatility < 0:
            raise ConfigError("reversion > 0 and volatility >= 0 required")
        if self.hold_time <= 0 or self.follow_gain <= 0:
            raise ConfigError("hold_time and follow_gain must be positive")


@dataclass
class MotionState:
    tilt: float = 0.0
    velocity: float = 0.0
    target: float = 0.0
    last_switch: float = 0.0
    next_switch: float = 0.0
    rng: np.random.Generator = field(default=None, repr=False)

    @classmethod
    def start(cls, profile: MotionProfile, seed=None):
        return cls(rng=np.random.default_rng(profile.seed if seed is None else seed))


def triangle_wave(t, amplitude, period):
    """0 at t=0, +amplitude at period/4, 0 at period/2, -amplitude at 3*period/4."""
    phase = (t / period + 0.25) % 1.0
    return amplitude * (1.0 - 4.0 * abs(phase - 0.5))


def _switch_target(profile, state, now):
    # exact OU transition over the time since the last switch
    decay = np.exp(-profile.reversion * (now - state.last_switch))
    spread = profile.volatility / np.sqrt(2 * profile.reversion) * np.sqrt(1 - decay ** 2)
    goal = state.target * decay + spread * state.rng.standard_normal()
    state.target = float(np.clip(goal, -profile.amplitude, profile.amplitude))
    state.last_switch = now
    state.next_switch = now + state.rng.exponential(profile.hold_time)


def step_motion(profile: MotionProfile, t: float, dt: float, state: MotionState) -> float:
    """Advance the fist tilt from ``t`` to ``t + dt``; updates and returns ``state.tilt``."""
    if dt <= 0:
        raise PreconditionError("dt must be positive")
    amp, vmax = profile.amplitude, profile.rate_limit
    t = t - profile.onset
    if profile.kind is MotionKind.STATIC or t + dt <= 0:
        target = 0.0
    elif profile.kind is MotionKind.SCRIPTED_TILT:
        target = triangle_wave(t + dt, amp, profile.period)
    else:
        arrived = abs(state.target - state.tilt) < ARRIVAL_TOLERANCE
        if arrived or t + dt >= state.next_switch:
            _switch_target(profile, state, t + dt)
        v = np.clip(profile.follow_gain * (state.target - state.tilt), -vmax, vmax)
        target = state.tilt + v * dt
    step = float(np.clip(target - state.tilt, -vmax * dt, vmax * dt))
    new = float(np.clip(state.tilt + step, -amp, amp))
    state.velocity = (new - state.tilt) / dt
    state.tilt = new
    return new


@dataclass(frozen=True)
class GarmentConfig:
    name: str = "gown"
    capture_low: float = 1.0
    capture_high: float = 12.0
    sleeve_length_factor: float = 1.0
    thickness: float = 0.5

    def __post_init__(self):
        if not (np.isfinite(self.capture_low) and np.isfinite(self.capture_high)):
            raise ConfigError("capture band must be finite")
        if self.capture_low >= self.capture_high:
            raise ConfigError("capture band low must be below high")


GOWN = GarmentConfig("gown", 1.0, 12.0, 1.0)
CARDIGAN = GarmentConfig("cardigan", 1.0, 7.0, 1.6)
GARMENTS = {g.name: g for g in (GOWN, CARDIGAN)}


@dataclass
class WorldState:
    t: float = 0.0
    arm_tilt: float = 0.0
    ee_x: float = 0.0
    ee_z: float = 0.0
    applied_force: float = 0.0


def contact_force(penetration: float, stiffness: float = DEFAULT_STIFFNESS) -> float:
    if stiffness <= 0:
        raise PreconditionError("stiffness must be positive")
    return max(0.0, penetration) * stiffness


class Outcome(str, enum.Enum):
    SUCCESS = "success"
    CAUGHT = "caught"
    MISSED = "missed"
    HALTED = "halted"


def classify_outcome(log, garment: GarmentConfig) -> Outcome:
    """Outcome of a traversal from its step records.

    ``log`` needs ``terminal``, ``halted``, ``arm_length`` and ``steps`` whose
    items carry ``ee_x`` and ``true_distance`` (signed gap to the skin).
    """
    if log.terminal is None:
        raise IncompleteLogError("trial has no terminal condition")
    if log.halted:
        return Outcome.HALTED
    xs = np.array([s.ee_x for s in log.steps])
    gaps = np.array([s.true_distance for s in log.steps])
    forearm_end = FOREARM_FRACTION * log.arm_length
    if xs.size == 0 or xs.max() < forearm_end:
        raise IncompleteLogError("trial ended before covering the forearm")
    crossing = gaps[np.argmax(xs >= 0.0)]
    if crossing > garment.capture_high:
        return Outcome.MISSED
    forearm = gaps[(xs >= 0.0) & (xs <= forearm_end)]
    if crossing < garment.capture_low or forearm.mean() < garment.capture_low:
        return Outcome.CAUGHT
    return Outcome.SUCCESS
