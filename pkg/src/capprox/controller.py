"""PD distance regulation along z with a constant advance along the arm.

Two readings of the PD output are supported:

``displacement`` (default)
    ``u_z`` is the vertical move for one control period (cm) and the
    derivative is the per-period change in error.
``velocity``
    ``u_z`` is a vertical velocity (cm/s), the derivative is per second and
    the move is ``u_z * dt``.

Both are rate-limited to ``z_rate_limit * dt``.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import ConfigError, PreconditionError

COMMAND_MODES = ("displacement", "velocity")


@dataclass(frozen=True)
class ControllerConfig:
    kp: float = 0.3
    kd: float = 0.2
    d_desired: float = 5.0
    x_step: float = 0.5
    control_rate: float = 10.0
    force_limit: float = 10.0
    z_rate_limit: float = 15.0
    command_mode: str = "displacement"

    def __post_init__(self):
        if self.command_mode not in COMMAND_MODES:
            raise ConfigError(f"command_mode must be one of {COMMAND_MODES}")
        # zero gains are allowed for fault-injection trials
        if self.kp < 0 or self.kd < 0:
            raise ConfigError("gains must be non-negative")
        for name in ("d_desired", "x_step", "control_rate", "force_limit", "z_rate_limit"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")

    @property
    def period(self):
        return 1.0 / self.control_rate


@dataclass
class ControllerState:
    prev_error: float | None = None
    halted: bool = False
    last_command: tuple = (0.0, 0.0)
    last_u_z: float = 0.0
    misuse_count: int = 0


def pd_step(state: ControllerState, d_measured: float, dt: float, config: ControllerConfig):
    """One control period. Returns ``(dx, dz)`` in cm and updates ``state``."""
    if dt <= 0:
        raise PreconditionError("dt must be positive")
    if state.halted:
        state.misuse_count += 1
        state.last_command = (0.0, 0.0)
        state.last_u_z = 0.0
        return state.last_command
    e = config.d_desired - d_measured
    prev = e if state.prev_error is None else state.prev_error
    limit = config.z_rate_limit * dt
    if config.command_mode == "velocity":
        u_z = config.kp * e + config.kd * (e - prev) / dt
        dz = min(max(u_z, -config.z_rate_limit), config.z_rate_limit) * dt
    else:
        u_z = config.kp * e + config.kd * (e - prev)
        dz = min(max(u_z, -limit), limit)
    state.prev_error = e
    state.last_u_z = u_z
    state.last_command = (config.x_step, dz)
    return state.last_command


def open_loop_step(state: ControllerState, config: ControllerConfig):
    if state.halted:
        state.misuse_count += 1
        state.last_command = (0.0, 0.0)
    else:
        state.last_command = (config.x_step, 0.0)
    state.last_u_z = 0.0
    return state.last_command


def force_monitor(force: float, state: ControllerState, config: ControllerConfig) -> bool:
    """Latch ``state.halted`` once ``force`` strictly exceeds the limit."""
    if force < 0:
        raise PreconditionError("force must be non-negative")
    if force > config.force_limit:
        state.halted = True
    return state.halted
