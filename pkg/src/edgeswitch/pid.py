"""Onboard fallback: saturated position PID and the go-home planner."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dynamics import ControlCommand, UavState, saturate


@dataclass(frozen=True)
class PidGains:
    K_P: tuple[float, float, float] = (5.0, 5.0, 8.0)
    K_I: tuple[float, float, float] = (0.0, 0.0, 0.6)
    K_D: tuple[float, float, float] = (5.0, 5.0, 5.0)
    integral_clamp: float = 1.0
    # per-axis error magnitude beyond which the integral is frozen, m
    integral_zone: float = 0.1

    def __post_init__(self):
        for name in ("K_P", "K_I", "K_D"):
            val = tuple(float(x) for x in getattr(self, name))
            if len(val) != 3 or not np.all(np.isfinite(val)):
                raise ValueError(f"{name} must be three finite gains")
            object.__setattr__(self, name, val)
        if min(self.K_P) < 0:
            raise ValueError("K_P must be non-negative")
        if self.integral_clamp < 0:
            raise ValueError("integral_clamp must be non-negative")


@dataclass
class PidState:
    integral: np.ndarray = field(default_factory=lambda: np.zeros(3))
    prev_error: np.ndarray = field(default_factory=lambda: np.zeros(3))
    initialized: bool = False

    def copy(self) -> "PidState":
        return PidState(self.integral.copy(), self.prev_error.copy(), self.initialized)


def pid_compute(setpoint, meas: UavState, dt: float, gains: PidGains, st: PidState,
                u_th, g: float = 9.81) -> tuple[ControlCommand, PidState]:
    """One PID update toward ``setpoint``; returns the command and the new state.

    The derivative acts on the measured velocity. Desired world accelerations
    are mapped to thrust/roll/pitch with the small-angle inverse of the model,
    then clamped by :func:`saturate`. The integral only accumulates while the
    output is unsaturated and only on axes whose error lies within
    ``integral_zone``.
    """
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    e = np.asarray(setpoint, dtype=np.float64) - meas.p
    kp, ki, kd = (np.asarray(k) for k in (gains.K_P, gains.K_I, gains.K_D))

    def command(integral):
        a = kp * e + ki * integral - kd * meas.v
        raw = np.array([g + a[2], -a[1] / g, a[0] / g])
        return raw, saturate(raw, u_th, hover_thrust=g)

    inside = np.abs(e) < gains.integral_zone
    candidate = np.clip(st.integral + np.where(inside, e * dt, 0.0),
                        -gains.integral_clamp, gains.integral_clamp)
    raw, u = command(candidate)
    if np.array_equal(raw, u):
        integral = candidate
    else:
        integral = st.integral.copy()
        raw, u = command(integral)
    new_state = PidState(integral=integral, prev_error=e, initialized=True)
    cmd = ControlCommand(thrust=float(u[0]), phi_ref=float(u[1]), theta_ref=float(u[2]),
                         t_created=meas.t)
    return cmd, new_state


def fallback_setpoint(home=None, takeoff=None) -> np.ndarray:
    """Position held while the onboard controller is active.

    ``home`` wins when configured; otherwise the takeoff position is used.
    """
    if home is not None:
        return np.asarray(home, dtype=np.float64).copy()
    if takeoff is None:
        raise ValueError("neither a home nor a takeoff position is configured")
    return np.asarray(takeoff, dtype=np.float64).copy()
