"""Point-mass UAV model with first-order roll/pitch response.

State layout (8): ``[px, py, pz, vx, vy, vz, phi, theta]``.
Input layout (3): ``[thrust, phi_ref, theta_ref]`` with thrust mass-normalized (m/s^2).

Thrust is rotated by ``R = R_y(theta) R_x(phi)`` (yaw fixed at zero), so a
positive pitch accelerates toward +x and a positive roll toward -y.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels

MAX_DT = 0.05
STATE_DIM = 8
INPUT_DIM = 3


@dataclass(frozen=True)
class ModelParams:
    A_x: float = 0.1
    A_y: float = 0.1
    A_z: float = 0.2
    g: float = 9.81
    K_phi: float = 1.0
    K_theta: float = 1.0
    tau_phi: float = 0.2
    tau_theta: float = 0.2
    # saturation bound per channel: thrust deviation from hover, roll, pitch
    u_th: tuple[float, float, float] = (0.5 * 9.81, 0.35, 0.35)

    def __post_init__(self):
        if self.tau_phi <= 0 or self.tau_theta <= 0:
            raise ValueError("attitude time constants must be positive")
        if min(self.A_x, self.A_y, self.A_z) < 0:
            raise ValueError("damping coefficients must be non-negative")
        if len(self.u_th) != 3 or min(self.u_th) <= 0:
            raise ValueError("u_th must be three positive bounds")
        object.__setattr__(self, "u_th", tuple(float(b) for b in self.u_th))

    def as_array(self) -> np.ndarray:
        """Packed parameter vector consumed by the compiled MPC kernels."""
        return np.array(
            [self.A_x, self.A_y, self.A_z, self.g, self.K_phi, self.K_theta,
             self.tau_phi, self.tau_theta],
            dtype=np.float64,
        )


@dataclass(frozen=True)
class UavState:
    p: np.ndarray
    v: np.ndarray
    phi: float = 0.0
    theta: float = 0.0
    t: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "p", np.asarray(self.p, dtype=np.float64).reshape(3))
        object.__setattr__(self, "v", np.asarray(self.v, dtype=np.float64).reshape(3))
        object.__setattr__(self, "phi", float(self.phi))
        object.__setattr__(self, "theta", float(self.theta))
        object.__setattr__(self, "t", float(self.t))

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.p, self.v, [self.phi, self.theta]])

    @classmethod
    def from_vector(cls, x, t: float = 0.0) -> "UavState":
        x = np.asarray(x, dtype=np.float64)
        return cls(p=x[0:3], v=x[3:6], phi=x[6], theta=x[7], t=t)

    @property
    def speed(self) -> float:
        return float(np.linalg.norm(self.v))


@dataclass(frozen=True)
class ControlCommand:
    thrust: float
    phi_ref: float = 0.0
    theta_ref: float = 0.0
    t_created: float = 0.0
    seq: int = -1
    state_seq: int = -1
    # accepted for interface completeness; the plant has no yaw state
    yaw_ref: float = field(default=0.0, compare=False)

    def __post_init__(self):
        if self.thrust < 0:
            raise ValueError(f"thrust must be non-negative, got {self.thrust}")

    def as_vector(self) -> np.ndarray:
        return np.array([self.thrust, self.phi_ref, self.theta_ref], dtype=np.float64)

    @classmethod
    def hover(cls, params: ModelParams, **kw) -> "ControlCommand":
        return cls(thrust=params.g, **kw)


def wrap_angle(a: float) -> float:
    """Wrap to [-pi, pi]; values already inside are returned unchanged."""
    if -math.pi <= a <= math.pi:
        return a
    return (a + math.pi) % (2.0 * math.pi) - math.pi


def derivative_vec(x: np.ndarray, u: np.ndarray, params: ModelParams) -> np.ndarray:
    """Right-hand side on packed vectors."""
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(u))):
        raise FloatingPointError("non-finite state or input")
    phi, theta = x[6], x[7]
    thrust, phi_ref, theta_ref = u
    cphi, sphi = math.cos(phi), math.sin(phi)
    cth, sth = math.cos(theta), math.sin(theta)
    dx = np.empty(STATE_DIM)
    dx[0:3] = x[3:6]
    dx[3] = thrust * cphi * sth - params.A_x * x[3]
    dx[4] = -thrust * sphi - params.A_y * x[4]
    dx[5] = thrust * cphi * cth - params.g - params.A_z * x[5]
    dx[6] = (params.K_phi * phi_ref - phi) / params.tau_phi
    dx[7] = (params.K_theta * theta_ref - theta) / params.tau_theta
    return dx


def derivative(s: UavState, u: ControlCommand, params: ModelParams) -> np.ndarray:
    """State derivative ``[p_dot, v_dot, phi_dot, theta_dot]``."""
    return derivative_vec(s.as_vector(), u.as_vector(), params)


def rk4_vec(x: np.ndarray, u: np.ndarray, dt: float, params: ModelParams) -> np.ndarray:
    k1 = derivative_vec(x, u, params)
    k2 = derivative_vec(x + 0.5 * dt * k1, u, params)
    k3 = derivative_vec(x + 0.5 * dt * k2, u, params)
    k4 = derivative_vec(x + dt * k3, u, params)
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


@functools.lru_cache(maxsize=64)
def _packed(params: ModelParams) -> np.ndarray:
    arr = params.as_array()
    arr.flags.writeable = False
    return arr


def step(s: UavState, u: ControlCommand, dt: float, params: ModelParams) -> UavState:
    """Advance one RK4 step of length ``dt`` (0 < dt <= 0.05 s)."""
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    if dt > MAX_DT:
        raise ValueError(f"dt={dt} exceeds integrator bound {MAX_DT}")
    x, uv = s.as_vector(), u.as_vector()
    if not (np.isfinite(x).all() and np.isfinite(uv).all()):
        raise FloatingPointError("non-finite state or input")
    out = np.empty(STATE_DIM)
    _kernels.rk4(x, uv, dt, _packed(params), out)
    x = out
    x[6] = wrap_angle(x[6])
    x[7] = wrap_angle(x[7])
    return UavState.from_vector(x, t=s.t + dt)


def saturate(u_raw, u_th, hover_thrust: float = 0.0) -> np.ndarray:
    """Clamp each channel to ``[-u_th, u_th]``.

    The thrust channel is clamped as a deviation from ``hover_thrust``;
    with the default of zero this is the plain symmetric clamp.
    """
    u = np.asarray(u_raw, dtype=np.float64)
    bound = np.asarray(u_th, dtype=np.float64)
    center = np.array([hover_thrust, 0.0, 0.0])
    return np.clip(u, center - bound, center + bound)
