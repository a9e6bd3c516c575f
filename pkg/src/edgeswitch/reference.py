"""Reference trajectories for the mission."""

from __future__ import annotations

import math
from typing import Callable

import numpy as np

from .mpc import ReferencePoint


def _point(p, v, g: float) -> ReferencePoint:
    x_d = np.zeros(8)
    x_d[0:3] = p
    x_d[3:6] = v
    return ReferencePoint(x_d=x_d, u_d=np.array([g, 0.0, 0.0]))


def circle_reference(t: float, center, radius: float, omega: float, height: float,
                     g: float = 9.81) -> ReferencePoint:
    """Horizontal circle at ``height`` around ``center`` starting on the +x side."""
    if radius < 0:
        raise ValueError("radius must be non-negative")
    c = np.asarray(center, dtype=np.float64)
    ct, st = math.cos(omega * t), math.sin(omega * t)
    p = np.array([c[0] + radius * ct, c[1] + radius * st, height])
    v = np.array([-radius * omega * st, radius * omega * ct, 0.0])
    return _point(p, v, g)


def hover_reference(position, g: float = 9.81) -> ReferencePoint:
    return _point(np.asarray(position, dtype=np.float64), np.zeros(3), g)


def waypoint_reference(t: float, waypoints, g: float = 9.81) -> ReferencePoint:
    """Piecewise-linear interpolation through timed waypoints ``(t, x, y, z)``."""
    wp = np.asarray(waypoints, dtype=np.float64)
    times = wp[:, 0]
    if t <= times[0]:
        return hover_reference(wp[0, 1:], g)
    if t >= times[-1]:
        return hover_reference(wp[-1, 1:], g)
    i = int(np.searchsorted(times, t, side="right")) - 1
    span = times[i + 1] - times[i]
    s = (t - times[i]) / span
    p = wp[i, 1:] + s * (wp[i + 1, 1:] - wp[i, 1:])
    v = (wp[i + 1, 1:] - wp[i, 1:]) / span
    return _point(p, v, g)


def make_reference(traj, g: float = 9.81) -> Callable[[float], ReferencePoint]:
    """Build ``t -> ReferencePoint`` from a trajectory config."""
    if traj.kind == "circle":
        return lambda t: circle_reference(t, traj.center, traj.radius, traj.omega,
                                          traj.height, g)
    if traj.kind == "hover":
        pos = np.array([traj.center[0], traj.center[1], traj.height])
        ref = hover_reference(pos, g)
        return lambda t: ref
    if traj.kind == "waypoints":
        return lambda t: waypoint_reference(t, traj.waypoints, g)
    raise ValueError(f"unknown trajectory kind {traj.kind!r}")


def make_horizon(traj, g: float = 9.81) -> Callable[[np.ndarray], tuple[np.ndarray, np.ndarray]]:
    """Vectorized form of :func:`make_reference`: times -> ``(Xd, Ud)`` arrays."""
    def inputs(n):
        return np.tile(np.array([g, 0.0, 0.0]), (n, 1))

    if traj.kind == "circle":
        cx, cy = traj.center[0], traj.center[1]
        r, w = traj.radius, traj.omega

        def circle(times):
            times = np.asarray(times, dtype=np.float64)
            ct, st = np.cos(w * times), np.sin(w * times)
            Xd = np.zeros((len(times), 8))
            Xd[:, 0] = cx + r * ct
            Xd[:, 1] = cy + r * st
            Xd[:, 2] = traj.height
            Xd[:, 3] = -r * w * st
            Xd[:, 4] = r * w * ct
            return Xd, inputs(len(times))
        return circle

    ref_fn = make_reference(traj, g)

    def pointwise(times):
        pts = [ref_fn(float(t)) for t in times]
        return np.array([p.x_d for p in pts]), np.array([p.u_d for p in pts])
    return pointwise
