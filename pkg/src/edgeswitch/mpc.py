"""Edge-side controller: uplink delay compensation and receding-horizon MPC."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import _kernels
from .dynamics import ControlCommand, ModelParams, UavState, derivative

log = logging.getLogger(__name__)

# solver status codes shared with the compiled loop
CONVERGED, MAX_ITERS, LINESEARCH_FAILED, NONFINITE = 0, 1, 2, 3
STATUS_NAMES = {0: "converged", 1: "max_iters", 2: "linesearch_failed", 3: "nonfinite"}


def _diag(*d):
    return np.diag(np.asarray(d, dtype=np.float64))


@dataclass
class MpcConfig:
    N: int = 40
    dt_mpc: float = 0.05
    Q_x: np.ndarray = field(default_factory=lambda: _diag(8, 8, 12, 1, 1, 1.5, 2, 2))
    Q_u: np.ndarray = field(default_factory=lambda: _diag(1, 4, 4))
    Q_du: np.ndarray = field(default_factory=lambda: _diag(2, 8, 8))
    u_min: np.ndarray = field(default_factory=lambda: np.array([0.5 * 9.81, -0.35, -0.35]))
    u_max: np.ndarray = field(default_factory=lambda: np.array([1.5 * 9.81, 0.35, 0.35]))
    max_iters: int = 40
    grad_tol: float = 1e-2
    f_exec: float = 20.0
    # line search
    armijo_c: float = 1e-4
    shrink: float = 0.5
    max_backtracks: int = 30
    step0: float = 1e-3

    def __post_init__(self):
        self.Q_x = np.asarray(self.Q_x, dtype=np.float64)
        self.Q_u = np.asarray(self.Q_u, dtype=np.float64)
        self.Q_du = np.asarray(self.Q_du, dtype=np.float64)
        self.u_min = np.asarray(self.u_min, dtype=np.float64)
        self.u_max = np.asarray(self.u_max, dtype=np.float64)
        self.validate()

    @property
    def t_exec(self) -> float:
        return 1.0 / self.f_exec

    def validate(self):
        if self.N < 1:
            raise ValueError("horizon N must be >= 1")
        if self.dt_mpc <= 0 or self.f_exec <= 0:
            raise ValueError("dt_mpc and f_exec must be positive")
        for name, Q, n in (("Q_x", self.Q_x, 8), ("Q_u", self.Q_u, 3), ("Q_du", self.Q_du, 3)):
            if Q.shape != (n, n):
                raise ValueError(f"{name} must be {n}x{n}, got {Q.shape}")
            if not np.allclose(Q, Q.T):
                raise ValueError(f"{name} must be symmetric")
            if np.linalg.eigvalsh(Q).min() < -1e-12:
                raise ValueError(f"{name} must be positive semi-definite")
        if self.u_min.shape != (3,) or self.u_max.shape != (3,):
            raise ValueError("u_min/u_max must have 3 components")
        if not np.all(self.u_min < self.u_max):
            raise ValueError("u_min must be strictly below u_max")

    @classmethod
    def from_model(cls, params: ModelParams, **kw) -> "MpcConfig":
        """Box bounds centered on hover with the model's saturation widths."""
        th = np.asarray(params.u_th)
        center = np.array([params.g, 0.0, 0.0])
        kw.setdefault("u_min", center - th)
        kw.setdefault("u_max", center + th)
        return cls(**kw)


@dataclass(frozen=True)
class ReferencePoint:
    x_d: np.ndarray
    u_d: np.ndarray

    def __post_init__(self):
        x_d = np.asarray(self.x_d, dtype=np.float64).reshape(8)
        u_d = np.asarray(self.u_d, dtype=np.float64).reshape(3)
        if not (np.all(np.isfinite(x_d)) and np.all(np.isfinite(u_d))):
            raise ValueError("reference must be finite")
        object.__setattr__(self, "x_d", x_d)
        object.__setattr__(self, "u_d", u_d)


@dataclass
class CostBreakdown:
    total: float
    state: float
    input: float
    smoothness: float


@dataclass
class SolverReport:
    iterations: int
    cost: float
    grad_norm: float
    status: int

    @property
    def ok(self) -> bool:
        return self.status in (CONVERGED, MAX_ITERS)


@dataclass
class MpcSolution:
    command: ControlCommand
    inputs: np.ndarray          # (N, 3) optimized input sequence
    predicted: np.ndarray       # (N, 8) predicted states
    report: SolverReport


def estimate_uplink_state(delayed: UavState, last_u: ControlCommand, l_u: float,
                          params: ModelParams) -> UavState:
    """Propagate a delayed state forward by ``l_u`` with a first-order Taylor step.

    Position uses the delayed velocity, velocity and attitude use their model
    derivatives evaluated at the delayed state under the last applied input.
    """
    if l_u < 0:
        raise ValueError(f"uplink latency must be non-negative, got {l_u}")
    if l_u == 0:
        return delayed
    d = derivative(delayed, last_u, params)
    return UavState(
        p=delayed.p + delayed.v * l_u,
        v=delayed.v + d[3:6] * l_u,
        phi=delayed.phi + d[6] * l_u,
        theta=delayed.theta + d[7] * l_u,
        t=delayed.t + l_u,
    )


def _stack_reference(ref, N: int) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(ref, ReferencePoint):
        return np.tile(ref.x_d, (N, 1)), np.tile(ref.u_d, (N, 1))
    if isinstance(ref, tuple) and len(ref) == 2 and isinstance(ref[0], np.ndarray):
        Xd, Ud = ref
        if Xd.shape != (N, 8) or Ud.shape != (N, 3):
            raise ValueError(f"reference arrays must be ({N}, 8) and ({N}, 3)")
        return np.ascontiguousarray(Xd, dtype=np.float64), np.ascontiguousarray(Ud, dtype=np.float64)
    refs = list(ref)
    if len(refs) != N:
        raise ValueError(f"expected {N} reference points, got {len(refs)}")
    return (np.array([r.x_d for r in refs]), np.array([r.u_d for r in refs]))


def eval_cost(x_traj, u_traj, u_prev, ref: ReferencePoint | Sequence[ReferencePoint],
              cfg: MpcConfig) -> CostBreakdown:
    """Quadratic tracking cost of a predicted trajectory.

    ``ref`` may be a single point (held over the horizon) or one point per step.
    """
    X = np.asarray(x_traj, dtype=np.float64)
    U = np.asarray(u_traj, dtype=np.float64)
    if X.shape != (cfg.N, 8) or U.shape != (cfg.N, 3):
        raise ValueError(f"expected ({cfg.N}, 8) states and ({cfg.N}, 3) inputs, "
                         f"got {X.shape} and {U.shape}")
    u_prev = np.asarray(u_prev, dtype=np.float64).reshape(3)
    Xd, Ud = _stack_reference(ref, cfg.N)
    js, ju, jdu = _kernels.cost_terms(X, U, u_prev, Xd, Ud, cfg.Q_x, cfg.Q_u, cfg.Q_du)
    return CostBreakdown(total=js + ju + jdu, state=js, input=ju, smoothness=jdu)


def rollout(x0, U, cfg: MpcConfig, params: ModelParams) -> np.ndarray:
    x0 = x0.as_vector() if isinstance(x0, UavState) else np.asarray(x0, dtype=np.float64)
    return _kernels.rollout(x0, np.ascontiguousarray(U, dtype=np.float64), cfg.dt_mpc,
                            params.as_array())


def cost_and_grad(x0, U, u_prev, ref, cfg: MpcConfig, params: ModelParams):
    """Cost of the rollout from ``x0`` under ``U`` and its gradient w.r.t. ``U``."""
    x0 = x0.as_vector() if isinstance(x0, UavState) else np.asarray(x0, dtype=np.float64)
    Xd, Ud = _stack_reference(ref, cfg.N)
    return _kernels.cost_and_grad(x0, np.ascontiguousarray(U, dtype=np.float64),
                                  cfg.dt_mpc, params.as_array(),
                                  np.asarray(u_prev, dtype=np.float64), Xd, Ud,
                                  cfg.Q_x, cfg.Q_u, cfg.Q_du)


def solve(x0: UavState, ref, u_prev: ControlCommand, cfg: MpcConfig, params: ModelParams,
          warm_start: np.ndarray | None = None, *, t_created: float | None = None,
          seq: int = 0, state_seq: int = -1) -> MpcSolution:
    """One receding-horizon solve by projected gradient over the input sequence.

    The search starts from whichever is cheaper: ``warm_start`` or holding
    ``u_prev`` over the horizon.  On a non-finite cost the returned command is
    ``u_prev`` re-stamped, and the report status is ``NONFINITE``.
    """
    xv = x0.as_vector()
    if not np.all(np.isfinite(xv)):
        raise ValueError("initial state must be finite")
    prm = params.as_array()
    Xd, Ud = _stack_reference(ref, cfg.N)
    up = u_prev.as_vector()
    hold = np.tile(up, (cfg.N, 1))
    lo, hi = cfg.u_min, cfg.u_max
    args = (cfg.dt_mpc, prm, up, Xd, Ud, cfg.Q_x, cfg.Q_u, cfg.Q_du)
    U0 = _kernels.project(hold, lo, hi)
    if warm_start is not None:
        ws = _kernels.project(np.ascontiguousarray(warm_start, dtype=np.float64), lo, hi)
        if _kernels.total_cost(xv, ws, *args) < _kernels.total_cost(xv, U0, *args):
            U0 = ws
    U, J, pg, iters, status, _ = _kernels.projected_gradient(
        xv, U0, *args, lo, hi, cfg.max_iters, cfg.grad_tol, cfg.step0,
        cfg.armijo_c, cfg.shrink, cfg.max_backtracks)
    t_created = x0.t if t_created is None else t_created
    report = SolverReport(iterations=int(iters), cost=float(J), grad_norm=float(pg),
                          status=int(status))
    if status == NONFINITE:
        log.warning("MPC cost became non-finite; re-emitting previous command")
        cmd = ControlCommand(up[0], up[1], up[2], t_created=t_created, seq=seq,
                             state_seq=state_seq)
        return MpcSolution(cmd, hold, np.full((cfg.N, 8), np.nan), report)
    X = _kernels.rollout(xv, U, cfg.dt_mpc, prm)
    cmd = ControlCommand(float(U[0, 0]), float(U[0, 1]), float(U[0, 2]),
                         t_created=t_created, seq=seq, state_seq=state_seq)
    return MpcSolution(cmd, U, X, report)


class EdgeMpc:
    """Stateful wrapper holding the warm start and the command sequence counter.

    One instance must not be used by two activities at the same time.
    """

    def __init__(self, cfg: MpcConfig, params: ModelParams):
        self.cfg = cfg
        self.params = params
        self._warm: np.ndarray | None = None
        self._seq = 0
        self.last_applied = ControlCommand.hover(params)

    def reset(self):
        self._warm = None
        self._seq = 0
        self.last_applied = ControlCommand.hover(self.params)

    def step(self, x0: UavState, ref, t_created: float, state_seq: int) -> MpcSolution:
        sol = solve(x0, ref, self.last_applied, self.cfg, self.params,
                    warm_start=self._warm, t_created=t_created, seq=self._seq,
                    state_seq=state_seq)
        self._seq += 1
        if sol.report.status != NONFINITE:
            # shift by one step, repeat the tail
            self._warm = np.vstack([sol.inputs[1:], sol.inputs[-1:]])
        self.last_applied = sol.command
        return sol
