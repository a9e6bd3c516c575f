"""Closed-loop experiment: UAV loop, edge loop and the simulated channel."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .channel import Channel, Packet
from .config import ScenarioConfig
from .dynamics import ControlCommand, UavState, step
from .metrics import MetricsLog
from .mpc import NONFINITE, EdgeMpc, estimate_uplink_state
from .pid import PidState, fallback_setpoint, pid_compute
from .reference import make_horizon, make_reference
from .switching import (ArrivalTracker, ErrorEstimate, Mode, SwitchState, decide,
                        estimate_error, update_window)

log = logging.getLogger(__name__)

PLANT_DT = 0.005
SETTLE_TIME = 1.0


def _substeps(tick: float) -> tuple[int, float]:
    n = max(1, math.ceil(tick / PLANT_DT - 1e-9))
    return n, tick / n


def takeoff(cfg: ScenarioConfig) -> UavState:
    """Scripted PID climb from the ground; returns the state at mission start (t = 0)."""
    ref0 = make_reference(cfg.trajectory, cfg.model.g)(0.0)
    xy = np.asarray(cfg.start if cfg.start is not None else ref0.x_d[:2], dtype=np.float64)
    height = cfg.trajectory.height
    s = UavState(p=[xy[0], xy[1], 0.0], v=np.zeros(3), t=0.0)
    if cfg.takeoff_time == 0:
        return UavState(p=[xy[0], xy[1], height], v=np.zeros(3), t=0.0)
    pst = PidState()
    n, dt = _substeps(cfg.tick)
    total = cfg.takeoff_time + SETTLE_TIME
    for i in range(int(round(total / cfg.tick))):
        frac = min(1.0, i * cfg.tick / cfg.takeoff_time)
        sp = np.array([xy[0], xy[1], frac * height])
        cmd, pst = pid_compute(sp, s, cfg.tick, cfg.pid.gains, pst, cfg.model.u_th,
                               cfg.model.g)
        for _ in range(n):
            s = step(s, cmd, dt, cfg.model)
    return UavState(p=s.p, v=s.v, phi=s.phi, theta=s.theta, t=0.0)


def takeoff_position(cfg: ScenarioConfig) -> np.ndarray:
    ref0 = make_reference(cfg.trajectory, cfg.model.g)(0.0)
    xy = cfg.start if cfg.start is not None else ref0.x_d[:2]
    return np.array([xy[0], xy[1], cfg.trajectory.height])


def reference_horizon(horizon_fn, t0: float, N: int, dt: float,
                      ) -> tuple[np.ndarray, np.ndarray]:
    """Reference at the N prediction instants following ``t0``."""
    return horizon_fn(t0 + dt * np.arange(1, N + 1))


@dataclass
class EdgeRecord:
    t: float
    state_seq: int
    l_u: float
    p_delayed: np.ndarray
    p_estimated: np.ndarray
    iterations: int
    status: int
    cost: float
    p_true: np.ndarray | None = None


class EdgeController:
    """Edge activity: keeps the freshest uplink state and runs the MPC on demand."""

    def __init__(self, cfg: ScenarioConfig, compensate: bool = True):
        self.cfg = cfg
        self.mpc = EdgeMpc(cfg.mpc, cfg.model)
        self.horizon_fn = make_horizon(cfg.trajectory, cfg.model.g)
        self.compensate = compensate
        self.latest: UavState | None = None
        self.latest_seq = -1
        self.records: list[EdgeRecord] = []

    def receive_state(self, state: UavState, seq: int):
        if seq > self.latest_seq:
            self.latest, self.latest_seq = state, seq

    def activate(self, t: float) -> ControlCommand | None:
        if self.latest is None:
            return None
        l_u = max(0.0, t - self.latest.t)
        if self.compensate:
            x_hat = estimate_uplink_state(self.latest, self.mpc.last_applied, l_u,
                                          self.cfg.model)
        else:
            x_hat = self.latest
        ref = reference_horizon(self.horizon_fn, t, self.cfg.mpc.N, self.cfg.mpc.dt_mpc)
        sol = self.mpc.step(x_hat, ref, t_created=t, state_seq=self.latest_seq)
        if sol.report.status == NONFINITE:
            log.warning("solver failure at t=%.3f", t)
        self.records.append(EdgeRecord(t, self.latest_seq, l_u, self.latest.p.copy(),
                                       x_hat.p.copy(), sol.report.iterations,
                                       sol.report.status, sol.report.cost))
        return sol.command


@dataclass
class Arrival:
    """One downlink command as processed by the UAV, in processing order."""
    seq: int
    t_created: float
    t_arrival: float
    speed: float
    hold: bool
    sinr: float
    estimate: ErrorEstimate | None
    k: int


class UavController:
    """UAV-side activity: plant, switching strategy and the onboard fallback."""

    def __init__(self, cfg: ScenarioConfig, state: UavState, force_mode: Mode | None = None):
        self.cfg = cfg
        self.state = state
        self.force_mode = force_mode
        self.sw = SwitchState(capacity=cfg.switch.window, debounce=cfg.switch.debounce)
        self.tracker = ArrivalTracker()
        self.pid = PidState()
        self.home = fallback_setpoint(cfg.pid.home, takeoff_position(cfg))
        self.hold_point = takeoff_position(cfg)
        self.held: ControlCommand | None = None
        self.last_est: ErrorEstimate | None = None
        self.arrivals: list[Arrival] = []
        self.ref_fn = make_reference(cfg.trajectory, cfg.model.g)
        self._n_sub, self._dt_sub = _substeps(cfg.tick)
        self.mode = Mode.OFFBOARD

    def on_command(self, cmd: ControlCommand, t_arrival: float, sinr: float):
        hold = self.mode == Mode.ONBOARD
        speed = self.state.speed
        sample = self.tracker.observe(cmd.seq, cmd.t_created, t_arrival, speed, sinr,
                                      hold_speed=hold)
        if self.tracker.last_seq != cmd.seq:
            return  # stale, superseded by a newer command
        est = None
        if sample is not None:
            est = estimate_error(sample, self.cfg.mpc.t_exec)
            update_window(self.sw, est)
            self.last_est = est
        self.arrivals.append(Arrival(cmd.seq, cmd.t_created, t_arrival, speed, hold, sinr,
                                     est, sample.k if sample else 0))
        self.held = cmd

    def control(self, t: float, sinr: float) -> tuple[ControlCommand, int]:
        sw = self.cfg.switch
        dec = decide(self.sw, sinr, sw.e_th, sw.s_th, t)
        mode = dec.mode if self.force_mode is None else self.force_mode
        if mode == Mode.ONBOARD and self.mode != Mode.ONBOARD:
            self.pid = PidState()
        self.mode = mode
        if mode == Mode.OFFBOARD and self.held is not None:
            return self.held, self.held.seq
        target = self.home if mode == Mode.ONBOARD else self.hold_point
        cmd, self.pid = pid_compute(target, self.state, self.cfg.tick, self.cfg.pid.gains,
                                    self.pid, self.cfg.model.u_th, self.cfg.model.g)
        return cmd, -1

    def advance(self, cmd: ControlCommand):
        s = self.state
        for _ in range(self._n_sub):
            s = step(s, cmd, self._dt_sub, self.cfg.model)
        self.state = s

    def row(self, t: float, sinr: float, cmd: ControlCommand, cmd_seq: int,
            solver_iters: int = -1, solver_status: int = -1) -> tuple:
        s = self.state
        ref = self.ref_fn(t).x_d
        e = self.last_est
        nan = math.nan
        return (
            t, *s.p, *ref[:3], *s.v,
            self.mode.value, self.sw.windowed_error,
            e.e_c if e else nan, e.e_d if e else nan, e.e_mean if e else nan,
            e.l_c if e else nan, e.l_d if e else nan,
            sinr, int(self.sw.error_gate), int(self.sw.sinr_gate),
            self.tracker.k_cumulative, cmd_seq,
            cmd.thrust, cmd.phi_ref, cmd.theta_ref, solver_iters, solver_status,
        )


@dataclass
class RunResult:
    metrics: MetricsLog
    channel: Channel
    arrivals: list[Arrival]
    edge: list[EdgeRecord]
    cfg: ScenarioConfig
    uplink_truth: list[tuple[float, np.ndarray]] = field(default_factory=list)

    def packet_rows(self) -> list[dict]:
        return packet_rows(self.channel, self.arrivals)


def run_scenario(cfg: ScenarioConfig, switching: bool | None = None,
                 compensate: bool = True, force_mode: Mode | None = None) -> RunResult:
    """Simulation-mode run; deterministic for a fixed config and seed.

    ``switching=False`` pins the edge controller in charge (the ablation used
    for comparisons); ``force_mode`` pins either mode explicitly.
    """
    if switching is None:
        switching = cfg.switch.enabled
    if force_mode is None and not switching:
        force_mode = Mode.OFFBOARD
    per_exec = cfg.mpc.t_exec / cfg.tick
    if abs(per_exec - round(per_exec)) > 1e-9:
        raise ValueError("MPC period must be a whole number of ticks")
    per_exec = int(round(per_exec))
    n_ticks = int(round(cfg.duration / cfg.tick))

    ch = Channel(cfg.channel)
    uav = UavController(cfg, takeoff(cfg), force_mode=force_mode)
    edge = EdgeController(cfg, compensate=compensate)
    metrics = MetricsLog()

    for i in range(n_ticks):
        t = i * cfg.tick
        sinr = ch.sinr_at(t)
        uav.state = UavState(p=uav.state.p, v=uav.state.v, phi=uav.state.phi,
                             theta=uav.state.theta, t=t)
        ch.uplink.send(Packet(payload=uav.state, t_send=t, seq=i), t)

        iters = status = -1
        if i % per_exec == 0:
            for pkt in ch.uplink.poll_deliveries(t):
                edge.receive_state(pkt.payload, pkt.seq)
            cmd = edge.activate(t)
            if cmd is not None:
                ch.downlink.send(Packet(payload=cmd, t_send=t, seq=cmd.seq), t)
                rec = edge.records[-1]
                rec.p_true = uav.state.p.copy()
                iters, status = rec.iterations, rec.status

        for pkt in ch.downlink.poll_deliveries(t):
            uav.on_command(pkt.payload, pkt.t_deliver, sinr)

        cmd, cmd_seq = uav.control(t, sinr)
        metrics.append(uav.row(t, sinr, cmd, cmd_seq, iters, status))
        uav.advance(cmd)

    return RunResult(metrics, ch, uav.arrivals, edge.records, cfg)


PACKET_COLUMNS = ("direction", "seq", "state_seq", "t_send", "t_deliver", "dropped",
                  "arrival_order", "speed", "hold", "sinr")


def packet_rows(ch: Channel, arrivals: list[Arrival]) -> list[dict]:
    order = {a.seq: (i, a) for i, a in enumerate(arrivals)}
    rows = []
    for pkt in ch.uplink.log:
        rows.append(dict(direction="up", seq=pkt.seq, state_seq=pkt.seq, t_send=pkt.t_send,
                         t_deliver=pkt.t_deliver, dropped=int(pkt.dropped),
                         arrival_order=-1, speed=math.nan, hold=0, sinr=math.nan))
    for pkt in ch.downlink.log:
        i, a = order.get(pkt.seq, (-1, None))
        rows.append(dict(direction="down", seq=pkt.seq, state_seq=pkt.payload.state_seq,
                         t_send=pkt.t_send, t_deliver=pkt.t_deliver,
                         dropped=int(pkt.dropped), arrival_order=i,
                         speed=a.speed if a else math.nan, hold=int(a.hold) if a else 0,
                         sinr=a.sinr if a else math.nan))
    return rows


def write_packet_log(rows: list[dict], path: str | Path) -> Path:
    """Raw packet log; floats are written with full round-trip precision."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PACKET_COLUMNS)
        for r in rows:
            w.writerow([repr(float(r[c])) if isinstance(r[c], float) else r[c]
                        for c in PACKET_COLUMNS])
    return path
