"""Onboard switching strategy driven by downlink latency and SINR.

Two error estimates are formed per valid command arrival:

* ``e_c``: speed times the inter-arrival time of consecutive valid commands,
* ``e_d``: speed times creation-to-arrival latency plus ``t_exec`` per dropped command,

and their mean feeds a sliding window. The error gate and the SINR gate are in
series; both must pass for the edge controller to stay in charge.
"""

from __future__ import annotations

import enum
import math
from collections import deque
from dataclasses import dataclass, field


class Mode(str, enum.Enum):
    OFFBOARD = "offboard"
    ONBOARD = "onboard"


@dataclass(frozen=True)
class KpiSample:
    t_arrival: float
    t_created: float
    k: int
    v_prev: float
    sinr: float
    t_arrival_prev: float

    def __post_init__(self):
        if self.t_arrival < self.t_created:
            raise ValueError("command arrived before it was created")
        if self.k < 0:
            raise ValueError("dropped count must be non-negative")
        if self.t_arrival < self.t_arrival_prev:
            raise ValueError("arrival times must be non-decreasing")


@dataclass(frozen=True)
class ErrorEstimate:
    e_c: float
    e_d: float
    e_mean: float
    l_c: float
    l_d: float


@dataclass(frozen=True)
class SwitchDecision:
    t: float
    mode: Mode
    error_gate: bool
    sinr_gate: bool
    windowed_error: float
    sinr: float


def latency_c(t_arr_i: float, t_arr_prev_valid: float) -> float:
    """Time between two consecutive valid command arrivals."""
    d = t_arr_i - t_arr_prev_valid
    if d < 0:
        raise ValueError(f"arrival times go backwards ({t_arr_prev_valid} -> {t_arr_i})")
    return d


def latency_d(t_arr: float, t_created: float, k: int, t_exec: float) -> float:
    """Creation-to-arrival latency, charged ``t_exec`` per dropped command."""
    if t_arr < t_created:
        raise ValueError("command arrived before it was created")
    if k < 0:
        raise ValueError("dropped count must be non-negative")
    return t_arr - t_created + t_exec * k


def estimate_error(sample: KpiSample, t_exec: float) -> ErrorEstimate:
    l_c = latency_c(sample.t_arrival, sample.t_arrival_prev)
    l_d = latency_d(sample.t_arrival, sample.t_created, sample.k, t_exec)
    e_c = sample.v_prev * l_c
    e_d = sample.v_prev * l_d
    return ErrorEstimate(e_c=e_c, e_d=e_d, e_mean=(e_c + e_d) / 2, l_c=l_c, l_d=l_d)


@dataclass
class SwitchState:
    capacity: int = 50
    debounce: int = 3
    mode: Mode = Mode.OFFBOARD
    error_gate: bool = True
    sinr_gate: bool = True
    window: deque = field(default=None)
    windowed_error: float = 0.0
    sinr_history: deque = field(default=None)
    channel_down: bool = False

    def __post_init__(self):
        if self.capacity < 1:
            raise ValueError("window capacity must be >= 1")
        if self.debounce < 1:
            raise ValueError("debounce must be >= 1")
        if self.window is None:
            self.window = deque(maxlen=self.capacity)
        if self.sinr_history is None:
            self.sinr_history = deque(maxlen=self.debounce)

    @property
    def window_full(self) -> bool:
        return len(self.window) == self.capacity


def update_window(st: SwitchState, e: ErrorEstimate | float) -> SwitchState:
    """Push one combined estimate; the oldest sample falls out beyond capacity."""
    st.window.append(e.e_mean if isinstance(e, ErrorEstimate) else float(e))
    st.windowed_error = math.fsum(st.window) / len(st.window)
    return st


def decide(st: SwitchState, sinr: float, e_th: float, s_th: float, t: float = 0.0,
           ) -> SwitchDecision:
    """Evaluate both gates and set the mode.

    The error gate is held open until the window has filled once. The SINR
    gate fails once ``debounce`` consecutive samples fall below ``s_th``, or
    immediately when the channel is flagged down.
    """
    if e_th <= 0:
        raise ValueError("error threshold must be positive")
    st.sinr_history.append(sinr)
    if st.window_full:
        st.error_gate = st.windowed_error < e_th
    low = (len(st.sinr_history) == st.debounce
           and all(s < s_th for s in st.sinr_history))
    st.sinr_gate = not (low or st.channel_down)
    st.mode = Mode.OFFBOARD if (st.error_gate and st.sinr_gate) else Mode.ONBOARD
    return SwitchDecision(t=t, mode=st.mode, error_gate=st.error_gate,
                          sinr_gate=st.sinr_gate, windowed_error=st.windowed_error,
                          sinr=sinr)


@dataclass
class ArrivalTracker:
    """Turns the raw command arrival stream into KPI samples.

    A delivered command is valid when its sequence number is newer than the
    last valid one; the gap in sequence numbers is the dropped count ``k``.
    The speed attached to each sample is the one recorded at the previous
    valid arrival.
    """

    last_seq: int | None = None
    last_arrival: float | None = None
    last_speed: float = 0.0
    k_cumulative: int = 0

    def observe(self, seq: int, t_created: float, t_arrival: float, speed: float,
                sinr: float, hold_speed: bool = False) -> KpiSample | None:
        """Register one arrival; returns ``None`` for stale or first commands.

        With ``hold_speed`` the recorded speed is left unchanged.
        """
        if self.last_seq is not None and seq <= self.last_seq:
            return None
        sample = None
        if self.last_seq is not None:
            k = seq - self.last_seq - 1
            self.k_cumulative += k
            sample = KpiSample(t_arrival=t_arrival, t_created=t_created, k=k,
                               v_prev=self.last_speed, sinr=sinr,
                               t_arrival_prev=self.last_arrival)
        else:
            self.k_cumulative += seq
        self.last_seq = seq
        self.last_arrival = t_arrival
        if not hold_speed:
            self.last_speed = speed
        return sample
