"""Discrete-event model of the cellular uplink and downlink.

Each direction is a :class:`Link` holding its own event queue and RNG stream.
Per packet the link draws a drop decision and a latency; latency is a shifted
log-normal base term plus scheduled congestion and a SINR-band penalty.
"""

from __future__ import annotations

import bisect
import heapq
import math
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np


# delivery times within this of the poll time count as due (float rounding guard)
TIME_EPS = 1e-9


@dataclass(frozen=True)
class CongestionWindow:
    t_start: float
    t_end: float
    added_latency_mean: float = 0.0
    added_latency_jitter: float = 0.0
    added_drop_prob: float = 0.0

    def __post_init__(self):
        if self.t_end <= self.t_start:
            raise ValueError("congestion window must have t_end > t_start")
        if self.added_latency_mean < 0 or self.added_latency_jitter < 0:
            raise ValueError("congestion latency must be non-negative")
        if not 0.0 <= self.added_drop_prob <= 1.0:
            raise ValueError("added_drop_prob must be in [0, 1]")

    def active(self, t: float) -> bool:
        return self.t_start <= t < self.t_end


@dataclass(frozen=True)
class LinkConfig:
    latency_mean: float = 0.005
    latency_jitter: float = 0.0
    latency_min: float = 0.0
    drop_prob: float = 0.0
    congestion: tuple[CongestionWindow, ...] = ()

    def __post_init__(self):
        if self.latency_mean < 0 or self.latency_jitter < 0 or self.latency_min < 0:
            raise ValueError("latencies must be non-negative")
        if self.latency_min > self.latency_mean:
            raise ValueError("latency_min cannot exceed latency_mean")
        if self.latency_jitter > 0 and self.latency_mean == self.latency_min:
            raise ValueError("jitter needs latency_mean > latency_min")
        if not 0.0 <= self.drop_prob <= 1.0:
            raise ValueError("drop_prob must be in [0, 1]")
        windows = tuple(sorted(self.congestion, key=lambda w: w.t_start))
        for a, b in zip(windows, windows[1:]):
            if b.t_start < a.t_end:
                raise ValueError("congestion windows overlap")
        object.__setattr__(self, "congestion", windows)


@dataclass(frozen=True)
class ChannelConfig:
    uplink: LinkConfig = field(default_factory=LinkConfig)
    downlink: LinkConfig = field(default_factory=LinkConfig)
    # piecewise-constant SINR trace as (t, dB) breakpoints
    sinr_schedule: tuple[tuple[float, float], ...] = ((0.0, 20.0),)
    # (below_dB, added_latency_s): added when the SINR is below the band edge
    sinr_latency_coupling: tuple[tuple[float, float], ...] = ()
    seed: int = 0
    fifo: bool = True

    def __post_init__(self):
        sched = tuple(sorted((float(t), float(s)) for t, s in self.sinr_schedule))
        if not sched:
            raise ValueError("sinr_schedule needs at least one breakpoint")
        if len({t for t, _ in sched}) != len(sched):
            raise ValueError("duplicate SINR breakpoints")
        object.__setattr__(self, "sinr_schedule", sched)
        coupling = tuple(sorted((float(b), float(a)) for b, a in self.sinr_latency_coupling))
        if any(a < 0 for _, a in coupling):
            raise ValueError("SINR coupling latency must be non-negative")
        object.__setattr__(self, "sinr_latency_coupling", coupling)


def sinr_at(cfg: ChannelConfig, t: float) -> float:
    """SINR in dB from the piecewise-constant trace (right-continuous)."""
    sched = cfg.sinr_schedule
    times = [bp[0] for bp in sched]
    i = bisect.bisect_right(times, t) - 1
    return sched[max(i, 0)][1]


def coupled_latency(cfg: ChannelConfig, sinr: float) -> float:
    """Extra latency of the tightest SINR band that contains ``sinr``."""
    for below, added in cfg.sinr_latency_coupling:
        if sinr < below:
            return added
    return 0.0


def _lognormal(mean: float, std: float, z: float) -> float:
    if std == 0.0 or mean == 0.0:
        return mean
    s2 = math.log1p((std / mean) ** 2)
    return math.exp(math.log(mean) - 0.5 * s2 + math.sqrt(s2) * z)


@dataclass
class Packet:
    payload: Any
    t_send: float
    seq: int
    t_deliver: float = math.nan
    dropped: bool = False


class Link:
    """One direction of the channel with its own queue and random stream."""

    def __init__(self, cfg: LinkConfig, channel: ChannelConfig, rng: np.random.Generator,
                 name: str = "link"):
        self.cfg = cfg
        self.channel = channel
        self.rng = rng
        self.name = name
        self._queue: list[tuple[float, int, Packet]] = []
        self._order = 0
        self._last_deliver = -math.inf
        self._last_poll = -math.inf
        self.log: list[Packet] = []

    def sample_latency(self, t_now: float) -> tuple[bool, float]:
        """Draw (dropped, latency). Always consumes the same number of variates."""
        u_drop, z_base, z_cong = self.rng.random(), *self.rng.standard_normal(2)
        cfg = self.cfg
        latency = cfg.latency_min + _lognormal(cfg.latency_mean - cfg.latency_min,
                                               cfg.latency_jitter, z_base)
        keep = 1.0 - cfg.drop_prob
        for w in cfg.congestion:
            if w.active(t_now):
                latency += _lognormal(w.added_latency_mean, w.added_latency_jitter, z_cong)
                keep *= 1.0 - w.added_drop_prob
        latency += coupled_latency(self.channel, sinr_at(self.channel, t_now))
        return u_drop >= keep, latency

    def send(self, pkt: Packet, t_now: float) -> Packet:
        if pkt.t_send != t_now:
            raise ValueError("packet must be sent at the current time")
        dropped, latency = self.sample_latency(t_now)
        pkt.dropped = dropped
        if not dropped:
            t_deliver = t_now + latency
            if self.channel.fifo:
                t_deliver = max(t_deliver, self._last_deliver)
            self._last_deliver = t_deliver
            pkt.t_deliver = t_deliver
            heapq.heappush(self._queue, (t_deliver, self._order, pkt))
            self._order += 1
        self.log.append(pkt)
        return pkt

    def poll_deliveries(self, t_now: float) -> list[Packet]:
        """Packets due by ``t_now`` in delivery order; each is returned once."""
        if t_now < self._last_poll:
            raise ValueError(f"poll time went backwards ({self._last_poll} -> {t_now})")
        self._last_poll = t_now
        out = []
        while self._queue and self._queue[0][0] <= t_now + TIME_EPS:
            out.append(heapq.heappop(self._queue)[2])
        return out

    @property
    def in_flight(self) -> int:
        return len(self._queue)


class Channel:
    """Uplink plus downlink sharing one SINR trace and one seed."""

    def __init__(self, cfg: ChannelConfig):
        self.cfg = cfg
        up_rng, down_rng = (np.random.default_rng(s)
                            for s in np.random.SeedSequence(cfg.seed).spawn(2))
        self.uplink = Link(cfg.uplink, cfg, up_rng, "uplink")
        self.downlink = Link(cfg.downlink, cfg, down_rng, "downlink")

    def sinr_at(self, t: float) -> float:
        return sinr_at(self.cfg, t)


def send(link: Link, pkt: Packet, t_now: float) -> Packet:
    return link.send(pkt, t_now)


def poll_deliveries(link: Link, t_now: float) -> list[Packet]:
    return link.poll_deliveries(t_now)


def interval_below(cfg: ChannelConfig, threshold: float, t_end: float,
                   ) -> list[tuple[float, float]]:
    """Intervals within ``[0, t_end)`` where the SINR trace is below ``threshold``."""
    out: list[tuple[float, float]] = []
    sched: Sequence[tuple[float, float]] = cfg.sinr_schedule
    for i, (t, s) in enumerate(sched):
        nxt = sched[i + 1][0] if i + 1 < len(sched) else t_end
        a, b = max(t, 0.0), min(nxt, t_end)
        if s < threshold and b > a:
            if out and out[-1][1] == a:
                out[-1] = (out[-1][0], b)
            else:
                out.append((a, b))
    return out
