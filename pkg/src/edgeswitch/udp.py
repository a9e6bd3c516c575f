"""Live datagram transport between a UAV process and an edge process.

The UAV clock is the shared epoch: states carry UAV-clock timestamps, and the
edge estimates its offset to that clock at startup (median of ten probe round
trips) so that the commands it stamps are directly comparable on the UAV side.
"""

from __future__ import annotations

import dataclasses
import logging
import queue
import socket
import statistics
import threading
import time
from dataclasses import dataclass, field

from . import wire
from .channel import sinr_at
from .config import ScenarioConfig
from .dynamics import ControlCommand, UavState
from .harness import EdgeController, RunResult, UavController, takeoff, takeoff_position
from .metrics import MetricsLog
from .switching import Mode

log = logging.getLogger(__name__)

SYNC_PROBES = 10


def parse_endpoint(text: str) -> tuple[str, int]:
    host, _, port = text.rpartition(":")
    if not host or not port.isdigit():
        raise ValueError(f"endpoint must be host:port, got {text!r}")
    return host, int(port)


@dataclass
class Received:
    msg_type: int
    seq: int
    obj: object
    t_recv: float


@dataclass
class EndpointStats:
    sent: int = 0
    received: int = 0
    malformed: int = 0
    refused: int = 0


class DatagramEndpoint:
    """One side of the link: a UDP socket, a receive thread and a clock.

    The receive thread answers clock probes immediately and queues everything
    else for a single consumer.
    """

    def __init__(self, bind: tuple[str, int], peer: tuple[str, int] | None = None):
        self._epoch = time.monotonic()
        self.sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        self.sock.bind(bind)
        self.sock.settimeout(0.05)
        self.peer = peer
        if peer is not None:
            self.sock.connect(peer)
        self.inbox: queue.Queue[Received] = queue.Queue()
        self._sync_replies: queue.Queue[tuple[wire.SyncMessage, float]] = queue.Queue()
        self.stats = EndpointStats()
        self.channel_down = False
        self._stop = threading.Event()
        self._thread = threading.Thread(target=self._recv_loop, daemon=True)
        self._thread.start()

    @property
    def address(self) -> tuple[str, int]:
        return self.sock.getsockname()

    def clock(self) -> float:
        return time.monotonic() - self._epoch

    def reset_clock(self):
        self._epoch = time.monotonic()

    def _send(self, data: bytes):
        if self.peer is None:
            return
        try:
            self.sock.send(data)
            self.stats.sent += 1
        except ConnectionRefusedError:
            self.stats.refused += 1
            self.channel_down = True
        except OSError as exc:
            log.debug("send failed: %s", exc)

    def send_state(self, state: UavState, seq: int):
        self._send(wire.encode_state(state, seq))

    def send_command(self, cmd: ControlCommand):
        self._send(wire.encode_command(cmd))

    def _recv_loop(self):
        while not self._stop.is_set():
            try:
                data, addr = self.sock.recvfrom(wire.MAX_DATAGRAM + 1)
            except socket.timeout:
                continue
            except ConnectionRefusedError:
                self.stats.refused += 1
                self.channel_down = True
                continue
            except OSError:
                if self._stop.is_set():
                    return
                continue
            t_recv = self.clock()
            try:
                msg_type, seq, obj = wire.decode(data)
            except wire.WireError as exc:
                self.stats.malformed += 1
                log.debug("dropped malformed datagram: %s", exc)
                continue
            if self.peer is None:
                self.peer = addr
                self.sock.connect(addr)
            self.stats.received += 1
            if msg_type == wire.MSG_SYNC_REQ:
                reply = wire.SyncMessage(seq=seq, t_created=self.clock(),
                                         echo=(obj.t_created, t_recv))
                self._send(wire.encode_sync(reply, reply=True))
            elif msg_type == wire.MSG_SYNC_REP:
                self._sync_replies.put((obj, t_recv))
            else:
                self.inbox.put(Received(msg_type, seq, obj, t_recv))

    def sync(self, probes: int = SYNC_PROBES, timeout: float = 10.0) -> float:
        """Offset of the peer clock relative to ours (peer - own), median of probes."""
        deadline = time.monotonic() + timeout
        offsets = []
        seq = 0
        while len(offsets) < probes:
            if time.monotonic() > deadline:
                raise TimeoutError(f"clock sync got {len(offsets)}/{probes} replies")
            if self.peer is None:
                time.sleep(0.01)
                continue
            self._send(wire.encode_sync(wire.SyncMessage(seq=seq, t_created=self.clock())))
            seq += 1
            try:
                rep, t4 = self._sync_replies.get(timeout=0.1)
            except queue.Empty:
                continue
            t1, t2 = rep.echo
            t3 = rep.t_created
            offsets.append(((t2 - t1) + (t3 - t4)) / 2)
        return statistics.median(offsets)

    def drain(self) -> list[Received]:
        out = []
        while True:
            try:
                out.append(self.inbox.get_nowait())
            except queue.Empty:
                return out

    def close(self):
        self._stop.set()
        self.sock.close()
        self._thread.join(timeout=1.0)


def _sleep_until(clock, t: float):
    delay = t - clock()
    if delay > 0:
        time.sleep(delay)


def run_uav(cfg: ScenarioConfig, edge_addr: tuple[str, int], bind=("127.0.0.1", 0),
            switching: bool | None = None, endpoint: DatagramEndpoint | None = None,
            ) -> RunResult:
    """Real-time UAV loop talking to a remote edge process."""
    if switching is None:
        switching = cfg.switch.enabled
    ep = endpoint or DatagramEndpoint(bind, peer=edge_addr)
    uav = UavController(cfg, takeoff(cfg), force_mode=None if switching else Mode.OFFBOARD)
    metrics = MetricsLog()
    n_ticks = int(round(cfg.duration / cfg.tick))
    last_valid = None
    ep.reset_clock()
    try:
        for i in range(n_ticks):
            t = i * cfg.tick
            _sleep_until(ep.clock, t)
            sinr = sinr_at(cfg.channel, t)
            uav.state = UavState(p=uav.state.p, v=uav.state.v, phi=uav.state.phi,
                                 theta=uav.state.theta, t=t)
            ep.send_state(uav.state, i)
            for msg in ep.drain():
                if msg.msg_type != wire.MSG_COMMAND:
                    continue
                cmd = msg.obj
                if cmd.t_created > msg.t_recv:
                    # residual clock-sync error; never report a negative latency
                    cmd = ControlCommand(cmd.thrust, cmd.phi_ref, cmd.theta_ref,
                                         t_created=msg.t_recv, seq=cmd.seq,
                                         state_seq=cmd.state_seq)
                before = uav.tracker.last_seq
                uav.on_command(cmd, msg.t_recv, sinr)
                if uav.tracker.last_seq != before:
                    last_valid = msg.t_recv
                    ep.channel_down = False
            silent = last_valid is not None and t - last_valid > cfg.switch.down_timeout
            uav.sw.channel_down = ep.channel_down or silent
            cmd, cmd_seq = uav.control(t, sinr)
            metrics.append(uav.row(t, sinr, cmd, cmd_seq))
            uav.advance(cmd)
    finally:
        if endpoint is None:
            ep.close()
    return RunResult(metrics, None, uav.arrivals, [], cfg)


def _warm_up(cfg: ScenarioConfig):
    """One throwaway solve so the compiled kernels are loaded before traffic starts."""
    probe = EdgeController(cfg)
    probe.receive_state(UavState(p=takeoff_position(cfg), v=[0.0, 0.0, 0.0]), 0)
    probe.activate(0.0)


def run_edge(cfg: ScenarioConfig, bind: tuple[str, int], idle_timeout: float = 2.0,
             endpoint: DatagramEndpoint | None = None) -> EdgeController:
    """Serve MPC commands to one UAV until it goes quiet for ``idle_timeout``."""
    ep = endpoint or DatagramEndpoint(bind)
    edge = EdgeController(cfg)
    _warm_up(cfg)
    try:
        offset = ep.sync()
        log.info("clock offset to UAV: %.6f s", offset)
        last_state = ep.clock()
        k = 0
        start = ep.clock()
        while True:
            _sleep_until(ep.clock, start + k * cfg.mpc.t_exec)
            k += 1
            for msg in ep.drain():
                if msg.msg_type == wire.MSG_STATE:
                    edge.receive_state(msg.obj, msg.seq)
                    last_state = msg.t_recv
            now = ep.clock()
            if now - last_state > idle_timeout:
                break
            cmd = edge.activate(now + offset)
            if cmd is not None:
                # stamp the generation time, i.e. after the solve
                ep.send_command(dataclasses.replace(cmd, t_created=ep.clock() + offset))
    finally:
        if endpoint is None:
            ep.close()
    return edge
