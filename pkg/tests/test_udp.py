import socket
import subprocess
import sys
import threading
import time

import numpy as np
import pytest

from edgeswitch.config import ScenarioConfig
from edgeswitch.switching import Mode
from edgeswitch.udp import parse_endpoint, run_uav

TOML = "duration = {duration}\n[trajectory]\nkind = \"circle\"\n"


def free_port():
    with socket.socket(socket.AF_INET, socket.SOCK_DGRAM) as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


def start_edge(tmp_path, duration):
    cfg_path = tmp_path / "udp.toml"
    cfg_path.write_text(TOML.format(duration=duration))
    port = free_port()
    proc = subprocess.Popen(
        [sys.executable, "-m", "edgeswitch", "run", str(cfg_path), "--transport", "udp",
         "--role", "edge", "--endpoint", f"127.0.0.1:{port}", "--idle-timeout", "1.0"],
        stdout=subprocess.PIPE, stderr=subprocess.STDOUT, text=True)
    line = proc.stdout.readline()
    if "listening" not in line:
        proc.kill()
        pytest.fail(f"edge did not start: {line}{proc.stdout.read()}")
    return proc, ("127.0.0.1", port)


def test_parse_endpoint():
    assert parse_endpoint("127.0.0.1:9000") == ("127.0.0.1", 9000)
    with pytest.raises(ValueError):
        parse_endpoint("localhost")


def test_loopback_downlink_latency(tmp_path):
    proc, addr = start_edge(tmp_path, 4.0)
    try:
        res = run_uav(ScenarioConfig(duration=4.0), addr)
    finally:
        proc.wait(timeout=20)
    l_d = np.array([a.estimate.l_d for a in res.arrivals if a.estimate is not None])
    assert len(l_d) > 40
    assert np.mean(l_d < 0.005) > 0.99
    modes = res.metrics.column("mode")
    assert modes[-1] == Mode.OFFBOARD.value


def test_killed_edge_switches_to_onboard(tmp_path):
    proc, addr = start_edge(tmp_path, 5.0)
    killed = {}

    def kill():
        time.sleep(2.5)
        killed["t"] = time.monotonic()
        proc.kill()

    cfg = ScenarioConfig(duration=4.0)
    t_start = time.monotonic()
    th = threading.Thread(target=kill)
    th.start()
    try:
        res = run_uav(cfg, addr)
    finally:
        th.join()
        proc.wait(timeout=5)
    last_arrival = max(a.t_arrival for a in res.arrivals)
    t = res.metrics.column("t")
    modes = res.metrics.column("mode")
    after = (t > last_arrival) & (modes == Mode.ONBOARD.value)
    assert after.any()
    t_switch = t[np.argmax(after)]
    # within 3 command periods of the last command heard from the edge
    assert t_switch - last_arrival <= 3 * cfg.mpc.t_exec + cfg.tick
    assert np.all(modes[t >= t_switch] == Mode.ONBOARD.value)
    assert killed["t"] - t_start < 4.0
