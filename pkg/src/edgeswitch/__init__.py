"""Switching between an edge-hosted MPC and an onboard PID for a networked UAV."""

from .channel import Channel, ChannelConfig, CongestionWindow, LinkConfig
from .config import ConfigError, ScenarioConfig, load_config
from .dynamics import ControlCommand, ModelParams, UavState, saturate, step
from .harness import RunResult, run_scenario
from .metrics import MetricsLog, export_csv, read_csv
from .mpc import EdgeMpc, MpcConfig, ReferencePoint, estimate_uplink_state, solve
from .pid import PidGains, PidState, pid_compute
from .switching import Mode, SwitchState, decide, estimate_error

__all__ = [
    "Channel", "ChannelConfig", "CongestionWindow", "LinkConfig",
    "ConfigError", "ScenarioConfig", "load_config",
    "ControlCommand", "ModelParams", "UavState", "saturate", "step",
    "RunResult", "run_scenario",
    "MetricsLog", "export_csv", "read_csv",
    "EdgeMpc", "MpcConfig", "ReferencePoint", "estimate_uplink_state", "solve",
    "PidGains", "PidState", "pid_compute",
    "Mode", "SwitchState", "decide", "estimate_error",
]
__version__ = "0.1.0"
