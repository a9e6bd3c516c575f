"""Scenario description and its TOML loader.

See ``configs/`` and the README for the full file layout.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .channel import ChannelConfig, CongestionWindow, LinkConfig
from .dynamics import ModelParams
from .mpc import MpcConfig
from .pid import PidGains


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class PidConfig:
    gains: PidGains = field(default_factory=PidGains)
    home: tuple[float, float, float] | None = (0.0, 4.0, 0.8)


@dataclass(frozen=True)
class SwitchConfig:
    e_th: float = 0.15
    s_th: float = 6.0
    window: int = 50
    debounce: int = 3
    enabled: bool = True
    # no valid command for this long marks the channel down (datagram mode)
    down_timeout: float = 0.15

    def __post_init__(self):
        if self.e_th <= 0:
            raise ValueError("e_th must be positive")
        if self.window < 1 or self.debounce < 1:
            raise ValueError("window and debounce must be >= 1")


@dataclass(frozen=True)
class TrajectoryConfig:
    kind: str = "circle"
    center: tuple[float, float, float] = (0.0, 4.0, 0.0)
    radius: float = 1.0
    omega: float = 0.5
    height: float = 0.8
    waypoints: tuple[tuple[float, float, float, float], ...] = ()

    def __post_init__(self):
        if self.kind not in ("circle", "hover", "waypoints"):
            raise ValueError(f"unknown trajectory kind {self.kind!r}")
        if self.radius < 0:
            raise ValueError("radius must be non-negative")
        if self.kind == "waypoints" and len(self.waypoints) < 1:
            raise ValueError("waypoint trajectory needs at least one waypoint")


@dataclass(frozen=True)
class ScenarioConfig:
    model: ModelParams = field(default_factory=ModelParams)
    mpc: MpcConfig = field(default_factory=MpcConfig)
    pid: PidConfig = field(default_factory=PidConfig)
    switch: SwitchConfig = field(default_factory=SwitchConfig)
    channel: ChannelConfig = field(default_factory=ChannelConfig)
    trajectory: TrajectoryConfig = field(default_factory=TrajectoryConfig)
    duration: float = 30.0
    tick: float = 0.01
    takeoff_time: float = 3.0
    # ground position the takeoff ramp starts from; defaults below the reference start
    start: tuple[float, float] | None = None
    output: str | None = None
    name: str = "scenario"

    def __post_init__(self):
        if self.duration <= 0:
            raise ValueError("duration must be positive")
        if self.tick <= 0:
            raise ValueError("tick must be positive")
        if self.tick > self.mpc.t_exec / 2 + 1e-12:
            raise ValueError("tick must be at most half the MPC execution period")
        if self.takeoff_time < 0:
            raise ValueError("takeoff_time must be non-negative")

    @property
    def seed(self) -> int:
        return self.channel.seed

    def with_seed(self, seed: int) -> "ScenarioConfig":
        return dataclasses.replace(self, channel=dataclasses.replace(self.channel, seed=seed))

    def replace(self, **kw) -> "ScenarioConfig":
        return dataclasses.replace(self, **kw)


def _take(d: dict, cls, section: str, convert: dict[str, Any] | None = None):
    d = dict(d)
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(d) - names
    if unknown:
        raise ConfigError(f"[{section}] unknown keys: {', '.join(sorted(unknown))}")
    for key, fn in (convert or {}).items():
        if key in d:
            d[key] = fn(d[key])
    try:
        return cls(**d)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[{section}] {exc}") from exc


def _matrix(n: int):
    def conv(val):
        a = np.asarray(val, dtype=np.float64)
        if a.ndim == 1:
            if a.shape != (n,):
                raise ConfigError(f"weight diagonal must have {n} entries")
            return np.diag(a)
        return a
    return conv


def _tuple(val):
    return tuple(float(x) for x in val)


def _pairs(val):
    return tuple(tuple(float(x) for x in item) for item in val)


def _link(d: dict, section: str) -> LinkConfig:
    d = dict(d)
    windows = tuple(_take(w, CongestionWindow, f"{section}.congestion")
                    for w in d.pop("congestion", []))
    d["congestion"] = windows
    return _take(d, LinkConfig, section)


def from_dict(raw: dict) -> ScenarioConfig:
    raw = dict(raw)
    model = _take(raw.pop("model", {}), ModelParams, "model", {"u_th": _tuple})

    mpc_raw = dict(raw.pop("mpc", {}))
    conv = {"Q_x": _matrix(8), "Q_u": _matrix(3), "Q_du": _matrix(3)}
    names = {f.name for f in dataclasses.fields(MpcConfig)}
    unknown = set(mpc_raw) - names
    if unknown:
        raise ConfigError(f"[mpc] unknown keys: {', '.join(sorted(unknown))}")
    for key, fn in conv.items():
        if key in mpc_raw:
            mpc_raw[key] = fn(mpc_raw[key])
    try:
        mpc = MpcConfig.from_model(model, **mpc_raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[mpc] {exc}") from exc

    pid_raw = dict(raw.pop("pid", {}))
    home = pid_raw.pop("home", PidConfig.home)
    if home is not None and len(home) == 0:
        home = None
    gains = _take(pid_raw, PidGains, "pid", {k: _tuple for k in ("K_P", "K_I", "K_D")})
    pid = PidConfig(gains=gains, home=None if home is None else _tuple(home))

    switch = _take(raw.pop("switch", {}), SwitchConfig, "switch")
    traj = _take(raw.pop("trajectory", {}), TrajectoryConfig, "trajectory",
                 {"center": _tuple, "waypoints": _pairs})

    ch_raw = dict(raw.pop("channel", {}))
    up = _link(ch_raw.pop("uplink", {}), "channel.uplink")
    down = _link(ch_raw.pop("downlink", {}), "channel.downlink")
    channel = _take(ch_raw, ChannelConfig, "channel",
                    {"sinr_schedule": _pairs, "sinr_latency_coupling": _pairs})
    channel = dataclasses.replace(channel, uplink=up, downlink=down)
    if "seed" in raw:
        channel = dataclasses.replace(channel, seed=int(raw.pop("seed")))

    output = raw.pop("output", {})
    if isinstance(output, dict):
        output = output.get("dir")
    top = {"start": _tuple}
    return _take(dict(raw, model=model, mpc=mpc, pid=pid, switch=switch, channel=channel,
                      trajectory=traj, output=output), ScenarioConfig, "scenario", top)


def load_config(path: str | Path) -> ScenarioConfig:
    path = Path(path)
    try:
        with path.open("rb") as fh:
            raw = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    raw.setdefault("name", path.stem)
    return from_dict(raw)
