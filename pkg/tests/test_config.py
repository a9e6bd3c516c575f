import numpy as np
import pytest

from edgeswitch.config import ConfigError, ScenarioConfig, from_dict, load_config


@pytest.mark.parametrize("name", ["nominal", "latency", "sinr"])
def test_shipped_configs_load(config_dir, name):
    cfg = load_config(config_dir / f"{name}.toml")
    assert cfg.name == name
    assert cfg.switch.e_th == 0.15 and cfg.switch.s_th == 6.0 and cfg.switch.window == 50


def test_latency_config_contents(config_dir):
    cfg = load_config(config_dir / "latency.toml")
    assert cfg.seed == 7
    for link in (cfg.channel.uplink, cfg.channel.downlink):
        assert len(link.congestion) == 1 and link.congestion[0].t_start == 18.5


def test_weight_diagonals_and_box():
    cfg = from_dict({"mpc": {"N": 10, "Q_u": [1, 2, 3]}, "model": {"u_th": [2.0, 0.3, 0.3]}})
    assert cfg.mpc.N == 10
    assert np.array_equal(cfg.mpc.Q_u, np.diag([1.0, 2.0, 3.0]))
    assert cfg.mpc.u_max == pytest.approx([9.81 + 2.0, 0.3, 0.3])


def test_home_and_start():
    cfg = from_dict({"pid": {"home": [1, 2, 3], "K_P": [1, 1, 1]}, "start": [0.5, 0.5]})
    assert cfg.pid.home == (1.0, 2.0, 3.0) and cfg.pid.gains.K_P == (1.0, 1.0, 1.0)
    assert cfg.start == (0.5, 0.5)
    assert from_dict({"pid": {"home": []}}).pid.home is None


@pytest.mark.parametrize("raw", [
    {"bogus": 1},
    {"mpc": {"horizon": 3}},
    {"switch": {"e_th": -1}},
    {"duration": 0},
    {"tick": 0.04},
    {"trajectory": {"kind": "spiral"}},
    {"channel": {"uplink": {"drop_prob": 2}}},
    {"channel": {"downlink": {"congestion": [{"t_start": 2, "t_end": 1}]}}},
    {"mpc": {"Q_x": [1, 2]}},
])
def test_invalid_configs(raw):
    with pytest.raises(ConfigError):
        from_dict(raw)


def test_load_errors(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.toml")
    bad = tmp_path / "bad.toml"
    bad.write_text("duration = = 3")
    with pytest.raises(ConfigError):
        load_config(bad)


def test_with_seed():
    cfg = ScenarioConfig().with_seed(42)
    assert cfg.seed == 42 and cfg.channel.seed == 42
