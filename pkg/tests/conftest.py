from pathlib import Path

import pytest

from edgeswitch.config import load_config

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


@pytest.fixture(scope="session")
def config_dir():
    return CONFIGS


def scenario(name, **overrides):
    cfg = load_config(CONFIGS / f"{name}.toml")
    return cfg.replace(**overrides) if overrides else cfg


def pytest_terminal_summary(terminalreporter):
    import test_acceptance
    if test_acceptance.RESULTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(test_acceptance.RESULTS):
            terminalreporter.write_line(test_acceptance.RESULTS[n])
